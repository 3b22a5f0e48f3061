"""Command-line front end.

Every command reads a ``key = value`` config (see ``--help`` for the keys),
applies flag overrides, computes all outputs in memory and only then writes
them, each through a temporary file renamed into place. A manifest with the
config text, its hash, the seed, library versions and wall time goes next to
the artifacts.

Exit status: 0 success, 2 invalid configuration, 3 budget exhausted.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import platform
import sys
import tempfile
import time
import warnings

import numpy as np
import scipy

from . import __version__
from .config import KEYS, ConfigInvalid, RunConfig, coerce_value, help_text
from .geometry import Ball, match_hyperplanes
from .harness import jsonable
from .intersection import PhiSource, points_to_csv
from .process import WorldOracle, hitting_subset, sample_hitting
from .reconstruct import BudgetExhausted, run
from . import stats

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_BUDGET = 3

COMMANDS = ("simulate", "points", "reconstruct", "scaling", "paircorr", "tail", "randomize", "clt")

_DESCRIPTIONS = {
    "simulate": "sample the hyperplanes hitting a centred ball (keys: radius, shell_width)",
    "points": "intersection points at distance (r_lo, r_hi] from K",
    "reconstruct": "recover the hyperplanes hitting K from the points outside it",
    "scaling": "variance of Phi_m(rW) against r, with a Poisson control",
    "paircorr": "pair correlation of the intersection points, with a Poisson control",
    "tail": "tail of the stopping radius over repeated reconstructions",
    "randomize": "Cox and thinning variance identities on a test ball",
    "clt": "normality diagnostic for standardized Phi_m(rW)",
}


# ---------------------------------------------------------------------------
# output helpers


def _json(obj) -> str:
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _write_atomic(path: str, data: bytes):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _hyperplane_csv(hs, d: int) -> str:
    lines = [",".join([f"u_{i + 1}" for i in range(d)] + ["s"])]
    for h in hs:
        lines.append(",".join(repr(float(v)) for v in h.as_array()))
    return "\n".join(lines) + "\n"


class Context:
    def __init__(self, cfg: RunConfig, command: str, jobs: int, validate: bool, figures: bool):
        self.cfg = cfg
        self.command = command
        self.jobs = jobs
        self.validate = validate
        self.figures = figures
        self.artifacts: dict[str, bytes] = {}
        self.status = EXIT_OK

    def provenance(self) -> dict:
        return {
            "command": self.command,
            "config_hash": self.cfg.hash(),
            "seed": self.cfg.seed,
            "version": __version__,
        }

    def add(self, name: str, data):
        self.artifacts[name] = data.encode() if isinstance(data, str) else data

    def add_json(self, name: str, payload: dict):
        self.add(name, _json({"provenance": self.provenance(), **payload}))


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(ctx: Context):
    cfg = ctx.cfg
    oracle = sample_hitting(cfg.model(), cfg.radius, cfg.seed, cfg.shell_width)
    ctx.add("hyperplanes.csv", oracle.to_csv())
    ctx.add_json("realization.json", {"realization": oracle.metadata(), "count": len(oracle)})
    if ctx.figures and cfg.d == 2:
        from .plotting import hyperplanes_figure

        ctx.add("hyperplanes.png", hyperplanes_figure(oracle.U, oracle.S, cfg.radius))


def cmd_points(ctx: Context):
    cfg = ctx.cfg
    K = cfg.body_K()
    src = PhiSource(WorldOracle(cfg.model(), cfg.seed, cfg.shell_width), K)
    pts = src.annulus_with_parents(cfg.r_lo, cfg.r_hi)
    X = np.array([p.x for p in pts]).reshape(-1, cfg.d)
    parents = [p.parents for p in pts] if ctx.validate else None
    ctx.add("points.csv", points_to_csv(X, parents))
    ctx.add_json("points.json", {
        "count": len(pts),
        "r_lo": cfg.r_lo,
        "r_hi": cfg.r_hi,
        "K": K.to_dict(),
        "model": cfg.model().to_dict(),
        "parents_included": ctx.validate,
    })


def cmd_reconstruct(ctx: Context):
    cfg = ctx.cfg
    K = cfg.body_K()
    oracle = WorldOracle(cfg.model(), cfg.seed, cfg.shell_width)
    src = PhiSource(oracle, K)
    res = run(src, K, cfg.params())
    payload = res.to_dict(trace=True)
    payload["params"] = cfg.params().resolve(K).to_dict()
    payload["K"] = K.to_dict()
    ctx.add_json("reconstruction.json", payload)
    ctx.add("chi.csv", _hyperplane_csv(res.chi, cfg.d))
    ctx.add("reconstruction_trace.ndjson", res.trace_ndjson())
    if ctx.validate:
        oracle.extend_to(max(oracle.current_radius, K.outradius()))
        truth = hitting_subset(oracle, K)
        pairs, extra, missing = match_hyperplanes(res.chi, truth)
        ctx.add_json("validation.json", {
            "terminated": res.terminated,
            "truth": [h.as_array() for h in truth],
            "matched": len(pairs),
            "extra": [h.as_array() for h in extra],
            "missing": [h.as_array() for h in missing],
            "exact": res.terminated and not extra and not missing,
        })
    if ctx.figures and cfg.d == 2:
        from .plotting import reconstruction_figure

        reach = res.T if res.terminated else res.max_point_distance
        ctx.add("reconstruction.png", reconstruction_figure(res, src.points_in_annulus(-1.0, reach), K))
    if not res.terminated:
        ctx.status = EXIT_BUDGET


def cmd_scaling(ctx: Context):
    cfg = ctx.cfg
    W = cfg.window()
    m = cfg.order()
    rep = stats.variance_scaling(cfg.model(), m, W, cfg.radii, cfg.reps, cfg.seed, jobs=ctx.jobs)
    payload = {"phi": rep.to_dict()}
    ctx.add("scaling.csv", rep.to_csv())
    control = None
    if cfg.control and m == cfg.d:
        lam = stats.pooled_intensity(rep, W)
        control = stats.poisson_scaling(lam, W, cfg.radii, cfg.reps, cfg.seed)
        payload["control"] = control.to_dict()
        payload["slope_gap"] = rep.slope - control.slope
        ctx.add("scaling_control.csv", control.to_csv())
    ctx.add_json("scaling.json", payload)
    if ctx.figures:
        from .plotting import scaling_figure

        ctx.add("scaling.png", scaling_figure(rep, control))


def cmd_paircorr(ctx: Context):
    cfg = ctx.cfg
    edges = cfg.edges()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", stats.AnisotropicModel)
        rep = stats.pair_correlation(cfg.model(), cfg.pc_window, edges, cfg.reps, cfg.seed,
                                     (cfg.fit_lo, cfg.fit_hi), cfg.level, ctx.jobs)
    payload = {"phi": rep.to_dict(), "warnings": [str(w.message) for w in caught]}
    ctx.add("paircorr.csv", rep.to_csv())
    control = None
    if cfg.control:
        control = stats.poisson_pair_correlation(rep.intensity, cfg.d, cfg.pc_window, edges, cfg.reps,
                                                 cfg.seed, cfg.level, ctx.jobs)
        payload["control"] = control.to_dict()
        payload["control_covered_bins"] = int(control.covers().sum())
        ctx.add("paircorr_control.csv", control.to_csv())
    ctx.add_json("paircorr.json", payload)
    if ctx.figures:
        from .plotting import paircorr_figure

        ctx.add("paircorr.png", paircorr_figure(rep, control))


def cmd_tail(ctx: Context):
    cfg = ctx.cfg
    rep = stats.stopping_tail(cfg.model(), cfg.body_K(), cfg.reps, cfg.params(), cfg.seed, ctx.jobs)
    ctx.add("tail.csv", rep.to_csv())
    ctx.add_json("tail.json", {"tail": rep.to_dict()})
    if ctx.figures:
        from .plotting import tail_figure

        ctx.add("tail.png", tail_figure(rep))
    if not rep.valid:
        ctx.status = EXIT_BUDGET


def cmd_randomize(ctx: Context):
    cfg = ctx.cfg
    B = Ball.centered(cfg.d, cfg.test_radius)
    cox = stats.cox_identity(cfg.model(), B, cfg.reps, cfg.seed, jobs=ctx.jobs)
    thinning = stats.thinning_identity(cfg.model(), B, cfg.p, cfg.reps, cfg.seed, jobs=ctx.jobs)
    ctx.add_json("randomize.json", {"cox": cox.to_dict(), "thinning": thinning.to_dict()})
    rows = ["identity,lhs,rhs,rel_error"]
    for r in (cox, thinning):
        rows.append(f"{r.name},{r.lhs!r},{r.rhs!r},{r.rel_error!r}")
    ctx.add("randomize.csv", "\n".join(rows) + "\n")


def cmd_clt(ctx: Context):
    cfg = ctx.cfg
    rep = stats.clt_diagnostic(cfg.model(), cfg.order(), cfg.window(), cfg.clt_radius, cfg.reps, cfg.seed,
                               cfg.clt_level, ctx.jobs)
    ctx.add("clt.csv", rep.to_csv())
    ctx.add_json("clt.json", {"clt": rep.to_dict()})


HANDLERS = {
    "simulate": cmd_simulate,
    "points": cmd_points,
    "reconstruct": cmd_reconstruct,
    "scaling": cmd_scaling,
    "paircorr": cmd_paircorr,
    "tail": cmd_tail,
    "randomize": cmd_randomize,
    "clt": cmd_clt,
}


# ---------------------------------------------------------------------------
# argument handling


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    keys_doc = "config keys (file lines 'key = value', or flags --key-name VALUE):\n" + help_text()
    parser = argparse.ArgumentParser(
        prog="hipsim",
        description="Poisson hyperplane simulation, reconstruction and statistics.",
        epilog=keys_doc + "\n\nexit status: 0 ok, 2 invalid configuration, 3 budget exhausted",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"hipsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        p = sub.add_parser(name, help=_DESCRIPTIONS[name], description=_DESCRIPTIONS[name],
                           epilog=keys_doc, formatter_class=argparse.RawDescriptionHelpFormatter)
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", metavar="FILE", help="key = value config file")
        src.add_argument("--from-manifest", metavar="FILE", help="rerun with the config stored in a manifest")
        p.add_argument("--jobs", type=int, default=1, metavar="N", help="worker processes (results do not depend on N)")
        p.add_argument("--validate", action="store_true",
                       help="oracle-validation mode: export parent hyperplanes and compare against the truth")
        p.add_argument("--figures", action="store_true", help="also render PNG figures")
        keys = p.add_argument_group("config overrides")
        for k in KEYS.values():
            keys.add_argument(_flag(k.name), dest=f"key_{k.name}", metavar="VALUE",
                              help=f"({k.units}) {k.help}")
    return parser


def load_config(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.from_file(args.config)
    elif args.from_manifest:
        with open(args.from_manifest, encoding="utf-8") as fh:
            manifest = json.load(fh)
        cfg = RunConfig.from_text(manifest["config"], args.from_manifest)
    else:
        cfg = RunConfig()
    overrides = {}
    for name in KEYS:
        raw = getattr(args, f"key_{name}")
        if raw is not None:
            overrides[name] = coerce_value(name, raw, _flag(name))
    return cfg.updated(overrides)


def _versions() -> dict:
    import matplotlib

    return {"hipsim": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "matplotlib": matplotlib.__version__, "python": platform.python_version()}


def execute(command: str, cfg: RunConfig, jobs: int = 1, validate: bool = False, figures: bool = False) -> int:
    """Run ``command`` and write its artifacts and manifest; returns the exit status."""
    if command not in HANDLERS:
        raise ConfigInvalid(f"unknown command {command!r}")
    if jobs < 1:
        raise ConfigInvalid("--jobs: must be at least 1")
    cfg.validate(command)
    out = cfg.output_dir()
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ConfigInvalid(f"out: cannot create {out!r}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ConfigInvalid(f"out: directory {out!r} is not writable")
    ctx = Context(cfg, command, jobs, validate, figures)
    t0 = time.perf_counter()
    try:
        HANDLERS[command](ctx)
    except (stats.WindowOverflow, stats.InvalidProbability) as exc:
        raise ConfigInvalid(str(exc)) from None
    except BudgetExhausted:
        ctx.status = EXIT_BUDGET
    manifest = {
        "command": command,
        "config": cfg.to_text(),
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "versions": _versions(),
        "wall_time_s": time.perf_counter() - t0,
        "jobs": jobs,
        "validate": validate,
        "figures": figures,
        "exit_status": ctx.status,
        "artifacts": {name: hashlib.sha256(data).hexdigest() for name, data in sorted(ctx.artifacts.items())},
    }
    for name, data in ctx.artifacts.items():
        _write_atomic(os.path.join(out, name), data)
    _write_atomic(os.path.join(out, f"{command}.manifest.json"), _json(manifest).encode())
    return ctx.status


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        status = execute(args.command, cfg, args.jobs, args.validate, args.figures)
    except ConfigInvalid as exc:
        print(f"hipsim: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"hipsim: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = cfg.output_dir()
    print(f"hipsim {args.command}: wrote artifacts to {out} (exit {status})")
    return status


if __name__ == "__main__":
    sys.exit(main())
