"""Plain-text ``key = value`` run configuration with a documented key registry."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .geometry import Ball, Box, ConvexBody
from .harness import config_hash
from .process import DirectionalModel, InvalidModel
from .reconstruct import ReconstructionParams

OUT_ENV = "HIPSIM_OUT"
DEFAULT_OUT = "hipsim-out"


class ConfigInvalid(ValueError):
    """Bad configuration; the message names the offending line or key."""


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(" ", "").split(",") if p]
    if not parts:
        raise ValueError("expected a comma-separated list of numbers")
    return tuple(float(p) for p in parts)


def _parse_directions(text: str):
    t = text.strip()
    if t.lower() == "isotropic":
        return "isotropic"
    rows = [r for r in t.split(";") if r.strip()]
    return tuple(_parse_floats(r) for r in rows)


def _fmt(value) -> str:
    if value is None:
        return "auto"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return "; ".join(_fmt(v) for v in value)
        return ",".join(_fmt(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class Key:
    name: str
    parse: object
    default: object
    units: str
    help: str
    choices: tuple = ()


KEYS: dict[str, Key] = {
    k.name: k
    for k in [
        Key("d", int, 2, "dimensionless", "ambient dimension"),
        Key("gamma", float, 1.0, "1/length",
            "intensity; the number of hyperplanes hitting a ball of radius R is Poisson(2*gamma*R)"),
        Key("directions", _parse_directions, "isotropic", "unit vectors",
            "directional distribution: 'isotropic' or atoms as rows 'u11,u12; u21,u22'"),
        Key("direction_weights", _parse_floats, None, "probability", "atom weights (default uniform)"),
        Key("seed", int, 0, "integer", "master seed"),
        Key("body", str, "ball", "-", "body K: 'ball' or 'box'", ("ball", "box")),
        Key("body_center", _parse_floats, None, "length", "ball centre (default origin)"),
        Key("body_radius", float, 1.0, "length", "ball radius"),
        Key("body_lo", _parse_floats, None, "length", "box lower corner"),
        Key("body_hi", _parse_floats, None, "length", "box upper corner"),
        Key("radius", float, 10.0, "length", "simulate: radius of the sampled centred ball"),
        Key("shell_width", float, 1.0, "length", "offset width of one random-stream shell"),
        Key("r_lo", float, 0.0, "length", "points: inner distance from K (exclusive)"),
        Key("r_hi", float, 5.0, "length", "points: outer distance from K (inclusive)"),
        Key("incident_tol", float, None, "length",
            "point-on-hyperplane tolerance (auto: 1e-9 * (R(K) + max_radius))"),
        Key("gp_tol", float, 1e-9, "relative", "affine independence threshold"),
        Key("max_radius", float, None, "length",
            "scan budget as a distance from K (auto: 50 * R(K))"),
        Key("polytope_count", int, None, "count", "polytopes to certify (default 2d-1)"),
        Key("early_exit", _parse_bool, False, "bool", "stop early when no hitting hyperplane can exist"),
        Key("incremental", _parse_bool, True, "bool", "update candidates incrementally between stages"),
        Key("search", str, "greedy", "-", "certification search", ("greedy", "exhaustive")),
        Key("m", int, None, "dimensionless", "intersection order m in 1..d (default d)"),
        Key("window_radius", float, 1.0, "length", "radius of the centred ball W"),
        Key("radii", _parse_floats, (4.0, 8.0, 16.0, 32.0), "dimensionless", "scaling factors r of rW"),
        Key("reps", int, 400, "count", "replications (per radius for scaling)"),
        Key("control", _parse_bool, True, "bool", "also run the homogeneous Poisson control"),
        Key("pc_window", float, 20.0, "length", "paircorr: radius of the reference window"),
        Key("bin_width", float, 1.0, "length", "paircorr: radial bin width"),
        Key("bin_max", float, 40.0, "length", "paircorr: largest distance"),
        Key("fit_lo", float, 5.0, "length", "paircorr: lower end of the decay fit range"),
        Key("fit_hi", float, 20.0, "length", "paircorr: upper end of the decay fit range"),
        Key("level", float, 0.99, "probability", "paircorr: confidence level of per-bin intervals"),
        Key("test_radius", float, 5.0, "length", "randomize: radius of the centred test ball B"),
        Key("p", float, 0.5, "probability", "randomize: thinning retention probability"),
        Key("clt_radius", float, 32.0, "dimensionless", "clt: scaling factor r of rW"),
        Key("clt_level", float, 0.01, "probability", "clt: Anderson-Darling significance level"),
        Key("out", str, None, "path", f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})"),
    ]
}


def help_text() -> str:
    lines = []
    for k in KEYS.values():
        extra = f" [{'|'.join(k.choices)}]" if k.choices else ""
        lines.append(f"  {k.name:<18} ({k.units}) {k.help}{extra}; default {_fmt(k.default)}")
    return "\n".join(lines)


def coerce_value(key: str, raw: str, where: str):
    spec = KEYS.get(key)
    if spec is None:
        raise ConfigInvalid(f"{where}: unknown key {key!r}")
    if spec.default is None and raw.strip().lower() in ("auto", "none"):
        return None
    try:
        value = spec.parse(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigInvalid(f"{where}: bad value for {key!r}: {exc}") from None
    if spec.choices and value not in spec.choices:
        raise ConfigInvalid(f"{where}: {key!r} must be one of {', '.join(spec.choices)}")
    return value


def parse_text(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigInvalid(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in values:
            raise ConfigInvalid(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = coerce_value(key, raw, f"{source}:{lineno}")
    return values


class RunConfig:
    """Typed view over the key registry; unset keys take their defaults."""

    def __init__(self, values: dict | None = None):
        values = dict(values or {})
        unknown = set(values) - set(KEYS)
        if unknown:
            raise ConfigInvalid(f"unknown key(s): {', '.join(sorted(unknown))}")
        self.values = {k: values.get(k, spec.default) for k, spec in KEYS.items()}

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name) from None

    @classmethod
    def from_text(cls, text: str, source: str = "<config>") -> RunConfig:
        return cls(parse_text(text, source))

    @classmethod
    def from_file(cls, path) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read(), str(path))

    def updated(self, overrides: dict) -> RunConfig:
        merged = dict(self.values)
        merged.update(overrides)
        return RunConfig(merged)

    def to_text(self) -> str:
        """Serialized form; parsing it gives back an equal config."""
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in self.values.items())

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def hash(self, exclude=("out",)) -> str:
        return config_hash({k: _fmt(v) for k, v in self.values.items() if k not in exclude})

    # -- derived objects

    def output_dir(self) -> str:
        return self.out or os.environ.get(OUT_ENV) or DEFAULT_OUT

    def model(self) -> DirectionalModel:
        try:
            if self.directions == "isotropic":
                if self.direction_weights is not None:
                    raise ConfigInvalid("direction_weights: only valid with atom directions")
                return DirectionalModel.isotropic(self.d, self.gamma)
            atoms = np.array(self.directions, dtype=float)
            if atoms.ndim != 2 or atoms.shape[1] != self.d:
                raise ConfigInvalid(f"directions: atoms must have {self.d} coordinates each")
            w = None if self.direction_weights is None else np.array(self.direction_weights)
            return DirectionalModel(self.d, self.gamma, atoms, w)
        except InvalidModel as exc:
            raise ConfigInvalid(f"model: {exc}") from None

    def body_K(self) -> ConvexBody:
        try:
            if self.body == "ball":
                c = np.zeros(self.d) if self.body_center is None else np.array(self.body_center)
                if c.shape != (self.d,):
                    raise ConfigInvalid(f"body_center: expected {self.d} coordinates")
                return Ball(c, self.body_radius)
            if self.body_lo is None or self.body_hi is None:
                raise ConfigInvalid("body_lo/body_hi: required for a box body")
            lo, hi = np.array(self.body_lo), np.array(self.body_hi)
            if lo.shape != (self.d,) or hi.shape != (self.d,):
                raise ConfigInvalid(f"body_lo/body_hi: expected {self.d} coordinates")
            return Box(lo, hi)
        except ValueError as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"body: {exc}") from None

    def window(self) -> Ball:
        if not self.window_radius > 0:
            raise ConfigInvalid("window_radius: must be positive")
        return Ball.centered(self.d, self.window_radius)

    def params(self) -> ReconstructionParams:
        return ReconstructionParams(
            incident_tol=self.incident_tol,
            gp_tol=self.gp_tol,
            max_radius=self.max_radius,
            polytope_count=self.polytope_count,
            early_exit=self.early_exit,
            incremental=self.incremental,
            search=self.search,
        )

    def order(self) -> int:
        m = self.d if self.m is None else self.m
        if not 1 <= m <= self.d:
            raise ConfigInvalid(f"m: must lie in 1..{self.d}")
        return m

    def edges(self) -> np.ndarray:
        if not (self.bin_width > 0 and self.bin_max > self.bin_width):
            raise ConfigInvalid("bin_width/bin_max: need 0 < bin_width < bin_max")
        n = int(round(self.bin_max / self.bin_width))
        return np.linspace(0.0, n * self.bin_width, n + 1)

    def validate(self, command: str):
        """Command-specific checks; raises :class:`ConfigInvalid`."""
        if self.d < 1:
            raise ConfigInvalid("d: must be positive")
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ConfigInvalid("gamma: must be positive")
        self.model()
        if command in ("reconstruct", "tail", "points"):
            self.body_K()
        if command in ("reconstruct", "tail", "scaling", "paircorr", "clt") and self.d < 2:
            raise ConfigInvalid("d: must be at least 2 for this command")
        if command in ("reconstruct", "tail") and self.d > 3:
            raise ConfigInvalid("d: reconstruction supports d = 2 or 3")
        if command in ("reconstruct", "tail"):
            try:
                self.params().resolve(self.body_K())
            except ValueError as exc:
                raise ConfigInvalid(f"algorithm: {exc}") from None
        if command == "simulate" and not self.radius > 0:
            raise ConfigInvalid("radius: must be positive")
        if command == "points" and not (0 <= self.r_lo < self.r_hi):
            raise ConfigInvalid("r_lo/r_hi: need 0 <= r_lo < r_hi")
        if command == "scaling":
            self.order()
            self.window()
            if len(self.radii) < 3:
                raise ConfigInvalid(f"radii: a slope fit needs at least 3 radii, got {len(self.radii)}")
            if any(b <= a for a, b in zip(self.radii, self.radii[1:])) or self.radii[0] <= 0:
                raise ConfigInvalid("radii: must be positive and increasing")
            if self.reps < 100:
                raise ConfigInvalid("reps: at least 100 per radius")
        if command == "paircorr":
            self.edges()
            if not self.pc_window > 0:
                raise ConfigInvalid("pc_window: must be positive")
            if not 0 < self.level < 1:
                raise ConfigInvalid("level: must lie in (0, 1)")
            if self.reps < 2:
                raise ConfigInvalid("reps: at least 2")
        if command == "tail" and self.reps < 500:
            raise ConfigInvalid("reps: at least 500 for a tail fit")
        if command == "randomize":
            if not 0 < self.p <= 1:
                raise ConfigInvalid("p: must lie in (0, 1]")
            if not self.test_radius > 0:
                raise ConfigInvalid("test_radius: must be positive")
            if self.reps < 2:
                raise ConfigInvalid("reps: at least 2")
        if command == "clt":
            self.order()
            self.window()
            if self.reps < 500:
                raise ConfigInvalid("reps: at least 500")
            if self.clt_level not in (0.15, 0.10, 0.05, 0.025, 0.01):
                raise ConfigInvalid("clt_level: one of 0.15, 0.1, 0.05, 0.025, 0.01")
