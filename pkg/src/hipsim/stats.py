"""Monte Carlo estimators for the fluctuation, correlation and tail behaviour
of hyperplane intersection processes, plus the Cox and thinning randomizations.

Every estimator is a pure function of its arguments and ``seed``: replication
``i`` draws from streams keyed by ``(seed, ..., i)`` and reductions run in a
fixed order after an order-preserving map, so ``jobs`` never changes results.
"""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from .geometry import Ball, ConvexBody, intersect_hyperplanes, unit_ball_volume
from .harness import jsonable, pmap, provenance
from .intersection import (
    IntersectionMeasureSample,
    IntersectionPoint,
    PhiSource,
    intersection_arrays,
    phi_m_measure,
    phi_m_total,
)
from .process import DirectionalModel, WorldOracle, derive_seed, sample_hitting, stream
from .reconstruct import BudgetExhausted, ReconstructionParams, run

MAX_SAMPLER_RADIUS = 1000.0
BOOTSTRAP_RESAMPLES = 1000

# sub-stream tags, kept apart from replication indices
_TAG_THIN = 1
_TAG_BOOT = 2
_TAG_CONTROL = 3
_TAG_COX = 4


class WindowOverflow(ValueError):
    pass


class InvalidProbability(ValueError):
    pass


class AnisotropicModel(UserWarning):
    pass


def _check_window(body: ConvexBody):
    if body.outradius() > MAX_SAMPLER_RADIUS:
        raise WindowOverflow(
            f"window outradius {body.outradius():.6g} exceeds sampler capacity {MAX_SAMPLER_RADIUS:g}"
        )


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _ols(x, y):
    """Least-squares line ``y = a + b x``; returns ``(b, a, r2)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    b, a = np.polyfit(x, y, 1)
    resid = y - (a + b * x)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    return float(b), float(a), r2


# ---------------------------------------------------------------------------
# randomizations


def thin(points, p: float, seed: int):
    """Keep each point independently with probability ``p``."""
    if not (0.0 < p <= 1.0):
        raise InvalidProbability(f"retention probability must lie in (0, 1], got {p!r}")
    rng = stream(seed)
    if isinstance(points, np.ndarray):
        keep = rng.random(len(points)) < p
        return points[keep]
    points = list(points)
    keep = rng.random(len(points)) < p
    return [x for x, k in zip(points, keep) if k]


def _uniform_in_ball(rng, n: int, k: int) -> np.ndarray:
    g = rng.standard_normal((n, k))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * rng.random(n)[:, None] ** (1.0 / k)


def _uniform_on_section(rng, flat, window: ConvexBody, n: int) -> np.ndarray:
    """``n`` uniform points on ``flat ∩ window`` by rejection from an enclosing disc."""
    enclosing = window if isinstance(window, Ball) else Ball.centered(window.dim, window.outradius())
    D = flat.directions
    rel = enclosing.center - flat.anchor
    foot = flat.anchor + (rel @ D.T) @ D
    rho = math.sqrt(max(enclosing.radius**2 - float(np.sum((enclosing.center - foot) ** 2)), 0.0))
    out = np.zeros((0, flat.ambient_dim))
    while len(out) < n:
        t = _uniform_in_ball(rng, max(2 * (n - len(out)), 8), flat.dim) * rho
        cand = foot + t @ D
        if enclosing is not window:
            cand = cand[window.contains(cand)]
        out = np.vstack([out, cand])
    return out[:n]


def cox_sample(intensity, seed: int) -> np.ndarray:
    """One draw of the Cox process directed by a realized intersection measure.

    Points of ``Phi_d`` (an array, a list of :class:`IntersectionPoint`, or an
    ``m = d`` measure sample) each get an independent Poisson(1)
    multiplicity; repeated points appear as repeated rows. For ``m < d`` each
    clipped flat receives a Poisson number of points with mean equal to its
    measure, placed uniformly on the flat inside the window.
    """
    rng = stream(seed)
    if isinstance(intensity, IntersectionMeasureSample):
        sample = intensity
        hs = sample.hyperplanes
        d = hs[0].dim if hs else sample.window.dim
        if sample.m == d:
            pts = [intersect_hyperplanes([hs[i] for i in combo]).anchor for combo, _ in sample.contributions]
            return cox_sample(np.array(pts).reshape(-1, d), seed)
        chunks = []
        counts = rng.poisson([mu for _, mu in sample.contributions]) if sample.contributions else []
        for (combo, _), k in zip(sample.contributions, counts):
            if k:
                flat = intersect_hyperplanes([hs[i] for i in combo])
                chunks.append(_uniform_on_section(rng, flat, sample.window, int(k)))
        return np.vstack(chunks) if chunks else np.zeros((0, d))
    if len(intensity) and isinstance(intensity[0], IntersectionPoint):
        intensity = np.array([p.x for p in intensity])
    X = np.asarray(intensity, dtype=float)
    if X.size == 0:
        return X.reshape(0, X.shape[1] if X.ndim == 2 else 0)
    mult = rng.poisson(1.0, size=len(X))
    return np.repeat(X, mult, axis=0)


# ---------------------------------------------------------------------------
# variance scaling


@dataclass
class ScalingReport:
    m: int
    window: dict
    radii: list
    means: list
    variances: list
    reps: list
    se_mean: list
    se_variance: list
    slope: float
    intercept: float
    slope_ci: tuple
    label: str = "phi"
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        rows = zip(self.radii, self.means, self.variances, self.reps, self.se_mean, self.se_variance)
        return _csv(["r", "mean", "variance", "reps", "se_mean", "se_variance"], rows)


def _phi_value(task) -> float:
    model, m, W, r, seed, p = task
    Wr = W.scaled(r)
    oracle = sample_hitting(model, Wr.outradius(), seed)
    if p is None:
        return phi_m_total(oracle.U, oracle.S, m, Wr)
    X, _, _ = intersection_arrays(oracle.U, oracle.S, Wr)
    return float(len(thin(X, p, derive_seed(seed, _TAG_THIN))))


def _variance_se(x: np.ndarray) -> float:
    n = len(x)
    c = x - x.mean()
    m4 = float(np.mean(c**4))
    v = float(np.mean(c**2))
    return math.sqrt(max(m4 - v * v, 0.0) / n)


def _scaling_report(samples, radii, m, W, seed, label, config) -> ScalingReport:
    samples = [np.asarray(s, dtype=float) for s in samples]
    means = [float(s.mean()) for s in samples]
    variances = [float(s.var(ddof=1)) for s in samples]
    if min(variances) <= 0:
        raise ValueError("zero sample variance; cannot fit a log-log slope")
    logr = np.log(radii)
    slope, intercept, _ = _ols(logr, np.log(variances))
    rng = stream(seed, _TAG_BOOT)
    boot_v = np.empty((BOOTSTRAP_RESAMPLES, len(radii)))
    for j, s in enumerate(samples):
        idx = rng.integers(0, len(s), size=(BOOTSTRAP_RESAMPLES, len(s)))
        boot_v[:, j] = s[idx].var(axis=1, ddof=1)
    boot_v = np.maximum(boot_v, np.finfo(float).tiny)
    X = np.column_stack([np.ones_like(logr), logr])
    coef = np.linalg.lstsq(X, np.log(boot_v).T, rcond=None)[0]
    lo, hi = np.quantile(coef[1], [0.025, 0.975])
    return ScalingReport(
        m=m,
        window=W.to_dict(),
        radii=list(map(float, radii)),
        means=means,
        variances=variances,
        reps=[len(s) for s in samples],
        se_mean=[float(s.std(ddof=1) / math.sqrt(len(s))) for s in samples],
        se_variance=[_variance_se(s) for s in samples],
        slope=slope,
        intercept=intercept,
        slope_ci=(float(lo), float(hi)),
        label=label,
        meta=provenance(config, seed),
    )


def _check_radii(radii, reps):
    radii = [float(r) for r in radii]
    if len(radii) < 3:
        raise ValueError("a slope fit needs at least 3 radii")
    if any(b <= a for a, b in zip(radii, radii[1:])) or radii[0] <= 0:
        raise ValueError("radii must be positive and increasing")
    if reps < 100:
        raise ValueError("at least 100 replications per radius are required")
    return radii


def variance_scaling(model: DirectionalModel, m: int, W: ConvexBody, radii, reps: int, seed: int,
                     p: float | None = None, jobs: int = 1) -> ScalingReport:
    """Mean and variance of ``Phi_m(rW)`` over independent realizations.

    The slope of ``log Var`` against ``log r`` is fitted by least squares with a
    percentile bootstrap interval over replications. With ``p`` the counts are
    those of the ``p``-thinned point process (``m = d`` only).
    """
    radii = _check_radii(radii, reps)
    if not 1 <= m <= model.d:
        raise ValueError(f"order m must be in [1, {model.d}]")
    if p is not None:
        if not (0.0 < p <= 1.0):
            raise InvalidProbability(f"retention probability must lie in (0, 1], got {p!r}")
        if m != model.d:
            raise ValueError("thinning applies to the point process (m = d)")
    _check_window(W.scaled(radii[-1]))
    tasks = [(model, m, W, r, derive_seed(seed, i, k), p) for i, r in enumerate(radii) for k in range(reps)]
    flat = pmap(_phi_value, tasks, jobs)
    samples = [flat[i * reps:(i + 1) * reps] for i in range(len(radii))]
    config = {"model": model.to_dict(), "m": m, "W": W.to_dict(), "radii": radii, "reps": reps, "p": p}
    label = "phi" if p is None else f"phi_thinned_{p:g}"
    return _scaling_report(samples, radii, m, W, seed, label, config)


def pooled_intensity(report: ScalingReport, W: ConvexBody) -> float:
    """Intensity estimate ``sum of means / sum of window volumes``."""
    vols = [W.scaled(r).volume() for r in report.radii]
    return float(np.sum(report.means) / np.sum(vols))


def poisson_scaling(intensity: float, W: ConvexBody, radii, reps: int, seed: int) -> ScalingReport:
    """Variance scaling of a homogeneous Poisson point process of the given intensity."""
    radii = _check_radii(radii, reps)
    _check_window(W.scaled(radii[-1]))
    samples = []
    for i, r in enumerate(radii):
        mu = intensity * W.scaled(r).volume()
        samples.append(stream(seed, _TAG_CONTROL, i).poisson(mu, size=reps).astype(float))
    config = {"control": "poisson", "intensity": intensity, "W": W.to_dict(), "radii": radii, "reps": reps}
    return _scaling_report(samples, radii, W.dim, W, seed, "poisson_control", config)


def cross_covariance(model: DirectionalModel, m: int, A: ConvexBody, B: ConvexBody, r: float,
                     reps: int, seed: int) -> tuple[float, float]:
    """Sample covariance of ``(Phi_m(rA), Phi_m(rB))`` and its standard error."""
    R = max(A.scaled(r).outradius(), B.scaled(r).outradius())
    x = np.empty(reps)
    y = np.empty(reps)
    for k in range(reps):
        o = sample_hitting(model, R, derive_seed(seed, k))
        x[k] = phi_m_total(o.U, o.S, m, A.scaled(r))
        y[k] = phi_m_total(o.U, o.S, m, B.scaled(r))
    prod = (x - x.mean()) * (y - y.mean())
    return float(prod.sum() / (reps - 1)), float(prod.std(ddof=1) / math.sqrt(reps))


# ---------------------------------------------------------------------------
# pair correlation


@dataclass
class PairCorrelationReport:
    edges: list
    rho: list
    ci_low: list
    ci_high: list
    intensity: float
    exponent: float | None
    exponent_se: float | None
    fit_range: tuple
    window_radius: float
    reps: int
    level: float = 0.99
    label: str = "phi"
    meta: dict = field(default_factory=dict)

    @property
    def centers(self) -> np.ndarray:
        e = np.asarray(self.edges)
        return 0.5 * (e[1:] + e[:-1])

    def covers(self, value: float = 1.0) -> np.ndarray:
        return (np.asarray(self.ci_low) <= value) & (value <= np.asarray(self.ci_high))

    def to_dict(self) -> dict:
        return jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        e = self.edges
        rows = zip(e[:-1], e[1:], self.rho, self.ci_low, self.ci_high)
        return _csv(["r_lo", "r_hi", "rho", "ci_low", "ci_high"], rows)


def _pair_counts(X: np.ndarray, inner: float, edges: np.ndarray):
    """Distance histogram from points with ``|x| <= inner`` to all other points."""
    ref = X[np.linalg.norm(X, axis=1) <= inner]
    counts = np.zeros(len(edges) - 1)
    for start in range(0, len(ref), 256):
        D = np.linalg.norm(ref[start:start + 256, None, :] - X[None], axis=2)
        D = D[(D > 0) & (D <= edges[-1])]
        counts += np.histogram(D, bins=edges)[0]
    return counts, len(ref), len(X)


def _pair_task(task):
    model, inner, outer, edges, seed = task
    o = sample_hitting(model, outer, seed)
    X, _, _ = intersection_arrays(o.U, o.S, Ball.centered(model.d, outer))
    return _pair_counts(X, inner, edges)


def _poisson_pair_task(task):
    intensity, d, inner, outer, edges, seed = task
    rng = stream(seed)
    n = rng.poisson(intensity * unit_ball_volume(d) * outer**d)
    X = _uniform_in_ball(rng, n, d) * outer
    return _pair_counts(X, inner, edges)


def _pair_report(results, d, inner, outer, edges, fit_range, seed, level, label, config, fit):
    C = np.array([r[0] for r in results])
    Nr = np.array([r[1] for r in results], dtype=float)
    Na = np.array([r[2] for r in results], dtype=float)
    reps = len(results)
    shell = unit_ball_volume(d) * (edges[1:] ** d - edges[:-1] ** d)
    big = unit_ball_volume(d) * outer**d

    def estimate(Csum, Nrsum, Nasum, n):
        lam = Nasum / (n * big)
        with np.errstate(divide="ignore", invalid="ignore"):
            return Csum / (Nrsum * lam * shell), lam

    Cs, Nrs, Nas = C.sum(0), Nr.sum(), Na.sum()
    rho, lam = estimate(Cs, Nrs, Nas, reps)
    # leave-one-replication-out jackknife
    jk = np.array([estimate(Cs - C[i], Nrs - Nr[i], Nas - Na[i], reps - 1)[0] for i in range(reps)])
    se = np.sqrt((reps - 1) / reps * np.sum((jk - jk.mean(0)) ** 2, axis=0))
    z = sps.norm.ppf(0.5 + level / 2)
    centers = 0.5 * (edges[1:] + edges[:-1])

    exponent = exponent_se = None
    if fit:
        sel = (centers >= fit_range[0]) & (centers <= fit_range[1])

        def slope(rh):
            ok = sel & (rh > 1)
            if ok.sum() < 2:
                return np.nan
            return np.polyfit(np.log(centers[ok]), np.log(rh[ok] - 1), 1)[0]

        exponent = float(slope(rho))
        jk_slopes = np.array([slope(row) for row in jk])
        jk_slopes = jk_slopes[np.isfinite(jk_slopes)]
        if len(jk_slopes) > 1:
            n = len(jk_slopes)
            exponent_se = float(math.sqrt((n - 1) / n * np.sum((jk_slopes - jk_slopes.mean()) ** 2)))
    return PairCorrelationReport(
        edges=edges.tolist(),
        rho=rho.tolist(),
        ci_low=(rho - z * se).tolist(),
        ci_high=(rho + z * se).tolist(),
        intensity=float(lam),
        exponent=exponent,
        exponent_se=exponent_se,
        fit_range=tuple(map(float, fit_range)),
        window_radius=float(inner),
        reps=reps,
        level=level,
        label=label,
        meta=provenance(config, seed),
    )


def _check_bins(edges, reps):
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0) or edges[0] < 0:
        raise ValueError("bin edges must be nonnegative and strictly increasing")
    if reps < 2:
        raise ValueError("at least 2 replications are needed for interval estimates")
    return edges


def pair_correlation(model: DirectionalModel, window_radius: float, edges, reps: int, seed: int,
                     fit_range=(5.0, 20.0), level: float = 0.99, jobs: int = 1) -> PairCorrelationReport:
    """Pair correlation of the intersection points, pooled over replications.

    Reference points lie in the centred ball of radius ``window_radius``; the
    process is sampled in a ball enlarged by the largest bin edge, so every
    neighbour of a reference point is observed. The estimate is the ratio of
    pooled pair counts to ``N_ref * intensity * shell volume``, with the
    intensity pooled over the sampled balls. Intervals are jackknife over
    replications; the decay exponent is the least-squares slope of
    ``log(rho - 1)`` on ``log r`` over the bins centred in ``fit_range``.
    """
    edges = _check_bins(edges, reps)
    outer = window_radius + edges[-1]
    _check_window(Ball.centered(model.d, outer))
    fit = model.is_isotropic
    if not fit:
        warnings.warn("decay exponent is only meaningful for isotropic models", AnisotropicModel,
                      stacklevel=2)
    tasks = [(model, window_radius, outer, edges, derive_seed(seed, k)) for k in range(reps)]
    results = pmap(_pair_task, tasks, jobs)
    config = {"model": model.to_dict(), "window_radius": window_radius, "edges": edges,
              "reps": reps, "fit_range": list(fit_range), "level": level}
    return _pair_report(results, model.d, window_radius, outer, edges, fit_range, seed, level,
                        "phi", config, fit)


def poisson_pair_correlation(intensity: float, d: int, window_radius: float, edges, reps: int,
                             seed: int, level: float = 0.99, jobs: int = 1) -> PairCorrelationReport:
    """The estimator of :func:`pair_correlation` applied to homogeneous Poisson points."""
    edges = _check_bins(edges, reps)
    outer = window_radius + edges[-1]
    _check_window(Ball.centered(d, outer))
    tasks = [(intensity, d, window_radius, outer, edges, derive_seed(seed, _TAG_CONTROL, k))
             for k in range(reps)]
    results = pmap(_poisson_pair_task, tasks, jobs)
    config = {"control": "poisson", "intensity": intensity, "d": d, "window_radius": window_radius,
              "edges": edges, "reps": reps, "level": level}
    return _pair_report(results, d, window_radius, outer, edges, (0.0, 0.0), seed, level,
                        "poisson_control", config, False)


# ---------------------------------------------------------------------------
# stopping radius tail


@dataclass
class TailReport:
    radii: list
    survival: list
    reps: int
    truncated: int
    c1: float
    c2: float
    r2: float
    fit_range: tuple
    meta: dict = field(default_factory=dict)

    @property
    def truncation_rate(self) -> float:
        return self.truncated / self.reps

    @property
    def valid(self) -> bool:
        return self.truncation_rate < 0.01

    def survival_at(self, x) -> np.ndarray:
        """Empirical ``P(R > x)``; truncated runs count as exceeding every radius."""
        x = np.asarray(x, dtype=float)
        return (self.reps - np.searchsorted(self.radii, x, side="right")) / self.reps

    def to_dict(self) -> dict:
        out = jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})
        out["valid"] = self.valid
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        return _csv(["radius", "survival"], zip(self.radii, self.survival))


def _tail_task(task):
    model, K, params, seed = task
    src = PhiSource(WorldOracle(model, seed), K)
    try:
        res = run(src, K, params)
    except BudgetExhausted:
        return math.inf
    return res.stopping_radius if res.terminated else math.inf


def stopping_radii(model: DirectionalModel, K: ConvexBody, seeds, params: ReconstructionParams | None = None,
                   jobs: int = 1) -> np.ndarray:
    """Stopping radius of one reconstruction per seed; ``inf`` marks a truncated run."""
    params = params or ReconstructionParams()
    return np.array(pmap(_tail_task, [(model, K, params, int(s)) for s in seeds], jobs), dtype=float)


def fit_tail(radii, seed: int = 0, config: dict | None = None) -> TailReport:
    """Exponential fit ``P(R > s) ~ c1 exp(-c2 s)`` above the sample median."""
    radii = np.asarray(radii, dtype=float)
    reps = len(radii)
    finite = np.sort(radii[np.isfinite(radii)])
    truncated = reps - len(finite)
    surv = (reps - np.arange(1, len(finite) + 1)) / reps
    med = float(np.median(radii))
    # one point per distinct radius, with the survival just past any ties
    xs = np.unique(finite[finite > med])
    ys = np.array([(reps - np.searchsorted(finite, x, side="right")) / reps for x in xs])
    keep = ys > 0
    xs, ys = xs[keep], ys[keep]
    if len(xs) >= 3:
        slope, intercept, r2 = _ols(xs, np.log(ys))
        lo, hi = float(xs[0]), float(xs[-1])
    else:
        slope, intercept, r2, lo, hi = math.nan, math.nan, math.nan, med, med
    return TailReport(
        radii=finite.tolist(),
        survival=surv.tolist(),
        reps=reps,
        truncated=truncated,
        c1=float(math.exp(intercept)) if np.isfinite(intercept) else math.nan,
        c2=-slope,
        r2=r2,
        fit_range=(lo, hi),
        meta=provenance(config or {}, seed),
    )


def stopping_tail(model: DirectionalModel, K: ConvexBody, reps: int, params: ReconstructionParams | None,
                  seed: int, jobs: int = 1) -> TailReport:
    """Tail of the stopping radius over ``reps`` independent reconstructions."""
    if reps < 500:
        raise ValueError("at least 500 replications are required for a tail fit")
    params = params or ReconstructionParams()
    seeds = [derive_seed(seed, k) for k in range(reps)]
    radii = stopping_radii(model, K, seeds, params, jobs)
    config = {"model": model.to_dict(), "K": K.to_dict(), "reps": reps, "params": params.to_dict()}
    return fit_tail(radii, seed, config)


# ---------------------------------------------------------------------------
# variance identities


@dataclass
class IdentityReport:
    name: str
    lhs: float
    rhs: float
    reps: int
    details: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def rel_error(self) -> float:
        return abs(self.lhs - self.rhs) / abs(self.rhs)

    def to_dict(self) -> dict:
        out = jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})
        out["rel_error"] = self.rel_error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        return _csv(["quantity", "value"], [("lhs", self.lhs), ("rhs", self.rhs),
                                             ("rel_error", self.rel_error)])


def _cox_task(task):
    model, m, B, seed = task
    o = sample_hitting(model, B.outradius(), seed)
    child = derive_seed(seed, _TAG_COX)
    if m == model.d:
        X, _, _ = intersection_arrays(o.U, o.S, B)
        return float(len(X)), float(len(cox_sample(X, child)))
    sample = phi_m_measure(o.hyperplanes, m, B)
    return sample.total, float(len(cox_sample(sample, child)))


def cox_identity(model: DirectionalModel, B: ConvexBody, reps: int, seed: int, m: int | None = None,
                 jobs: int = 1) -> IdentityReport:
    """Both sides of ``Var Psi_m(B) = gamma_m V(B) + Var Phi_m(B)`` on shared realizations.

    ``gamma_m`` is the pooled mean of ``Phi_m(B)`` divided by the volume of ``B``.
    """
    m = model.d if m is None else m
    _check_window(B)
    out = pmap(_cox_task, [(model, m, B, derive_seed(seed, k)) for k in range(reps)], jobs)
    phi = np.array([o[0] for o in out])
    psi = np.array([o[1] for o in out])
    gamma_m = float(phi.mean() / B.volume())
    lhs = float(psi.var(ddof=1))
    rhs = gamma_m * B.volume() + float(phi.var(ddof=1))
    config = {"model": model.to_dict(), "B": B.to_dict(), "reps": reps, "m": m}
    return IdentityReport("cox", lhs, rhs, reps,
                          {"gamma_m": gamma_m, "mean_phi": float(phi.mean()), "mean_psi": float(psi.mean())},
                          provenance(config, seed))


def _thin_task(task):
    model, B, p, seed = task
    o = sample_hitting(model, B.outradius(), seed)
    X, _, _ = intersection_arrays(o.U, o.S, B)
    return float(len(X)), float(len(thin(X, p, derive_seed(seed, _TAG_THIN))))


def thinning_identity(model: DirectionalModel, B: ConvexBody, p: float, reps: int, seed: int,
                      jobs: int = 1) -> IdentityReport:
    """Both sides of ``Var Phi_p(B) = p^2 Var Phi(B) + p(1-p) E Phi(B)`` on shared realizations."""
    if not (0.0 < p <= 1.0):
        raise InvalidProbability(f"retention probability must lie in (0, 1], got {p!r}")
    _check_window(B)
    out = pmap(_thin_task, [(model, B, p, derive_seed(seed, k)) for k in range(reps)], jobs)
    phi = np.array([o[0] for o in out])
    kept = np.array([o[1] for o in out])
    lhs = float(kept.var(ddof=1))
    rhs = p * p * float(phi.var(ddof=1)) + p * (1 - p) * float(phi.mean())
    config = {"model": model.to_dict(), "B": B.to_dict(), "reps": reps, "p": p}
    return IdentityReport("thinning", lhs, rhs, reps,
                          {"p": p, "mean_phi": float(phi.mean()), "mean_thinned": float(kept.mean())},
                          provenance(config, seed))


# ---------------------------------------------------------------------------
# normality


@dataclass
class NormalityReport:
    n: int
    skewness: float
    excess_kurtosis: float
    ad_statistic: float
    ad_critical: float
    level: float
    degenerate: bool
    scale: float = 1.0
    mean: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def passes(self) -> bool:
        return (not self.degenerate) and self.ad_statistic < self.ad_critical

    def to_dict(self) -> dict:
        out = jsonable({k: getattr(self, k) for k in self.__dataclass_fields__})
        out["passes"] = self.passes
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        keys = ["n", "skewness", "excess_kurtosis", "ad_statistic", "ad_critical", "level", "passes"]
        d = self.to_dict()
        return _csv(["statistic", "value"], [(k, d[k]) for k in keys])


_AD_LEVELS = (0.15, 0.10, 0.05, 0.025, 0.01)


def normality_report(samples, level: float = 0.01) -> NormalityReport:
    """Moment and Anderson-Darling summaries of a sample against the normal family.

    A sample with no spread is reported as degenerate and never passes.
    """
    if level not in _AD_LEVELS:
        raise ValueError(f"level must be one of {_AD_LEVELS}")
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n < 8:
        raise ValueError("need at least 8 samples")
    if np.ptp(x) <= 1e-12 * max(1.0, float(np.max(np.abs(x)))):
        return NormalityReport(n, math.nan, math.nan, math.inf, 0.0, level, True)
    ad = sps.anderson(x, dist="norm")
    crit = float(ad.critical_values[_AD_LEVELS.index(level)])
    return NormalityReport(
        n=n,
        skewness=float(sps.skew(x)),
        excess_kurtosis=float(sps.kurtosis(x)),
        ad_statistic=float(ad.statistic),
        ad_critical=crit,
        level=level,
        degenerate=False,
    )


def clt_diagnostic(model: DirectionalModel, m: int, W: ConvexBody, r: float, reps: int, seed: int,
                   level: float = 0.01, jobs: int = 1) -> NormalityReport:
    """Normality summary of ``(Phi_m(rW) - mean) / r^(d - 1/2)``."""
    if reps < 500:
        raise ValueError("at least 500 replications are required")
    _check_window(W.scaled(r))
    tasks = [(model, m, W, r, derive_seed(seed, k), None) for k in range(reps)]
    x = np.array(pmap(_phi_value, tasks, jobs))
    scale = r ** (model.d - 0.5)
    rep = normality_report((x - x.mean()) / scale, level)
    rep.scale = scale
    rep.mean = float(x.mean())
    config = {"model": model.to_dict(), "m": m, "W": W.to_dict(), "r": r, "reps": reps, "level": level}
    rep.meta = provenance(config, seed)
    return rep
