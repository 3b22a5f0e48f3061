"""Intersection processes of a hyperplane realization.

``Phi`` is the point process of ``d``-fold intersections; ``Phi_m`` assigns to
a window the total ``(d-m)``-dimensional measure of the ``m``-fold
intersection flats inside it.
"""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DEFAULT_TOL,
    Ball,
    ConvexBody,
    Hyperplane,
    hyperplane_arrays,
    intersect_hyperplanes,
    flat_measure_in_window,
    unit_ball_volume,
)
from .process import WorldOracle

_CHUNK = 200_000


@dataclass(frozen=True, eq=False)
class IntersectionPoint:
    x: np.ndarray
    parents: tuple[int, ...]


@dataclass(eq=False)
class IntersectionMeasureSample:
    m: int
    window: ConvexBody
    total: float
    contributions: list[tuple[tuple[int, ...], float]]
    hyperplanes: list[Hyperplane] = field(default_factory=list, repr=False)


def _subsets(n: int, d: int, min_last: int = 0) -> np.ndarray:
    """All sorted ``d``-subsets of ``range(n)`` whose largest index is ``>= min_last``."""
    if n < d:
        return np.zeros((0, d), dtype=int)
    if d == 2:
        i, j = np.triu_indices(n, k=1)
        keep = j >= min_last
        return np.column_stack([i[keep], j[keep]])
    combos = np.array(list(itertools.combinations(range(n), d)), dtype=int)
    return combos[combos[:, -1] >= min_last]


def solve_subsets(U: np.ndarray, S: np.ndarray, combos: np.ndarray, tol: float = DEFAULT_TOL):
    """Intersection points for each row of ``combos``.

    Returns ``(X, parents, n_singular)``; subsets with ``|det| < tol`` are
    dropped and counted.
    """
    d = U.shape[1] if U.ndim == 2 else 0
    Xs, Ps, singular = [], [], 0
    for start in range(0, len(combos), _CHUNK):
        c = combos[start : start + _CHUNK]
        M = U[c]
        b = S[c]
        if d == 2:
            det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
            ok = np.abs(det) >= tol
            M, b, c, det = M[ok], b[ok], c[ok], det[ok]
            x = (b[:, 0] * M[:, 1, 1] - b[:, 1] * M[:, 0, 1]) / det
            y = (M[:, 0, 0] * b[:, 1] - M[:, 1, 0] * b[:, 0]) / det
            X = np.column_stack([x, y])
        else:
            det = np.linalg.det(M)
            ok = np.abs(det) >= tol
            M, b, c = M[ok], b[ok], c[ok]
            X = np.linalg.solve(M, b[..., None])[..., 0] if len(c) else np.zeros((0, d))
        singular += int(np.sum(~ok))
        Xs.append(X)
        Ps.append(c)
    if not Xs:
        return np.zeros((0, d)), np.zeros((0, d), dtype=int), 0
    return np.vstack(Xs), np.vstack(Ps), singular


def intersection_arrays(U, S, window: ConvexBody | None = None, tol: float = DEFAULT_TOL):
    """Array form of :func:`intersection_points`: ``(X, parents, n_singular)``.

    Only hyperplanes hitting the window enter the enumeration; a point in the
    window lies on each of its parents, so this filter never drops a point.
    """
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    n = len(S)
    if n == 0:
        return np.zeros((0, 0)), np.zeros((0, 0), dtype=int), 0
    d = U.shape[1]
    idx = np.arange(n)
    if window is not None:
        idx = idx[window.hit_mask(U, S)]
    combos = idx[_subsets(len(idx), d)] if len(idx) >= d else np.zeros((0, d), dtype=int)
    X, P, singular = solve_subsets(U, S, combos, tol)
    if window is not None and len(X):
        inside = window.distance(X) <= tol
        X, P = X[inside], P[inside]
    return X, P, singular


def intersection_points(hyperplanes, window: ConvexBody, tol: float = DEFAULT_TOL,
                        diagnostics: dict | None = None) -> list[IntersectionPoint]:
    """Intersection points of ``d``-subsets of ``hyperplanes`` inside ``window``.

    Sorted by parent tuple. Near-singular subsets are skipped; their count is
    stored under ``"singular"`` in ``diagnostics`` when given.
    """
    U, S = hyperplane_arrays(hyperplanes)
    X, P, singular = intersection_arrays(U, S, window, tol)
    if diagnostics is not None:
        diagnostics["singular"] = singular
    order = np.lexsort(P.T[::-1]) if len(P) else np.zeros(0, dtype=int)
    return [IntersectionPoint(X[i], tuple(int(v) for v in P[i])) for i in order]


def _ball_hyperplane_measure(U, S, B: Ball) -> np.ndarray:
    """``(d-1)``-measure of each hyperplane inside a ball window."""
    d = U.shape[1]
    h = np.abs(U @ B.center - S)
    sec = np.clip(B.radius**2 - h**2, 0.0, None)
    return unit_ball_volume(d - 1) * sec ** ((d - 1) / 2)


def phi_m_total(U, S, m: int, B: ConvexBody, tol: float = DEFAULT_TOL) -> float:
    """``Phi_m(B)`` for the hyperplanes ``(U, S)``; fast path of :func:`phi_m_measure`."""
    U = np.asarray(U, dtype=float)
    S = np.asarray(S, dtype=float)
    if len(S) == 0:
        return 0.0
    d = U.shape[1]
    if m == d:
        X, _, _ = intersection_arrays(U, S, B, tol)
        return float(len(X))
    if m == 1 and isinstance(B, Ball):
        return float(np.sum(_ball_hyperplane_measure(U, S, B)))
    hs = [Hyperplane(u, s) for u, s in zip(U, S)]
    return phi_m_measure(hs, m, B, tol).total


def phi_m_measure(hyperplanes, m: int, B: ConvexBody, tol: float = DEFAULT_TOL) -> IntersectionMeasureSample:
    """``Phi_m(B)``: summed ``(d-m)``-measure of ``m``-fold intersections in ``B``.

    Summing over unordered ``m``-subsets accounts for the ``1/m!`` of the
    ordered-tuple definition.
    """
    hyperplanes = list(hyperplanes)
    if not hyperplanes:
        return IntersectionMeasureSample(m, B, 0.0, [], [])
    d = hyperplanes[0].dim
    if not 1 <= m <= d:
        raise ValueError(f"order m must be in [1, {d}], got {m}")
    U, S = hyperplane_arrays(hyperplanes)
    hit = np.flatnonzero(B.hit_mask(U, S))
    contributions = []
    if m == d:
        for p in intersection_points(hyperplanes, B, tol):
            contributions.append((p.parents, 1.0))
    else:
        for combo in itertools.combinations(hit.tolist(), m):
            flat = intersect_hyperplanes([hyperplanes[i] for i in combo], tol)
            if flat is None or flat.degenerate:
                continue
            mu = flat_measure_in_window(flat, B, tol)
            if mu > 0:
                contributions.append((combo, mu))
    total = float(np.sum([c[1] for c in contributions])) if contributions else 0.0
    return IntersectionMeasureSample(m, B, total, contributions, hyperplanes)


class PhiSource:
    """Serves intersection points near a body from a lazily grown realization.

    Only positions leave through :meth:`points_in_annulus`; parent hyperplane
    indices stay behind :meth:`annulus_with_parents` for validation.
    """

    def __init__(self, oracle: WorldOracle, K: ConvexBody, tol: float = DEFAULT_TOL):
        self.oracle = oracle
        self.K = K
        self.tol = tol
        self.d = oracle.model.d
        self._n_done = 0
        self._X = np.zeros((0, self.d))
        self._P = np.zeros((0, self.d), dtype=int)
        self._dist = np.zeros(0)
        self.singular = 0
        self._covered = -np.inf

    def _ensure(self, r_hi: float):
        if r_hi <= self._covered:
            return
        R = self.K.outradius() + r_hi
        if R > self.oracle.current_radius:
            self.oracle.extend_to(R)
        n = len(self.oracle)
        if n > self._n_done:
            combos = _subsets(n, self.d, min_last=self._n_done)
            X, P, singular = solve_subsets(self.oracle.U, self.oracle.S, combos, self.tol)
            self.singular += singular
            self._X = np.vstack([self._X, X])
            self._P = np.vstack([self._P, P])
            self._dist = np.concatenate([self._dist, self.K.distance(X) if len(X) else np.zeros(0)])
            self._n_done = n
        self._covered = r_hi

    def _select(self, r_lo, r_hi):
        self._ensure(r_hi)
        mask = (self._dist > r_lo) & (self._dist <= r_hi)
        idx = np.flatnonzero(mask)
        keys = [self._X[idx, k] for k in range(self.d - 1, -1, -1)] + [self._dist[idx]]
        return idx[np.lexsort(keys)]

    def points_in_annulus(self, r_lo: float, r_hi: float) -> np.ndarray:
        """Positions of points with ``r_lo < d(x, K) <= r_hi``, nearest first."""
        if r_hi <= r_lo:
            return np.zeros((0, self.d))
        idx = self._select(r_lo, r_hi)
        return self._X[idx]

    def annulus_with_parents(self, r_lo: float, r_hi: float) -> list[IntersectionPoint]:
        if r_hi <= r_lo:
            return []
        idx = self._select(r_lo, r_hi)
        return [IntersectionPoint(self._X[i], tuple(int(v) for v in self._P[i])) for i in idx]

    def distance(self, X) -> np.ndarray:
        return self.K.distance(X)


def points_in_annulus(oracle: WorldOracle, K: ConvexBody, r_lo: float, r_hi: float,
                      tol: float = DEFAULT_TOL) -> list[IntersectionPoint]:
    """Intersection points ``x`` with ``r_lo < d(x, K) <= r_hi``, nearest first."""
    return PhiSource(oracle, K, tol).annulus_with_parents(r_lo, r_hi)


def points_to_csv(points, parents=None) -> str:
    """CSV with header ``x_1,...,x_d``; a ``parents`` column is added when given."""
    points = np.asarray(points, dtype=float)
    d = points.shape[1] if points.ndim == 2 and points.size else 0
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    header = [f"x_{i + 1}" for i in range(d)]
    if parents is not None:
        header.append("parents")
    w.writerow(header)
    for i, x in enumerate(points):
        row = [repr(float(v)) for v in x]
        if parents is not None:
            row.append(" ".join(str(int(p)) for p in parents[i]))
        w.writerow(row)
    return buf.getvalue()
