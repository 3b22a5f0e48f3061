"""Recover every hyperplane hitting a convex body from intersection points outside it.

The reconstructor scans the intersection points in order of their distance
to ``K``. After each new distance value ``T_n`` it

1. updates the hyperplanes spanned by at least ``2d - 1`` observed points in
   general hyperplane position (those missing ``K`` form ``xi_n``);
2. tries to certify ``2d - 1`` polytopes built from pairwise distinct members
   of ``xi_n``, each containing ``K`` in its interior and with boundary inside
   distance ``T_n`` of ``K``;
3. on success returns the spanned hyperplanes that do hit ``K``.

Only point positions are ever seen; the hyperplane process stays hidden.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    ConvexBody,
    EmptyIntersection,
    Hyperplane,
    Polytope,
    affinely_independent,
    enclosure_checks,
    fit_hyperplane,
    halfspace_polytope,
    in_general_hyperplane_position,
)

logger = logging.getLogger(__name__)

# angular bucket width (radians) for collinearity pre-grouping
_ANGLE_GROUP = 1e-6
# odd 64-bit multipliers for hashing quantized normals
_HASH_MULT = np.array([0x9E3779B97F4A7C15, 0xC2B2AE3D27D4EB4F, 0x165667B19E3779F9,
                       0x27D4EB2F165667C5, 0x94D049BB133111EB, 0xBF58476D1CE4E5B9],
                      dtype=np.uint64).astype(np.int64)


class BudgetExhausted(RuntimeError):
    """Raised by callers that treat a non-terminating run as an error."""


@dataclass(frozen=True)
class ReconstructionParams:
    """Tolerances and variants of the reconstruction.

    ``None`` fields are resolved against the body by :meth:`resolve`:
    ``max_radius`` becomes 50 times the outradius of ``K``, ``incident_tol``
    becomes ``1e-9`` times the window radius ``R(K) + max_radius``, and
    ``polytope_count`` becomes ``2d - 1``.
    """

    incident_tol: float | None = None
    gp_tol: float = 1e-9
    max_radius: float | None = None
    polytope_count: int | None = None
    early_exit: bool = False
    incremental: bool = True
    search: str = "greedy"

    def resolve(self, K: ConvexBody) -> ReconstructionParams:
        max_radius = self.max_radius if self.max_radius is not None else 50.0 * K.outradius()
        incident_tol = self.incident_tol
        if incident_tol is None:
            incident_tol = 1e-9 * (K.outradius() + max_radius)
        count = self.polytope_count if self.polytope_count is not None else 2 * K.dim - 1
        out = replace(self, incident_tol=incident_tol, max_radius=max_radius, polytope_count=count)
        out.validate()
        return out

    def validate(self):
        if not (self.incident_tol > 0 and self.gp_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.max_radius > 0:
            raise ValueError("max_radius must be positive")
        if self.polytope_count < 1:
            raise ValueError("polytope_count must be at least 1")
        if self.search not in ("greedy", "exhaustive"):
            raise ValueError(f"unknown search mode {self.search!r}")

    def to_dict(self):
        return {
            "incident_tol": self.incident_tol,
            "gp_tol": self.gp_tol,
            "max_radius": self.max_radius,
            "polytope_count": self.polytope_count,
            "early_exit": self.early_exit,
            "incremental": self.incremental,
            "search": self.search,
        }


# ---------------------------------------------------------------------------
# candidate hyperplanes spanned by observed points


@dataclass(eq=False)
class _Candidate:
    members: list[int]
    plane: Hyperplane
    qualified: bool = False
    stale: bool = False


def gp_subset(pts: np.ndarray, size: int, gp_tol: float, span_tol: float) -> list[int] | None:
    """Indices of ``size`` rows of ``pts`` in general hyperplane position.

    Every ``d``-subset of the chosen rows must be affinely independent
    (``gp_tol``) and span a hyperplane within ``span_tol`` of the one
    spanned by the first ``d`` chosen rows. Depth-first search.
    """
    n, d = pts.shape
    if n < size:
        return None
    chosen: list[int] = []
    ref: list[Hyperplane] = []

    def ok(i):
        for combo in itertools.combinations(chosen, d - 1):
            sub = pts[list(combo) + [i]]
            if not affinely_independent(sub, gp_tol):
                return False
            if ref and fit_hyperplane(sub).distance_to(ref[0]) > span_tol:
                return False
        return True

    def search(start):
        if len(chosen) == size:
            return True
        for i in range(start, n):
            if n - i < size - len(chosen):
                return False
            if ok(i):
                chosen.append(i)
                fresh = len(chosen) == d and not ref
                if fresh:
                    ref.append(fit_hyperplane(pts[chosen]))
                if search(i + 1):
                    return True
                if fresh:
                    ref.pop()
                chosen.pop()
        return False

    return list(chosen) if search(0) else None


class HyperplaneTracker:
    """Incrementally maintained hyperplanes spanned by observed points.

    A candidate is stored once ``d + 1`` observed points lie on a common
    hyperplane. New points join every candidate they lie on and spawn new
    candidates with earlier points. A candidate qualifies once it holds
    ``min_points`` points in general hyperplane position.
    """

    def __init__(self, d: int, incident_tol: float, gp_tol: float = 1e-9, min_points: int | None = None):
        self.d = d
        self.tol = incident_tol
        self.gp_tol = gp_tol
        self.min_points = 2 * d - 1 if min_points is None else min_points
        if self.min_points < d + 1:
            raise ValueError(f"min_points must be at least d + 1 = {d + 1}")
        self._X = np.zeros((64, d))
        self.n = 0
        self.candidates: list[_Candidate] = []
        self._U = np.zeros((0, d))
        self._S = np.zeros(0)

    @property
    def points(self) -> np.ndarray:
        return self._X[: self.n]

    def _append_point(self, x):
        if self.n == len(self._X):
            self._X = np.vstack([self._X, np.zeros_like(self._X)])
        self._X[self.n] = x
        self.n += 1
        return self.n - 1

    def _set_plane(self, ci: int):
        c = self.candidates[ci]
        c.plane = fit_hyperplane(self._X[c.members])
        self._U[ci] = c.plane.u
        self._S[ci] = c.plane.s

    def _new_candidate(self, members: list[int]):
        plane = fit_hyperplane(self._X[members])
        self.candidates.append(_Candidate(sorted(members), plane))
        self._U = np.vstack([self._U, plane.u])
        self._S = np.append(self._S, plane.s)
        return len(self.candidates) - 1

    def _qualify(self, ci: int) -> bool:
        c = self.candidates[ci]
        if c.qualified or len(c.members) < self.min_points:
            return False
        if gp_subset(self._X[c.members], self.min_points, self.gp_tol, self.tol) is not None:
            c.qualified = True
            return True
        return False

    def _spawn_sets(self, p: int, co: np.ndarray, groups: list[set]):
        """Point sets of size ``>= d + 1`` on hyperplanes through ``p`` and earlier points.

        ``groups`` are the member sets of existing candidates through ``p``;
        a ``(d-1)``-subset inside one of them spans that candidate again.
        """
        X = self._X[:p]
        x = self._X[p]
        d = self.d
        if d == 2:
            return self._spawn_lines(p, co)
        if d == 3:
            return self._spawn_planes(p, groups)
        out = []
        seen: list[set] = list(groups)
        combos = list(itertools.combinations(range(p), d - 1))
        if not combos:
            return []
        rows = []
        for combo in combos:
            pts = np.vstack([X[list(combo)], x])
            if not affinely_independent(pts, self.gp_tol):
                continue
            diffs = pts[:-1] - x
            vol = np.linalg.svd(diffs, compute_uv=False).prod()
            rows.append((vol, combo))
        rows.sort(key=lambda t: -t[0])
        for _, combo in rows:
            if any(set(combo) <= s for s in seen):
                continue
            plane = fit_hyperplane(np.vstack([X[list(combo)], x]))
            members = np.flatnonzero(np.abs(X @ plane.u - plane.s) <= self.tol)
            if len(members) < d:
                continue
            seen.append(set(members.tolist()))
            out.append(members.tolist() + [p])
        return out

    def _spawn_planes(self, p: int, groups: list[set]):
        """Three-dimensional :meth:`_spawn_sets`.

        Every pair of earlier points spans a plane with ``x``; pairs are
        bucketed by a hash of the sign-free normal ``n n^T``. Buckets that
        cannot hold four points with no three collinear (a single pair, a
        star around one point, or a collinear set) are dropped before any
        exact incidence test.
        """
        X = self._X[:p]
        x = self._X[p]
        if p < 3:
            return []
        V = X - x
        length = _norm(V)
        scale = max(1.0, float(np.max(np.abs(X))), float(np.max(np.abs(x))))
        idx = np.flatnonzero(length > self.gp_tol * scale)
        if len(idx) < 3:
            return []
        I, J = np.triu_indices(len(idx), 1)
        I, J = idx[I], idx[J]
        N = _cross(V[I], V[J])
        nn = _norm(N)
        ok = nn > 1e-9 * length[I] * length[J]
        I, J, N = I[ok], J[ok], N[ok] / nn[ok, None]
        iu = np.triu_indices(3)
        Q = (N[:, :, None] * N[:, None, :])[:, iu[0], iu[1]]
        seen = [set(g) for g in groups]
        out = []
        for shift in (0.0, 0.5):
            cells = np.floor(Q / _ANGLE_GROUP + shift).astype(np.int64)
            keys = (cells * _HASH_MULT).sum(axis=1)
            _, inv, cnt = np.unique(keys, return_inverse=True, return_counts=True)
            inv = inv.ravel()
            big = cnt[inv] >= 3
            if not big.any():
                continue
            order = np.argsort(inv[big], kind="stable")
            sel = np.flatnonzero(big)[order]
            g = inv[sel]
            starts = np.flatnonzero(np.r_[True, g[1:] != g[:-1]])
            lead = sel[starts][np.searchsorted(starts, np.arange(len(sel)), side="right") - 1]
            a, b = I[lead], J[lead]
            c, d = I[sel], J[sel]
            # star around a or b: every pair contains it
            no_a = (c != a[:]) & (d != a)
            no_b = (c != b) & (d != b)
            u = X[b] - X[a]
            u /= _norm(u)[:, None]
            off = (_norm(_cross(X[c] - X[a], u)) > self.tol) | (_norm(_cross(X[d] - X[a], u)) > self.tol)
            gid = np.cumsum(np.r_[True, g[1:] != g[:-1]]) - 1
            ng = len(starts)
            viable = ((np.bincount(gid, no_a, ng) > 0) & (np.bincount(gid, no_b, ng) > 0)
                      & (np.bincount(gid, off, ng) > 0))
            bounds = np.r_[starts, len(sel)]
            for k in np.flatnonzero(viable):
                rows = sel[bounds[k]:bounds[k + 1]]
                pts = np.unique(np.concatenate([I[rows], J[rows]]))
                while len(pts) >= 3:
                    if any(set(pts.tolist()) <= s for s in seen):
                        break
                    plane = fit_hyperplane(np.vstack([x, X[pts[0]], X[pts[1]]]))
                    members = np.flatnonzero(np.abs(X @ plane.u - plane.s) <= self.tol)
                    rest = pts[~np.isin(pts, members)]
                    mset = set(members.tolist())
                    if (len(members) >= 3 and not any(mset <= s for s in seen)
                            and not _near_pencil(np.vstack([X[members], x]), self.tol)):
                        seen.append(mset)
                        out.append(members.tolist() + [p])
                    if len(rest) == len(pts):
                        pts = pts[1:]
                    else:
                        pts = rest
        return out

    def _spawn_lines(self, p: int, co: np.ndarray):
        X = self._X[:p]
        x = self._X[p]
        free = np.flatnonzero(~co)
        if len(free) < 2:
            return []
        diff = X[free] - x
        length = np.hypot(diff[:, 0], diff[:, 1])
        scale = max(1.0, float(np.max(np.abs(X[free]))), float(np.max(np.abs(x))))
        good = length > self.gp_tol * scale
        free, diff, length = free[good], diff[good], length[good]
        theta = np.mod(np.arctan2(diff[:, 1], diff[:, 0]), np.pi)
        order = np.argsort(theta)
        theta = theta[order]
        # loose angular grouping; exact incidence is checked per group
        close = np.diff(theta) <= _ANGLE_GROUP
        runs = []
        if close.any():
            edges = np.diff(np.concatenate([[0], close.astype(np.int8), [0]]))
            runs = [order[a : b + 1] for a, b in zip(np.flatnonzero(edges == 1), np.flatnonzero(edges == -1))]
        if len(theta) > 1 and theta[0] + np.pi - theta[-1] <= _ANGLE_GROUP:
            head = runs[0] if runs and runs[0][0] == order[0] else order[:1]
            tail = runs[-1] if runs and runs[-1][-1] == order[-1] else order[-1:]
            runs = [r for r in runs if r is not head and r is not tail]
            runs.append(np.concatenate([tail, head]))
        out = []
        for g in runs:
            idx = free[g]
            span = length[g]
            while len(idx) >= 2:
                far = int(np.argmax(span))
                t = X[idx[far]] - x
                u = np.array([-t[1], t[0]]) / span[far]
                on = np.abs((X[idx] - x) @ u) <= self.tol
                if on.sum() >= 2:
                    out.append(idx[on].tolist() + [p])
                on[far] = True
                idx, span = idx[~on], span[~on]
        return out

    def add(self, x) -> list[int]:
        """Add an observed point; returns indices of candidates that newly qualified."""
        p = self._append_point(np.asarray(x, dtype=float))
        newly = []
        co = np.zeros(p, dtype=bool)
        groups = []
        if self.candidates:
            on = np.flatnonzero(np.abs(self._U @ self._X[p] - self._S) <= self.tol)
            for ci in on:
                c = self.candidates[ci]
                co[c.members] = True
                groups.append(set(c.members))
                c.members.append(p)
                c.stale = True
                if self._qualify(ci):
                    newly.append(ci)
        for members in self._spawn_sets(p, co, groups):
            ci = self._new_candidate(members)
            if self._qualify(ci):
                newly.append(ci)
        return newly

    def qualified(self) -> list[_Candidate]:
        out = []
        for ci, c in enumerate(self.candidates):
            if c.qualified:
                if c.stale:
                    self._set_plane(ci)
                    c.stale = False
                out.append(c)
        return out

    def split(self, K: ConvexBody):
        """Qualified hyperplanes as ``(missing K, hitting K)`` lists, deduplicated."""
        planes = _dedupe([c.plane for c in self.qualified()], self.tol)
        if not planes:
            return [], []
        U = np.array([h.u for h in planes])
        S = np.array([h.s for h in planes])
        hit = K.hit_mask(U, S)
        miss = [h for h, m in zip(planes, hit) if not m]
        hits = [h for h, m in zip(planes, hit) if m]
        return miss, hits


def _cross(a, b):
    a, b = np.broadcast_arrays(a, b)
    return np.column_stack([
        a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1],
        a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2],
        a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0],
    ])


def _norm(A):
    return np.sqrt(np.einsum("ij,ij->i", A, A))


def _near_pencil(P: np.ndarray, tol: float) -> bool:
    """Whether all but at most one row of ``P`` lie on a common line.

    Such a set has no four points without three collinear. Any such line
    passes through two of the first three rows.
    """
    n = len(P)
    if n <= 3:
        return True
    for a, b in ((0, 1), (0, 2), (1, 2)):
        u = P[b] - P[a]
        L = float(np.linalg.norm(u))
        if L <= tol:
            continue
        dist = _norm(_cross(P - P[a], u / L))
        if np.sum(dist <= tol) >= n - 1:
            return True
    return False


def _dedupe(planes, tol):
    """Drop hyperplanes within ``100 * tol`` of an earlier one."""
    if len(planes) < 2:
        return list(planes)
    P = np.array([h.as_array() for h in planes])
    keep = []
    for i in range(len(P)):
        if keep:
            Q = P[keep]
            dist = np.minimum(np.abs(Q - P[i]).max(axis=1), np.abs(Q + P[i]).max(axis=1))
            if dist.min() <= 100 * tol:
                continue
        keep.append(i)
    return [planes[i] for i in keep]


def _unmatched(planes, reference, tol):
    """Mask of ``planes`` with no member of ``reference`` within ``tol``."""
    if not planes:
        return np.zeros(0, dtype=bool)
    if not reference:
        return np.ones(len(planes), dtype=bool)
    P = np.array([h.as_array() for h in planes])
    Q = np.array([h.as_array() for h in reference])
    minus = np.abs(P[:, None, :] - Q[None]).max(axis=2)
    plus = np.abs(P[:, None, :] + Q[None]).max(axis=2)
    return np.minimum(minus, plus).min(axis=1) > tol


def detect_hyperplanes(points, K: ConvexBody, params: ReconstructionParams | None = None,
                       min_points: int | None = None) -> list[Hyperplane]:
    """Hyperplanes missing ``K`` spanned by ``2d - 1`` points in general hyperplane position.

    ``min_points`` overrides the ``2d - 1`` threshold; lowering it gives an
    unsound detector and exists only to demonstrate why the threshold is needed.
    """
    params = (params or ReconstructionParams()).resolve(K)
    points = np.asarray(points, dtype=float).reshape(-1, K.dim)
    tracker = HyperplaneTracker(K.dim, params.incident_tol, params.gp_tol, min_points)
    for x in points:
        tracker.add(x)
    return tracker.split(K)[0]


def recover_hitting(points, K: ConvexBody, params: ReconstructionParams | None = None) -> list[Hyperplane]:
    """Hyperplanes hitting ``K`` spanned by ``2d - 1`` observed points in general hyperplane position.

    Enumerating ``d``-subsets and clustering the incident points is
    equivalent to enumerating all ``(2d - 1)``-collections: a collection in
    general hyperplane position lies inside the cluster of any of its
    ``d``-subsets, and a qualified cluster contains such a collection.
    """
    params = (params or ReconstructionParams()).resolve(K)
    points = np.asarray(points, dtype=float).reshape(-1, K.dim)
    tracker = HyperplaneTracker(K.dim, params.incident_tol, params.gp_tol)
    for x in points:
        tracker.add(x)
    return tracker.split(K)[1]


def recover_hitting_bruteforce(points, K: ConvexBody, params: ReconstructionParams | None = None) -> list[Hyperplane]:
    """Reference version of :func:`recover_hitting` over all ``(2d - 1)``-collections."""
    params = (params or ReconstructionParams()).resolve(K)
    points = np.asarray(points, dtype=float).reshape(-1, K.dim)
    d = K.dim
    found: list[Hyperplane] = []
    for combo in itertools.combinations(range(len(points)), 2 * d - 1):
        sub = points[list(combo)]
        if not in_general_hyperplane_position(sub, params.incident_tol):
            continue
        h = fit_hyperplane(sub)
        if h.hits(K) and not any(h.distance_to(g) <= 100 * params.incident_tol for g in found):
            found.append(h)
    return found


# ---------------------------------------------------------------------------
# enclosing polytopes


def inner_halfspaces(xi, K: ConvexBody):
    """Halfspaces bounded by the ``xi`` hyperplanes on the side containing ``K``."""
    if not xi:
        return np.zeros((0, K.dim)), np.zeros(0)
    U = np.array([h.u for h in xi])
    S = np.array([h.s for h in xi])
    flip = K.support(U) >= S
    return np.where(flip[:, None], -U, U), np.where(flip, -S, S)


def peel(xi, K: ConvexBody, count: int, tol: float = 1e-9):
    """Greedy layer peeling of the cells around ``K``.

    The first layer is the intersection of all halfspaces; its facet
    hyperplanes are removed and the next layer is formed from the rest.
    Returns ``count`` bounded polytopes, or ``None`` when a layer is
    unbounded or cannot be formed.
    """
    A, b = inner_halfspaces(xi, K)
    c = K.interior_point()
    free = np.arange(len(b))
    layers = []
    for _ in range(count):
        if len(free) < K.dim + 1:
            return None
        try:
            P = halfspace_polytope((A[free], b[free]), tol, interior=c)
        except EmptyIntersection:
            return None
        if not P.bounded:
            return None
        layers.append(_relabel(P, free))
        free = np.delete(free, P.active)
    return layers


def _relabel(P: Polytope, free: np.ndarray) -> Polytope:
    return Polytope(P.A, P.b, P.vertices, P.bounded, free[P.active])


def required_radius(layers, K: ConvexBody) -> float:
    """Smallest ``r`` at which every layer's boundary lies within distance ``r`` of ``K``."""
    if layers is None:
        return math.inf
    return max(float(np.max(K.distance(P.vertices))) for P in layers)


def _certify_exhaustive(xi, K, r, count, tol):
    A, b = inner_halfspaces(xi, K)
    c = K.interior_point()
    good = []
    n = len(xi)
    for size in range(K.dim + 1, n + 1):
        for combo in itertools.combinations(range(n), size):
            idx = np.array(combo)
            try:
                P = halfspace_polytope((A[idx], b[idx]), tol, interior=c)
            except EmptyIntersection:
                continue
            # only irredundant sets: every hyperplane must support a facet
            if P.bounded and len(P.active) == size and enclosure_checks(P, K, r):
                good.append((set(combo), _relabel(P, idx)))

    def pick(start, used, chosen):
        if len(chosen) == count:
            return list(chosen)
        for i in range(start, len(good)):
            s, P = good[i]
            if s & used:
                continue
            found = pick(i + 1, used | s, chosen + [P])
            if found:
                return found
        return None

    return pick(0, set(), [])


def certify_enclosure(xi, K: ConvexBody, r: float, params: ReconstructionParams | None = None):
    """Polytopes from pairwise distinct ``xi`` hyperplanes enclosing ``K`` within ``K_r``.

    Returns a list of ``polytope_count`` polytopes or ``None``. The default
    greedy peeling is sound but not complete; ``search="exhaustive"`` tries
    every irredundant subset and is meant for small ``xi``.
    """
    params = (params or ReconstructionParams()).resolve(K)
    xi = list(xi)
    if params.search == "exhaustive":
        return _certify_exhaustive(xi, K, r, params.polytope_count, params.gp_tol)
    layers = peel(xi, K, params.polytope_count, params.gp_tol)
    if layers is None:
        return None
    for P in layers:
        if not enclosure_checks(P, K, r):
            return None
    return layers


# ---------------------------------------------------------------------------
# the scan


class PointListSource:
    """Point source over a fixed list of observed positions."""

    def __init__(self, points, K: ConvexBody):
        self.points = np.asarray(points, dtype=float).reshape(-1, K.dim)
        self.K = K
        self._dist = K.distance(self.points) if len(self.points) else np.zeros(0)

    def points_in_annulus(self, r_lo, r_hi):
        mask = (self._dist > r_lo) & (self._dist <= r_hi)
        return self.points[mask]


@dataclass
class StageRecord:
    n: int
    T: float
    observed: int
    xi: int
    polytopes: list | None = None

    def to_dict(self):
        out = {"n": self.n, "T": self.T, "observed": self.observed, "xi": self.xi}
        if self.polytopes is not None:
            out["polytopes"] = self.polytopes
        return out


@dataclass
class ReconstructionResult:
    chi: list[Hyperplane]
    T: float
    stopping_radius: float
    stages: int
    terminated: bool
    trace: list[StageRecord] = field(default_factory=list)
    xi: list[Hyperplane] = field(default_factory=list)
    admissions: list[tuple[int, Hyperplane]] = field(default_factory=list)
    polytopes: list[Polytope] | None = None
    early_exit: bool = False
    max_point_distance: float = 0.0

    def to_dict(self, trace: bool = True) -> dict:
        out = {
            "chi": [h.as_array().tolist() for h in self.chi],
            "T": self.T if self.terminated else None,
            "stopping_radius": self.stopping_radius if self.terminated else None,
            "stages": self.stages,
            "terminated": self.terminated,
            "early_exit": self.early_exit,
        }
        if trace:
            out["trace"] = [r.to_dict() for r in self.trace]
        return out

    def to_json(self, trace: bool = True) -> str:
        return json.dumps(self.to_dict(trace), indent=2) + "\n"

    def trace_ndjson(self) -> str:
        """The stage trace as newline-delimited JSON records."""
        return "".join(json.dumps(r.to_dict()) + "\n" for r in self.trace)


def _edge_points_present(P: Polytope, X: np.ndarray, tol: float) -> bool:
    """Whether any row of ``X`` lies in the relative interior of an edge of ``P``."""
    if len(X) == 0:
        return False
    V = P.vertices
    for i, j in P.edges(tol):
        a, b = V[i], V[j]
        ab = b - a
        L2 = float(ab @ ab)
        t = (X - a) @ ab / L2
        foot = a + np.clip(t, 0, 1)[:, None] * ab
        near = np.linalg.norm(X - foot, axis=1) <= tol
        inner = (t * math.sqrt(L2) > tol) & ((1 - t) * math.sqrt(L2) > tol)
        if np.any(near & inner):
            return True
    return False


def run(source, K: ConvexBody, params: ReconstructionParams | None = None) -> ReconstructionResult:
    """Scan the intersection points around ``K`` until the hitting hyperplanes are certified.

    ``source`` must provide ``points_in_annulus(r_lo, r_hi)`` returning the
    positions with ``r_lo < d(x, K) <= r_hi``. Points further than the
    current stage radius may be buffered but never influence a decision.
    """
    params = (params or ReconstructionParams()).resolve(K)
    d = K.dim
    tracker = HyperplaneTracker(d, params.incident_tol, params.gp_tol)
    trace: list[StageRecord] = []
    admissions: list[tuple[int, Hyperplane]] = []
    buffer = np.zeros((0, d))
    buf_dist = np.zeros(0)
    scanned = 0.0
    step = max(0.25, 0.05 * K.outradius())
    n = 0
    xi: list[Hyperplane] = []
    layers = None
    need = math.inf
    polytopes = None
    early = False
    T = 0.0

    while True:
        if len(buffer) == 0:
            if scanned >= params.max_radius:
                break
            hi = min(scanned + step, params.max_radius)
            pts = np.asarray(source.points_in_annulus(scanned, hi), dtype=float).reshape(-1, d)
            scanned = hi
            if len(pts) == 0:
                step *= 2
                continue
            dist = K.distance(pts)
            order = np.lexsort([pts[:, k] for k in range(d - 1, -1, -1)] + [dist])
            buffer, buf_dist = pts[order], dist[order]
            continue
        T = float(buf_dist[0])
        take = int(np.searchsorted(buf_dist, T, side="right"))
        batch, buffer, buf_dist = buffer[:take], buffer[take:], buf_dist[take:]
        n += 1
        changed = False
        if params.incremental:
            for x in batch:
                if tracker.add(x):
                    changed = True
        else:
            for x in batch:
                tracker._append_point(x)
            fresh = HyperplaneTracker(d, params.incident_tol, params.gp_tol)
            for x in tracker.points:
                fresh.add(x)
            tracker = fresh
            changed = True
        if changed:
            new_xi = tracker.split(K)[0]
            fresh_mask = _unmatched(new_xi, xi, 100 * params.incident_tol)
            admissions.extend((n, h) for h, f in zip(new_xi, fresh_mask) if f)
            xi = new_xi
            if params.search == "greedy":
                layers = peel(xi, K, params.polytope_count, params.gp_tol)
                need = required_radius(layers, K)
        if params.search == "greedy":
            certified = need <= T
            polytopes = layers if certified else None
        else:
            polytopes = certify_enclosure(xi, K, T, params) if changed or n == 1 else polytopes
            polytopes = polytopes if polytopes and all(enclosure_checks(P, K, T) for P in polytopes) else None
            certified = polytopes is not None
        if params.early_exit and not certified and xi:
            first = peel(xi, K, 1, params.gp_tol)
            if first is not None and required_radius(first, K) <= T:
                tol = max(params.incident_tol, 1e-12) * 10
                if not _edge_points_present(first[0], tracker.points, tol):
                    polytopes = first
                    certified = early = True
        rec = StageRecord(n, T, tracker.n, len(xi))
        trace.append(rec)
        if certified:
            rec.polytopes = [P.vertices.tolist() for P in polytopes]
            chi = [] if early else tracker.split(K)[1]
            return ReconstructionResult(
                chi=chi,
                T=T,
                stopping_radius=K.outradius() + T,
                stages=n,
                terminated=True,
                trace=trace,
                xi=xi,
                admissions=admissions,
                polytopes=polytopes,
                early_exit=early,
                max_point_distance=T,
            )

    logger.info("reconstruction exhausted max_radius=%g after %d stages", params.max_radius, n)
    return ReconstructionResult(
        chi=[],
        T=math.inf,
        stopping_radius=math.inf,
        stages=n,
        terminated=False,
        trace=trace,
        xi=xi,
        admissions=admissions,
        max_point_distance=T,
    )
