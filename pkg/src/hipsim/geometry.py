"""Geometric primitives: hyperplanes, flats, convex windows and polytopes.

All predicates use explicit absolute tolerances. Callers that work at a
known length scale should pass ``tol = 1e-9 * scale``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.spatial import ConvexHull, QhullError

DEFAULT_TOL = 1e-9
# coordinates below this magnitude are treated as zero when fixing the sign
_SIGN_EPS = 1e-12


class GeometryError(ValueError):
    pass


class AffinelyDependent(GeometryError):
    pass


class TooFewPoints(GeometryError):
    pass


class EmptyIntersection(GeometryError):
    pass


class UnsupportedDimension(GeometryError):
    pass


class Unbounded(GeometryError):
    pass


def unit_ball_volume(k: int) -> float:
    """Volume of the unit ball in R^k (``k = 0`` gives 1)."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


# ---------------------------------------------------------------------------
# hyperplanes


def canonicalize(u, s):
    """Return the canonical ``(u, s)`` pair for the hyperplane ``<x, u> = s``.

    Works on a single hyperplane (``u`` of shape ``(d,)``) or on stacked
    arrays (``u`` of shape ``(n, d)``, ``s`` of shape ``(n,)``). The sign is
    chosen so the first coordinate of ``u`` with magnitude above 1e-12 is
    positive.
    """
    u = np.asarray(u, dtype=float)
    s = np.asarray(s, dtype=float)
    U = np.atleast_2d(u)
    big = np.abs(U) > _SIGN_EPS
    first = np.argmax(big, axis=1)
    lead = U[np.arange(U.shape[0]), first]
    sign = np.where(lead < 0, -1.0, 1.0)
    U = U * sign[:, None]
    S = np.atleast_1d(s) * sign
    if u.ndim == 1:
        return U[0], float(S[0])
    return U, S


@dataclass(frozen=True, eq=False)
class Hyperplane:
    """The hyperplane ``{x : <x, u> = s}`` with unit normal, in canonical form."""

    u: np.ndarray
    s: float

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        norm = np.linalg.norm(u)
        if not np.isfinite(norm) or abs(norm - 1.0) > 1e-12:
            raise ValueError(f"normal must have unit length, got |u| = {norm!r}")
        u, s = canonicalize(u, float(self.s))
        u.setflags(write=False)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_normal(cls, n, c) -> Hyperplane:
        """Build ``{<x, n> = c}`` for an arbitrary nonzero ``n``."""
        n = np.asarray(n, dtype=float)
        norm = np.linalg.norm(n)
        if norm == 0:
            raise ValueError("zero normal")
        return cls(n / norm, float(c) / norm)

    @property
    def dim(self) -> int:
        return self.u.shape[0]

    def signed_distance(self, x) -> np.ndarray | float:
        return np.asarray(x, dtype=float) @ self.u - self.s

    def contains(self, x, tol: float = DEFAULT_TOL) -> bool:
        return bool(np.all(np.abs(self.signed_distance(x)) <= tol))

    def hits(self, body: ConvexBody) -> bool:
        return bool(body.hit_mask(self.u[None, :], np.array([self.s]))[0])

    def distance_to(self, other: Hyperplane) -> float:
        """Sup-norm distance between the canonical parameter vectors.

        Both sign representations are compared so that hyperplanes whose
        normal sits at the canonical sign boundary still match.
        """
        du = self.u - other.u
        su = self.u + other.u
        minus = max(float(np.abs(du).max()), abs(self.s - other.s))
        plus = max(float(np.abs(su).max()), abs(self.s + other.s))
        return min(minus, plus)

    def as_array(self) -> np.ndarray:
        return np.append(self.u, self.s)

    def __repr__(self):
        u = ", ".join(f"{v:.6g}" for v in self.u)
        return f"Hyperplane(u=({u}), s={self.s:.6g})"


def hyperplane_arrays(hyperplanes) -> tuple[np.ndarray, np.ndarray]:
    """Stack a sequence of hyperplanes into ``(U, S)`` arrays."""
    hyperplanes = list(hyperplanes)
    if not hyperplanes:
        return np.zeros((0, 0)), np.zeros(0)
    U = np.array([h.u for h in hyperplanes])
    S = np.array([h.s for h in hyperplanes])
    return U, S


def match_hyperplanes(found, truth, tol: float = 1e-6):
    """Greedy one-to-one matching of two hyperplane collections.

    Returns ``(matched_pairs, unmatched_found, unmatched_truth)`` as index
    lists.
    """
    found = list(found)
    truth = list(truth)
    free = set(range(len(truth)))
    pairs, extra = [], []
    for i, h in enumerate(found):
        best, best_d = None, tol
        for j in free:
            dist = h.distance_to(truth[j])
            if dist <= best_d:
                best, best_d = j, dist
        if best is None:
            extra.append(i)
        else:
            pairs.append((i, best))
            free.discard(best)
    return pairs, extra, sorted(free)


def _affine_scale(pts: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(pts))))


def affinely_independent(pts, tol: float = DEFAULT_TOL) -> bool:
    """Whether the rows of ``pts`` are affinely independent.

    The smallest singular value of the difference matrix must exceed
    ``tol`` times the coordinate scale.
    """
    pts = np.asarray(pts, dtype=float)
    if pts.shape[0] <= 1:
        return True
    if pts.shape[0] - 1 > pts.shape[1]:
        return False
    diffs = pts[1:] - pts[0]
    sv = np.linalg.svd(diffs, compute_uv=False)
    return bool(sv[-1] > tol * _affine_scale(pts))


def hyperplane_through_points(pts, tol: float = DEFAULT_TOL) -> Hyperplane:
    """The hyperplane spanned by ``d`` affinely independent points in R^d."""
    pts = np.asarray(pts, dtype=float)
    n, d = pts.shape
    if n != d:
        raise ValueError(f"need exactly {d} points in R^{d}, got {n}")
    if not affinely_independent(pts, tol):
        raise AffinelyDependent("points do not span a hyperplane")
    return fit_hyperplane(pts)


def fit_hyperplane(pts) -> Hyperplane:
    """Total least squares hyperplane through ``pts`` (at least ``d`` rows)."""
    pts = np.asarray(pts, dtype=float)
    centroid = pts.mean(axis=0)
    d = pts.shape[1]
    if d == 2 and pts.shape[0] == 2:
        t = pts[1] - pts[0]
        u = np.array([-t[1], t[0]]) / np.hypot(t[0], t[1])
    else:
        _, _, vt = np.linalg.svd(pts - centroid)
        u = vt[-1]
        u = u / np.linalg.norm(u)
    return Hyperplane(u, float(centroid @ u))


def in_general_hyperplane_position(pts, tol: float = DEFAULT_TOL) -> bool:
    """Whether ``n >= d`` points are in general hyperplane position.

    Every ``d``-subset must be affinely independent and all of them must span
    the same hyperplane: canonical parameters agree within ``tol``.
    """
    pts = np.asarray(pts, dtype=float)
    n, d = pts.shape
    if n < d:
        raise TooFewPoints(f"need at least {d} points, got {n}")
    ref = None
    for combo in itertools.combinations(range(n), d):
        sub = pts[list(combo)]
        if not affinely_independent(sub, tol):
            return False
        h = fit_hyperplane(sub)
        if ref is None:
            ref = h
        elif h.distance_to(ref) > tol:
            return False
    return True


# ---------------------------------------------------------------------------
# flats


@dataclass(frozen=True, eq=False)
class Flat:
    """Affine subspace ``anchor + span(directions)``."""

    dim: int
    anchor: np.ndarray
    directions: np.ndarray
    degenerate: bool = False

    @property
    def ambient_dim(self) -> int:
        return self.anchor.shape[0]

    def point(self, t) -> np.ndarray:
        return self.anchor + np.asarray(t, dtype=float) @ self.directions


def intersect_hyperplanes(hs, tol: float = DEFAULT_TOL) -> Flat | None:
    """Intersect ``1 <= m <= d`` hyperplanes.

    Returns the solution flat (anchor is the minimum-norm solution), or
    ``None`` when the system is inconsistent. Rank deficient but consistent
    systems give a flat of dimension ``d - rank`` with ``degenerate=True``.
    """
    hs = list(hs)
    if not hs:
        raise ValueError("need at least one hyperplane")
    d = hs[0].dim
    if len(hs) > d:
        raise ValueError(f"at most {d} hyperplanes in R^{d}")
    A = np.array([h.u for h in hs])
    b = np.array([h.s for h in hs])
    _, sv, vt = np.linalg.svd(A)
    rank = int(np.sum(sv > tol))
    x, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.max(np.abs(A @ x - b)) > tol * max(1.0, float(np.max(np.abs(b)))):
        return None
    directions = vt[rank:]
    return Flat(d - rank, x, directions, degenerate=rank < len(hs))


# ---------------------------------------------------------------------------
# convex bodies


class ConvexBody:
    """Nonempty compact convex set in R^d."""

    dim: int

    def support(self, u) -> np.ndarray:
        """Support function ``max_{y in K} <u, y>`` for rows of ``u``."""
        raise NotImplementedError

    def distance(self, x) -> np.ndarray:
        """Euclidean distance to the body for rows of ``x``."""
        raise NotImplementedError

    def outradius(self) -> float:
        """Radius of the smallest origin-centred ball containing the body."""
        raise NotImplementedError

    def volume(self) -> float:
        raise NotImplementedError

    def scaled(self, r: float) -> ConvexBody:
        """The dilate ``r * K`` about the origin."""
        raise NotImplementedError

    def interior_point(self) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 0.0) -> np.ndarray:
        return self.distance(x) <= tol

    def hit_mask(self, U, S) -> np.ndarray:
        """Which hyperplanes ``<x, U[i]> = S[i]`` intersect the body."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        S = np.asarray(S, dtype=float)
        if U.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        hi = self.support(U)
        lo = -self.support(-U)
        return (S >= lo) & (S <= hi)


@dataclass(frozen=True, eq=False)
class Ball(ConvexBody):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).ravel()
        if not self.radius > 0:
            raise ValueError("ball radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def centered(cls, d: int, radius: float) -> Ball:
        return cls(np.zeros(d), radius)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    def support(self, u):
        u = np.atleast_2d(u)
        return u @ self.center + self.radius * np.linalg.norm(u, axis=1)

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        return np.maximum(np.linalg.norm(x - self.center, axis=-1) - self.radius, 0.0)

    def outradius(self):
        return float(np.linalg.norm(self.center)) + self.radius

    def volume(self):
        return unit_ball_volume(self.dim) * self.radius**self.dim

    def scaled(self, r):
        return Ball(self.center * r, self.radius * r)

    def interior_point(self):
        return self.center.copy()

    def to_dict(self):
        return {"type": "ball", "center": self.center.tolist(), "radius": self.radius}


@dataclass(frozen=True, eq=False)
class Box(ConvexBody):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape or not np.all(lo < hi):
            raise ValueError("box needs lo < hi componentwise")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self):
        return self.lo.shape[0]

    def support(self, u):
        u = np.atleast_2d(u)
        return np.maximum(u * self.lo, u * self.hi).sum(axis=1)

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        gap = np.maximum(self.lo - x, 0.0) + np.maximum(x - self.hi, 0.0)
        return np.linalg.norm(gap, axis=-1)

    def outradius(self):
        return float(np.linalg.norm(np.maximum(np.abs(self.lo), np.abs(self.hi))))

    def volume(self):
        return float(np.prod(self.hi - self.lo))

    def scaled(self, r):
        return Box(self.lo * r, self.hi * r)

    def interior_point(self):
        return (self.lo + self.hi) / 2

    def halfspaces(self):
        d = self.dim
        A = np.vstack([np.eye(d), -np.eye(d)])
        b = np.concatenate([self.hi, -self.lo])
        return A, b

    def to_dict(self):
        return {"type": "box", "lo": self.lo.tolist(), "hi": self.hi.tolist()}


class HPolytope(ConvexBody):
    """Bounded intersection of halfspaces ``<x, n_i> <= c_i``."""

    def __init__(self, halfspaces, tol: float = DEFAULT_TOL):
        A, b = as_halfspaces(halfspaces)
        self.A, self.b = A, b
        self.tol = tol
        center, radius = chebyshev_center(A, b)
        if center is None or radius <= tol:
            raise EmptyIntersection("polytope has empty interior")
        if not recession_trivial(A):
            raise Unbounded("halfspace intersection is unbounded")
        self._center = center
        self._vertices = None

    @property
    def dim(self):
        return self.A.shape[1]

    @property
    def vertices(self) -> np.ndarray:
        if self._vertices is None:
            if self.dim in (2, 3):
                self._vertices = halfspace_polytope((self.A, self.b), self.tol).vertices
            else:
                self._vertices = _brute_force_vertices(self.A, self.b, self.tol)
        return self._vertices

    def halfspaces(self):
        return self.A, self.b

    def support(self, u):
        u = np.atleast_2d(u)
        return np.max(u @ self.vertices.T, axis=1)

    def distance(self, x):
        x = np.asarray(x, dtype=float)
        flat = np.atleast_2d(x)
        out = np.array([_polytope_distance(self.A, self.b, p, self.tol) for p in flat])
        return out if x.ndim > 1 else out[0]

    def outradius(self):
        return float(np.max(np.linalg.norm(self.vertices, axis=1)))

    def volume(self):
        return float(ConvexHull(self.vertices).volume)

    def scaled(self, r):
        return HPolytope((self.A, self.b * r), self.tol)

    def interior_point(self):
        return self._center.copy()

    def to_dict(self):
        return {"type": "polytope", "halfspaces": np.column_stack([self.A, self.b]).tolist()}


def body_from_dict(spec: dict) -> ConvexBody:
    kind = spec["type"]
    if kind == "ball":
        return Ball(spec["center"], spec["radius"])
    if kind == "box":
        return Box(spec["lo"], spec["hi"])
    if kind == "polytope":
        return HPolytope(np.asarray(spec["halfspaces"], dtype=float))
    raise ValueError(f"unknown body type {kind!r}")


def distance_to_body(x, K: ConvexBody) -> float:
    """Euclidean distance from point ``x`` to ``K``; zero inside."""
    return float(K.distance(np.asarray(x, dtype=float)))


def _polytope_distance(A, b, x, tol):
    if np.all(A @ x <= b + tol):
        return 0.0
    res = optimize.minimize(
        lambda y: 0.5 * np.sum((y - x) ** 2),
        x0=x,
        jac=lambda y: y - x,
        constraints=[{"type": "ineq", "fun": lambda y: b - A @ y, "jac": lambda y: -A}],
        method="SLSQP",
        options={"ftol": 1e-15, "maxiter": 500},
    )
    return float(np.linalg.norm(res.x - x))


# ---------------------------------------------------------------------------
# halfspace intersections


def as_halfspaces(halfspaces) -> tuple[np.ndarray, np.ndarray]:
    """Normalize halfspace input to ``(A, b)`` with unit-norm rows.

    Accepts an ``(A, b)`` pair, an ``(n, d+1)`` array ``[n | c]``, or a
    sequence of ``(normal, offset)`` pairs.
    """
    if isinstance(halfspaces, tuple) and len(halfspaces) == 2 and np.ndim(halfspaces[0]) == 2:
        A = np.asarray(halfspaces[0], dtype=float)
        b = np.asarray(halfspaces[1], dtype=float)
    elif isinstance(halfspaces, np.ndarray):
        A = halfspaces[:, :-1].astype(float)
        b = halfspaces[:, -1].astype(float)
    else:
        pairs = list(halfspaces)
        if not pairs:
            raise ValueError("no halfspaces given")
        A = np.array([np.asarray(n, dtype=float) for n, _ in pairs])
        b = np.array([float(c) for _, c in pairs])
    if A.shape[0] == 0:
        raise ValueError("no halfspaces given")
    norms = np.linalg.norm(A, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero halfspace normal")
    return A / norms[:, None], b / norms


def chebyshev_center(A, b, cap: float = 1.0):
    """Centre and radius (capped at ``cap``) of the largest inscribed ball.

    Returns ``(None, -inf)`` when the system is infeasible.
    """
    n, d = A.shape
    c = np.zeros(d + 1)
    c[-1] = -1.0
    A_ub = np.column_stack([A, np.linalg.norm(A, axis=1)])
    bounds = [(None, None)] * d + [(None, cap)]
    res = optimize.linprog(c, A_ub=A_ub, b_ub=b, bounds=bounds, method="highs")
    if res.status == 2:
        return None, -np.inf
    if res.status != 0:
        raise GeometryError(f"linear program failed: {res.message}")
    return res.x[:d], float(res.x[-1])


def recession_trivial(A) -> bool:
    """True iff ``{y : A y <= 0} = {0}``, i.e. the normals positively span R^d."""
    d = A.shape[1]
    for k in range(d):
        for sign in (1.0, -1.0):
            c = np.zeros(d)
            c[k] = -sign
            res = optimize.linprog(
                c, A_ub=A, b_ub=np.zeros(A.shape[0]), bounds=[(-1, 1)] * d, method="highs"
            )
            if res.status == 0 and -res.fun > 1e-9:
                return False
    return True


@dataclass(frozen=True, eq=False)
class Polytope:
    """Halfspace intersection with enumerated vertices.

    ``active`` lists the indices of halfspaces that support a facet.
    For bounded 2D polytopes the vertices are in counterclockwise order.
    """

    A: np.ndarray
    b: np.ndarray
    vertices: np.ndarray
    bounded: bool
    active: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def halfspaces(self):
        return list(zip(self.A, self.b))

    @property
    def dim(self):
        return self.A.shape[1]

    def edges(self, tol: float = DEFAULT_TOL) -> list[tuple[int, int]]:
        """Vertex index pairs joined by an edge (1-face)."""
        V = self.vertices
        if len(V) < 2:
            return []
        if self.dim == 2 and self.bounded:
            k = len(V)
            return [(i, (i + 1) % k) for i in range(k)]
        tight = np.abs(V @ self.A.T - self.b) <= tol * max(1.0, float(np.max(np.abs(V))))
        out = []
        for i, j in itertools.combinations(range(len(V)), 2):
            common = np.flatnonzero(tight[i] & tight[j])
            if len(common) and np.linalg.matrix_rank(self.A[common], tol=1e-9) >= self.dim - 1:
                out.append((i, j))
        return out


def _brute_force_vertices(A, b, tol):
    n, d = A.shape
    verts = []
    scale = max(1.0, float(np.max(np.abs(b))))
    for combo in itertools.combinations(range(n), d):
        sub = A[list(combo)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(combo)])
        if np.all(A @ v <= b + tol * max(scale, float(np.max(np.abs(v))))):
            if not any(np.max(np.abs(v - w)) <= 1e3 * tol * scale for w in verts):
                verts.append(v)
    return np.array(verts).reshape(-1, d)


def _cross2(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def _hull_2d(P):
    """Andrew's monotone chain; returns hull indices counterclockwise."""
    order = sorted(range(len(P)), key=lambda i: (P[i][0], P[i][1]))
    if len(order) <= 2:
        return order

    def chain(seq):
        out = []
        for i in seq:
            while len(out) >= 2 and _cross2(P[out[-2]], P[out[-1]], P[i]) <= 0:
                out.pop()
            out.append(i)
        return out

    lower = chain(order)
    upper = chain(reversed(order))
    return lower[:-1] + upper[:-1]


def _polygon_walk(A, b, c):
    """Vertex walk for a 2D halfspace intersection containing ``c`` strictly.

    Each halfspace maps to the dual point ``a / (b - <a, c>)``; the convex
    hull of the dual points, walked counterclockwise, lists the facet
    halfspaces in angular order and consecutive pairs meet at vertices.
    """
    slack = b - A @ c
    Q = A / slack[:, None]
    ring = _hull_2d([tuple(q) for q in Q])
    if len(ring) < 3:
        return None, np.asarray(ring, dtype=int)
    # bounded iff the dual origin is strictly inside the dual hull
    for i, j in zip(ring, ring[1:] + ring[:1]):
        if _cross2(Q[i], Q[j], (0.0, 0.0)) <= 0:
            return None, np.asarray(ring, dtype=int)
    verts = []
    for i, j in zip(ring, ring[1:] + ring[:1]):
        verts.append(np.linalg.solve(A[[i, j]], b[[i, j]]))
    # the dual ring runs counterclockwise in normal angle, and so do the vertices
    return np.array(verts), np.asarray(ring, dtype=int)


def _polytope_dual_hull(A, b, c):
    """3D vertex enumeration through the convex hull of dual points."""
    slack = b - A @ c
    Q = A / slack[:, None]
    try:
        hull = ConvexHull(Q)
    except QhullError:
        return None, np.zeros(0, dtype=int)
    # facet equations: n . q + off = 0 with off < 0 iff origin strictly inside
    if np.any(hull.equations[:, -1] >= -1e-14):
        return None, np.unique(hull.vertices)
    verts = []
    for eq in hull.equations:
        v = c - eq[:-1] / eq[-1]
        if not any(np.max(np.abs(v - w)) <= 1e-9 * max(1.0, float(np.max(np.abs(v)))) for w in verts):
            verts.append(v)
    return np.array(verts), np.sort(hull.vertices)


def halfspace_polytope(halfspaces, tol: float = DEFAULT_TOL, interior=None) -> Polytope:
    """Vertex enumeration of ``{x : <x, n_i> <= c_i}`` for ``d`` in {2, 3}.

    ``interior`` may supply a point strictly inside all halfspaces; it is
    found by linear programming otherwise. Raises :class:`EmptyIntersection`
    when the intersection has no interior.
    """
    A, b = as_halfspaces(halfspaces)
    d = A.shape[1]
    if d not in (2, 3):
        raise UnsupportedDimension(f"vertex enumeration supports d in (2, 3), got {d}")
    if interior is None:
        c, radius = chebyshev_center(A, b)
        if c is None or radius <= tol:
            raise EmptyIntersection("halfspace intersection has empty interior")
    else:
        c = np.asarray(interior, dtype=float)
        if np.any(A @ c >= b - tol):
            raise ValueError("interior point is not strictly inside")
    verts, active = _polygon_walk(A, b, c) if d == 2 else _polytope_dual_hull(A, b, c)
    if verts is None:
        bounded = False
        verts = _brute_force_vertices(A, b, tol)
        tight = np.abs(verts @ A.T - b) <= tol * max(1.0, float(np.max(np.abs(b))))
        active = np.flatnonzero(tight.any(axis=0)) if len(verts) else np.zeros(0, dtype=int)
    else:
        bounded = True
    return Polytope(A, b, verts, bounded, np.asarray(active, dtype=int))


def enclosure_checks(P: Polytope, K: ConvexBody, r: float, tol: float = DEFAULT_TOL) -> bool:
    """Whether ``K`` lies in the interior of ``P`` and ``P``'s boundary lies within ``K_r``.

    Distance to ``K`` is convex, so its maximum over ``P`` is attained at a
    vertex; checking vertices suffices.
    """
    if not P.bounded:
        raise Unbounded("enclosure check needs a bounded polytope")
    if np.any(K.support(P.A) >= P.b - tol):
        return False
    return bool(np.max(K.distance(P.vertices)) <= r)


# ---------------------------------------------------------------------------
# Hausdorff measure of clipped flats


def _clip_interval(anchor, direction, A, b):
    """Parameter interval of ``anchor + t * direction`` inside ``A x <= b``."""
    lo, hi = -np.inf, np.inf
    rate = A @ direction
    room = b - A @ anchor
    for a, r in zip(rate, room):
        if abs(a) < 1e-15:
            if r < 0:
                return 0.0, 0.0
            continue
        t = r / a
        if a > 0:
            hi = min(hi, t)
        else:
            lo = max(lo, t)
    if hi <= lo:
        return 0.0, 0.0
    return lo, hi


def _section_area(flat: Flat, A, b, tol) -> float:
    D = flat.directions
    A2 = A @ D.T
    b2 = b - A @ flat.anchor
    norms = np.linalg.norm(A2, axis=1)
    keep = norms > 1e-14
    if np.any(b2[~keep] < 0):
        return 0.0
    A2, b2 = A2[keep], b2[keep]
    try:
        poly = halfspace_polytope((A2, b2), tol)
    except EmptyIntersection:
        return 0.0
    V = poly.vertices
    x, y = V[:, 0], V[:, 1]
    return 0.5 * abs(float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def flat_measure_in_window(f: Flat | None, B: ConvexBody, tol: float = DEFAULT_TOL) -> float:
    """Hausdorff measure of ``f ∩ B`` in dimension ``f.dim``."""
    if f is None:
        return 0.0
    if f.dim == 0:
        return 1.0 if float(B.distance(f.anchor)) <= tol else 0.0
    if isinstance(B, Ball):
        # distance from the centre to the flat
        rel = B.center - f.anchor
        foot = f.anchor + (rel @ f.directions.T) @ f.directions
        h2 = float(np.sum((B.center - foot) ** 2))
        if h2 >= B.radius**2:
            return 0.0
        return unit_ball_volume(f.dim) * (B.radius**2 - h2) ** (f.dim / 2)
    if f.dim > 2:
        raise UnsupportedDimension("flats above dimension 2 need a ball window")
    A, b = B.halfspaces()
    A, b = as_halfspaces((A, b))
    if f.dim == 1:
        lo, hi = _clip_interval(f.anchor, f.directions[0], A, b)
        return float(hi - lo)
    return _section_area(f, A, b, tol)
