import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from hipsim.geometry import Ball, Box, Hyperplane
from hipsim.intersection import (
    PhiSource,
    intersection_arrays,
    intersection_points,
    phi_m_measure,
    phi_m_total,
    points_in_annulus,
    points_to_csv,
)
from hipsim.process import DirectionalModel, derive_seed, sample_hitting

ISO2 = DirectionalModel.isotropic(2, 1.0)


def H(u, s):
    return Hyperplane(np.asarray(u, dtype=float), float(s))


# ---------------------------------------------------------------------------
# examples


def test_axes_meet_at_origin():
    pts = intersection_points([H([1, 0], 0), H([0, 1], 0)], Ball.centered(2, 1.0))
    assert len(pts) == 1
    assert np.allclose(pts[0].x, 0.0) and pts[0].parents == (0, 1)


def test_parallel_lines_do_not_meet():
    diag = {}
    pts = intersection_points([H([1, 0], 0), H([1, 0], 1)], Ball.centered(2, 5.0), diagnostics=diag)
    assert pts == [] and diag["singular"] == 1


def test_point_outside_window_dropped():
    assert intersection_points([H([1, 0], 3), H([0, 1], 3)], Ball.centered(2, 1.0)) == []


def test_three_coordinate_planes():
    hs = [H(e, c) for e, c in zip(np.eye(3), [0.1, -0.2, 0.3])]
    pts = intersection_points(hs, Box([-1] * 3, [1] * 3))
    assert len(pts) == 1 and np.allclose(pts[0].x, [0.1, -0.2, 0.3])


def test_phi1_single_line_through_centre():
    for r in (0.5, 2.0, 7.0):
        s = phi_m_measure([H([0.6, 0.8], 0.0)], 1, Ball.centered(2, r))
        assert np.isclose(s.total, 2 * r)
        assert np.isclose(phi_m_total(np.array([[0.6, 0.8]]), np.array([0.0]), 1, Ball.centered(2, r)), 2 * r)


def test_phi2_is_point_count():
    o = sample_hitting(ISO2, 6.0, 2)
    B = Ball.centered(2, 6.0)
    hs = o.hyperplanes
    assert phi_m_measure(hs, 2, B).total == len(intersection_points(hs, B))


def test_phi_measure_fast_path_agrees():
    o = sample_hitting(ISO2, 8.0, 31)
    B = Ball(np.array([1.0, 0.5]), 4.0)
    for m in (1, 2):
        slow = phi_m_measure(o.hyperplanes, m, B)
        assert np.isclose(phi_m_total(o.U, o.S, m, B), slow.total)
        assert np.isclose(slow.total, sum(c for _, c in slow.contributions))
        assert all(c > 0 for _, c in slow.contributions)


def test_phi_m_in_three_dimensions_with_box():
    o = sample_hitting(DirectionalModel.isotropic(3, 1.0), 4.0, 5)
    W = Box([-1, -1, -1], [1.5, 1, 1])
    for m in (1, 2, 3):
        s = phi_m_measure(o.hyperplanes, m, W)
        assert s.total >= 0
        assert all(len(c) == m for c, _ in s.contributions)


def test_phi_m_order_checked():
    with pytest.raises(ValueError):
        phi_m_measure([H([1, 0], 0)], 3, Ball.centered(2, 1.0))


# ---------------------------------------------------------------------------
# brute force


def _brute(U, S, window, tol=1e-12):
    out = []
    d = U.shape[1]
    for c in itertools.combinations(range(len(S)), d):
        M = U[list(c)]
        if abs(np.linalg.det(M)) < tol:
            continue
        x = np.linalg.solve(M, S[list(c)])
        if window.distance(x[None])[0] <= tol:
            out.append((c, x))
    return out


@settings(max_examples=60, deadline=None)
@given(n=st.integers(0, 25), seed=st.integers(0, 2**31 - 1), d=st.sampled_from([2, 3]))
def test_matches_brute_force(n, seed, d):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    S = rng.uniform(-3, 3, size=n)
    W = Ball(rng.uniform(-0.5, 0.5, size=d), 2.0)
    hs = [Hyperplane(u, s) for u, s in zip(U, S)]
    got = {p.parents: p.x for p in intersection_points(hs, W)}
    want = dict(_brute(U, S, W))
    assert set(got) == set(want)
    for k in want:
        assert np.allclose(got[k], want[k], atol=1e-9)


# ---------------------------------------------------------------------------
# invariants


def test_points_are_simple():
    for s in range(300):
        X, P, _ = intersection_arrays(*_arrays(sample_hitting(ISO2, 6.0, derive_seed(8, s))), Ball.centered(2, 6.0))
        if len(X) > 1:
            diff = np.abs(X[:, None] - X[None]).max(axis=2)
            np.fill_diagonal(diff, np.inf)
            assert diff.min() > 1e-9
        assert len({tuple(p) for p in P}) == len(P)


def _arrays(o):
    return o.U, o.S


def test_monotone_in_window():
    o = sample_hitting(ISO2, 10.0, 12)
    radii = [1.0, 2.5, 4.0, 7.0, 10.0]
    for m in (1, 2):
        vals = [phi_m_total(o.U, o.S, m, Ball.centered(2, r)) for r in radii]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))


def test_mean_phi1_unit_disk():
    # independent quadrature of gamma * int |B cap H_{u,s}| ds over s
    quad = integrate.quad(lambda s: 2 * np.sqrt(1 - s * s), -1, 1)[0]
    B = Ball.centered(2, 1.0)
    vals = np.array([phi_m_total(*_arrays(sample_hitting(ISO2, 1.0, derive_seed(9, s))), 1, B)
                     for s in range(1000)])
    se = vals.std(ddof=1) / np.sqrt(len(vals))
    assert abs(vals.mean() - quad) <= 3 * se
    assert np.isclose(quad, np.pi)


def test_mean_count_grows_like_area():
    radii = np.array([2.0, 4.0, 8.0])
    means = []
    for r in radii:
        B = Ball.centered(2, r)
        means.append(np.mean([phi_m_total(*_arrays(sample_hitting(ISO2, r, derive_seed(10, s))), 2, B)
                              for s in range(300)]))
    slope = np.polyfit(np.log(radii), np.log(means), 1)[0]
    assert abs(slope - 2.0) < 0.2


# ---------------------------------------------------------------------------
# annulus queries


def test_empty_annulus():
    o = sample_hitting(ISO2, 1.0, 4)
    assert points_in_annulus(o, Ball.centered(2, 1.0), 3.0, 3.0) == []


def test_annulus_partition_additive():
    K = Ball.centered(2, 1.0)
    o = sample_hitting(ISO2, 1.0, 14)
    src = PhiSource(o, K)
    whole = src.points_in_annulus(0.0, 9.0)
    parts = [src.points_in_annulus(a, b) for a, b in [(0, 2), (2, 5.5), (5.5, 9)]]
    assert sum(len(p) for p in parts) == len(whole)
    assert np.array_equal(np.vstack(parts), whole)
    dist = K.distance(whole)
    assert np.all(np.diff(dist) >= 0)


def test_annulus_query_order_invariant():
    K = Ball(np.array([0.5, 0.0]), 1.0)
    a = PhiSource(sample_hitting(ISO2, 1.0, 6), K)
    a.points_in_annulus(0.0, 3.0)
    a.points_in_annulus(3.0, 8.0)
    b = PhiSource(sample_hitting(ISO2, 1.0, 6), K)
    b.points_in_annulus(0.0, 8.0)
    assert np.array_equal(a.points_in_annulus(0.0, 8.0), b.points_in_annulus(0.0, 8.0))


def test_incremental_source_matches_direct_enumeration():
    K = Ball.centered(2, 1.0)
    o = sample_hitting(ISO2, 1.0, 19)
    src = PhiSource(o, K)
    for r in (2.0, 4.0, 6.0):
        src.points_in_annulus(0.0, r)
    got = {p.parents for p in src.annulus_with_parents(0.0, 6.0)}
    window = Ball.centered(2, 7.0)
    want = {p.parents for p in intersection_points(o.hyperplanes, window) if K.distance(p.x[None])[0] <= 6.0}
    assert got == want


def test_points_csv():
    X = np.array([[0.5, -1.0], [2.0, 3.0]])
    text = points_to_csv(X, parents=[(0, 1), (1, 4)])
    lines = text.splitlines()
    assert lines[0] == "x_1,x_2,parents"
    assert lines[2].endswith(",1 4")
    assert points_to_csv(X).splitlines()[0] == "x_1,x_2"
