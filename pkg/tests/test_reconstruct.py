import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hipsim.geometry import Ball, Hyperplane, enclosure_checks, match_hyperplanes
from hipsim.intersection import PhiSource, intersection_points
from hipsim.process import DirectionalModel, WorldOracle, hitting_subset, sample_hitting
from hipsim.reconstruct import (
    PointListSource,
    ReconstructionParams,
    certify_enclosure,
    detect_hyperplanes,
    peel,
    recover_hitting,
    recover_hitting_bruteforce,
    required_radius,
    run,
)

ISO2 = DirectionalModel.isotropic(2, 1.0)
DISK = Ball.centered(2, 1.0)


def H(u, s):
    return Hyperplane(np.asarray(u, dtype=float), float(s))


def square(a):
    return [H([1, 0], a), H([1, 0], -a), H([0, 1], a), H([0, 1], -a)]


def _solve(seed, K=DISK, params=None, model=ISO2):
    o = WorldOracle(model, seed)
    return o, run(PhiSource(o, K), K, params)


# ---------------------------------------------------------------------------
# detection


def test_detect_three_collinear_points():
    pts = [[-2, 5], [0, 5], [3, 5]]
    found = detect_hyperplanes(pts, DISK)
    assert len(found) == 1
    assert found[0].distance_to(H([0, 1], 5)) < 1e-9


def test_two_points_are_not_enough():
    assert detect_hyperplanes([[-2, 5], [0, 5]], DISK) == []


def test_detect_skips_hitting_lines():
    pts = [[-2, 0.5], [0, 0.5], [3, 0.5]]
    assert detect_hyperplanes(pts, DISK) == []
    assert len(recover_hitting(pts, DISK)) == 1


def test_duplicate_points_do_not_qualify():
    assert detect_hyperplanes([[0, 5], [0, 5], [1, 5]], DISK) == []


def _cube_vertices():
    return np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=float)


def test_lower_threshold_admits_false_plane():
    # the cube vertices on x + y = 0 form a coplanar quadruple off the arrangement
    K = Ball(np.array([0.0, 5.0, 0.0]), 0.5)
    false_plane = H(np.array([1, 1, 0]) / math.sqrt(2), 0.0)
    loose = detect_hyperplanes(_cube_vertices(), K, min_points=4)
    assert any(h.distance_to(false_plane) < 1e-9 for h in loose)
    strict = detect_hyperplanes(_cube_vertices(), K)
    assert not any(h.distance_to(false_plane) < 1e-9 for h in strict)


# ---------------------------------------------------------------------------
# recovery against brute force


def _instance(seed, d, n_lines, n_points):
    rng = np.random.default_rng(seed)
    U = rng.normal(size=(n_lines, d))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    S = rng.uniform(-2.5, 2.5, size=n_lines)
    hs = [Hyperplane(u, s) for u, s in zip(U, S)]
    X = np.array([p.x for p in intersection_points(hs, Ball.centered(d, 8.0))]).reshape(-1, d)
    rng.shuffle(X)
    noise = rng.uniform(-4, 4, size=(rng.integers(0, 4), d))
    return np.vstack([X[: n_points], noise])


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_lines=st.integers(2, 8), n_points=st.integers(0, 24))
def test_recover_matches_bruteforce_planar(seed, n_lines, n_points):
    X = _instance(seed, 2, n_lines, n_points)
    K = Ball(np.array([0.2, -0.1]), 1.0)
    fast = recover_hitting(X, K)
    slow = recover_hitting_bruteforce(X, K)
    _, extra, missing = match_hyperplanes(fast, slow, 1e-7)
    assert extra == [] and missing == []


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_planes=st.integers(3, 6))
def test_recover_matches_bruteforce_space(seed, n_planes):
    X = _instance(seed, 3, n_planes, 10)
    K = Ball.centered(3, 1.0)
    _, extra, missing = match_hyperplanes(recover_hitting(X, K), recover_hitting_bruteforce(X, K), 1e-7)
    assert extra == [] and missing == []


# ---------------------------------------------------------------------------
# certification


def test_square_certifies_at_corner_distance():
    corner = 2 * math.sqrt(2) - 1
    params = ReconstructionParams(polytope_count=1)
    assert certify_enclosure(square(2), DISK, corner - 0.01, params) is None
    layers = certify_enclosure(square(2), DISK, corner + 0.01, params)
    assert layers is not None and len(layers) == 1
    assert np.isclose(required_radius(layers, DISK), corner)


def test_nested_squares_give_three_layers():
    xi = square(2) + square(3) + square(4)
    outer = 4 * math.sqrt(2) - 1
    assert certify_enclosure(xi, DISK, outer - 0.01) is None
    layers = certify_enclosure(xi, DISK, outer + 0.01)
    assert len(layers) == 3
    active = [set(P.active.tolist()) for P in layers]
    assert all(not (a & b) for i, a in enumerate(active) for b in active[i + 1:])
    ex = certify_enclosure(xi, DISK, outer + 0.01, ReconstructionParams(search="exhaustive"))
    assert ex is not None and len(ex) == 3


def test_too_few_hyperplanes_for_count():
    assert certify_enclosure(square(2), DISK, 100.0) is None


def test_unbounded_layer_rejected():
    assert peel([H([1, 0], 2), H([0, 1], 2), H([1, 0], -2)], DISK, 1) is None


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(3, 8), count=st.integers(1, 2))
def test_greedy_certificates_are_sound(seed, n, count):
    rng = np.random.default_rng(seed)
    ang = rng.uniform(0, 2 * np.pi, n)
    U = np.column_stack([np.cos(ang), np.sin(ang)])
    S = rng.uniform(1.1, 4.0, n)
    xi = [Hyperplane(u, s) for u, s in zip(U, S)]
    r = rng.uniform(1.0, 12.0)
    params = ReconstructionParams(polytope_count=count)
    greedy = certify_enclosure(xi, DISK, r, params)
    if greedy is None:
        return
    assert len(greedy) == count
    for P in greedy:
        assert enclosure_checks(P, DISK, r)
    used = [set(P.active.tolist()) for P in greedy]
    assert sum(len(u) for u in used) == len(set().union(*used))
    exhaustive = certify_enclosure(xi, DISK, r, ReconstructionParams(polytope_count=count, search="exhaustive"))
    assert exhaustive is not None


# ---------------------------------------------------------------------------
# full runs


def test_seed_seven_recovers_truth():
    o, res = _solve(7)
    assert res.terminated
    _, extra, missing = match_hyperplanes(res.chi, hitting_subset(o, DISK))
    assert extra == [] and missing == []
    assert np.isclose(res.stopping_radius, 1.0 + res.T)


def test_runs_are_deterministic():
    _, a = _solve(11)
    _, b = _solve(11)
    assert a.to_json() == b.to_json()


def test_no_hitting_lines_gives_empty_chi():
    seeds = [s for s in range(60) if not hitting_subset(sample_hitting(ISO2, 1.0, s), DISK)]
    assert seeds
    for s in seeds[:3]:
        _, res = _solve(s)
        assert res.terminated and res.chi == []


def test_trace_is_monotone():
    _, res = _solve(3)
    T = [r.T for r in res.trace]
    assert all(a < b for a, b in zip(T, T[1:]))
    obs = [r.observed for r in res.trace]
    assert all(a <= b for a, b in zip(obs, obs[1:]))
    assert [r.n for r in res.trace] == list(range(1, res.stages + 1))
    lines = res.trace_ndjson().splitlines()
    assert len(lines) == res.stages and json.loads(lines[-1])["T"] == res.T


def test_spatial_detection_is_sound():
    # every plane spanned by five sampled points in general position is a true plane
    o = sample_hitting(DirectionalModel.isotropic(3, 1.0), 3.0, 2)
    pts = np.array([p.x for p in intersection_points(o.hyperplanes, Ball.centered(3, 3.0))])
    K = Ball(np.array([0.0, 0.0, 0.0]), 0.05)
    found = detect_hyperplanes(pts, K) + recover_hitting(pts, K)
    assert found
    _, extra, _ = match_hyperplanes(found, o.hyperplanes, 1e-6)
    assert extra == []
    # a true plane carrying at least five points in general position is found
    for h in o.hyperplanes:
        on = pts[np.abs(pts @ h.u - h.s) < 1e-9]
        if len(on) >= 8:
            assert any(g.distance_to(h) < 1e-6 for g in found)


class _Recording:
    def __init__(self, inner):
        self.inner = inner
        self.calls = []

    def points_in_annulus(self, lo, hi):
        self.calls.append((lo, hi))
        return self.inner.points_in_annulus(lo, hi)


class _Scrambled:
    """Serves true points up to ``cut`` and unrelated noise beyond it."""

    def __init__(self, inner, K, cut, seed):
        self.inner, self.K, self.cut = inner, K, cut
        self.rng = np.random.default_rng(seed)

    def points_in_annulus(self, lo, hi):
        real = self.inner.points_in_annulus(lo, min(hi, self.cut)) if lo < self.cut else np.zeros((0, 2))
        if hi <= self.cut:
            return real
        junk = self.rng.uniform(-hi - 1, hi + 1, size=(200, 2))
        dist = self.K.distance(junk)
        junk = junk[(dist > max(lo, self.cut)) & (dist <= hi)]
        return np.vstack([real, junk])


@pytest.mark.parametrize("seed", [1, 5, 9])
def test_decision_uses_only_points_within_stage_radius(seed):
    o, ref = _solve(seed)
    rec = _Recording(PhiSource(WorldOracle(ISO2, seed), DISK))
    again = run(rec, DISK)
    assert again.to_json() == ref.to_json()
    assert rec.calls
    # rerun on exactly the points within T
    within = PhiSource(WorldOracle(ISO2, seed), DISK).points_in_annulus(0.0, ref.T)
    trunc = run(PointListSource(within, DISK), DISK)
    assert trunc.T == ref.T and trunc.to_json() == ref.to_json()
    # anything served beyond T must not matter
    noisy = run(_Scrambled(PhiSource(WorldOracle(ISO2, seed), DISK), DISK, ref.T, seed), DISK)
    assert noisy.to_json() == ref.to_json()


@pytest.mark.parametrize("seed", [0, 4])
def test_non_incremental_tracker_agrees(seed):
    _, a = _solve(seed)
    _, b = _solve(seed, params=ReconstructionParams(incremental=False))
    assert (a.T, a.stages, a.terminated) == (b.T, b.stages, b.terminated)
    # plane fits may differ in the last bits with member order
    _, extra, missing = match_hyperplanes(a.chi, b.chi, 1e-9)
    assert extra == [] and missing == []
    assert [r.xi for r in a.trace] == [r.xi for r in b.trace]


def test_early_exit_only_when_nothing_hits():
    fired = 0
    for s in range(40):
        o, full = _solve(s)
        _, fast = _solve(s, params=ReconstructionParams(early_exit=True))
        assert fast.terminated and fast.T <= full.T
        if fast.early_exit:
            fired += 1
            assert hitting_subset(o, DISK) == [] and fast.chi == []
        else:
            assert fast.to_dict()["chi"] == full.to_dict()["chi"]
    assert fired > 0


def test_two_polytope_variant_stops_no_later():
    for s in range(10):
        o, full = _solve(s)
        _, two = _solve(s, params=ReconstructionParams(polytope_count=2))
        assert two.terminated and two.T <= full.T


def test_budget_exhaustion_reported():
    _, res = _solve(7, params=ReconstructionParams(max_radius=0.5))
    assert not res.terminated and math.isinf(res.T) and res.chi == []
    d = res.to_dict()
    assert d["T"] is None and d["stopping_radius"] is None


@pytest.mark.parametrize(
    "kw",
    [dict(incident_tol=-1.0), dict(gp_tol=0.0), dict(max_radius=0.0), dict(polytope_count=0), dict(search="random")],
)
def test_invalid_params(kw):
    with pytest.raises(ValueError):
        ReconstructionParams(**kw).resolve(DISK)


def test_resolved_defaults():
    p = ReconstructionParams().resolve(DISK)
    assert p.max_radius == 50.0 and p.polytope_count == 3
    assert np.isclose(p.incident_tol, 51e-9)
    assert ReconstructionParams().resolve(Ball.centered(3, 1.0)).polytope_count == 5
