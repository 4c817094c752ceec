import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heisenberg_qc.group import HPoint, dilate_array, multiply_array
from heisenberg_qc.metrics import (
    Ball,
    HorizontalPath,
    PointCloud,
    ball_sample_interior,
    bilipschitz_constants,
    cc_distance_array,
    cc_distance_estimate,
    cc_koranyi_bounds,
    cc_norm_array,
    distance_array,
    koranyi_ball_volume_exact,
    koranyi_distance,
    koranyi_distance_array,
    koranyi_norm,
    set_diameter_estimate,
    set_distance_estimate,
    sphere_sample,
)

SQRT_PI = np.sqrt(np.pi)
coord = st.floats(-20, 20, allow_nan=False)
pt = st.lists(coord, min_size=3, max_size=3).map(np.array)


def test_koranyi_norm_examples():
    assert koranyi_norm(HPoint(np.array([0j]), 1.0)) == 1.0
    assert koranyi_norm(HPoint(np.array([1 + 0j]), 0.0)) == 1.0
    assert koranyi_norm(HPoint(np.array([1 + 0j]), 1.0)) == pytest.approx(2**0.25, rel=1e-12)
    assert koranyi_norm(HPoint.identity(3)) == 0.0


@settings(max_examples=200, deadline=None)
@given(pt, pt, pt)
def test_koranyi_metric_axioms(p, q, l):
    d = koranyi_distance_array(p, q)
    assert d == pytest.approx(koranyi_distance_array(q, p), rel=1e-9, abs=1e-9)
    lp, lq = multiply_array(l, p), multiply_array(l, q)
    assert koranyi_distance_array(lp, lq) == pytest.approx(d, rel=1e-7, abs=1e-6)
    assert koranyi_distance_array(dilate_array(2.0, p), dilate_array(2.0, q)) == pytest.approx(2 * d, rel=1e-9, abs=1e-9)
    # triangle inequality with constant 1
    assert d <= koranyi_distance_array(p, l) + koranyi_distance_array(l, q) + 1e-9 * (1 + d)


def test_distance_to_self():
    p = HPoint(np.array([1 + 3j]), -2.0)
    assert koranyi_distance(p, p) == 0.0


def test_path_t_obeys_horizontal_ode():
    # unit square traversed counter-clockwise: t drops by 4 * area
    W = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]], dtype=float)
    path = HorizontalPath(W)
    assert path.end.t == pytest.approx(-4.0)
    assert path.length() == 4.0
    # refinement does not move the curve
    assert path.refined(16).end.t == pytest.approx(-4.0)
    # endpoint equals the group product of the increments
    prod = np.zeros(3)
    for d in np.diff(W, axis=0):
        prod = multiply_array(prod, np.r_[d, 0.0])
    assert np.allclose(path.points()[-1], prod)


def test_cc_horizontal_segment():
    for a in (0.5, 1.0, 3.0):
        res = cc_distance_estimate(HPoint.identity(1), HPoint(np.array([a + 0j]), 0.0))
        assert res.value == pytest.approx(a, rel=5e-3)
        assert res.value >= a * (1 - 1e-9)


def test_cc_vertical_isoperimetric():
    res = cc_distance_estimate(HPoint.identity(1), HPoint(np.array([0j]), 1.0))
    assert res.value == pytest.approx(SQRT_PI, rel=1e-2)
    assert res.value >= SQRT_PI * (1 - 1e-6)  # the polygon is an upper bound
    assert res.estimate().bound == "upper"
    end = res.path.end.coords
    assert np.allclose(end, [0, 0, 1], atol=1e-8)
    assert res.path.length() == pytest.approx(res.value, rel=1e-9)


def test_cc_same_point_and_monotone_ladder():
    p = HPoint(np.array([0.3 + 0.2j]), 0.7)
    assert cc_distance_estimate(p, p).value == 0.0
    res = cc_distance_estimate(HPoint.identity(1), HPoint(np.array([0.4 + 0.1j]), 0.6))
    vals = [v for _, v in res.ladder]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        cc_distance_estimate(HPoint.identity(1), p, segments=1)


def test_cc_profile_matches_optimizer_and_invariances():
    rng = np.random.default_rng(5)
    P = rng.normal(size=(6, 3))
    for p in P:
        direct = cc_distance_estimate(HPoint.identity(1), HPoint.from_coords(p), restarts=4).value
        assert cc_norm_array(p) == pytest.approx(direct, rel=5e-3)
    lo, hi = cc_koranyi_bounds()
    assert lo == pytest.approx(1.0, abs=1e-3)
    assert hi == pytest.approx(SQRT_PI, rel=1e-2)
    Q = rng.normal(size=(50, 3))
    L = rng.normal(size=(50, 3))
    assert np.allclose(cc_distance_array(multiply_array(L, P[:1]), multiply_array(L, Q)),
                       cc_distance_array(P[:1], Q))
    assert np.allclose(cc_distance_array(dilate_array(3.0, P[:1]), dilate_array(3.0, Q)),
                       3.0 * cc_distance_array(P[:1], Q))


@pytest.mark.parametrize("metric", ["koranyi", "cc"])
def test_sphere_samples_exact_and_homogeneous(metric):
    c = HPoint(np.array([1 - 1j]), 0.5)
    S = sphere_sample(c, 0.7, metric, 500, seed=1)
    d = distance_array(S, c.coords, metric)
    assert np.max(np.abs(d - 0.7)) / 0.7 <= 1e-10
    U = sphere_sample(HPoint.identity(1), 1.0, metric, 200, seed=2)
    R = sphere_sample(HPoint.identity(1), 3.0, metric, 200, seed=2)
    assert np.allclose(dilate_array(3.0, U), R)
    D1 = distance_array(U[:, None], U[None], metric)
    D3 = distance_array(R[:, None], R[None], metric)
    assert D3.max() == pytest.approx(3 * D1.max(), rel=1e-9)
    off = ~np.eye(len(U), dtype=bool)
    assert D3[off].min() == pytest.approx(3 * D1[off].min(), rel=1e-9)


def test_ball_interior_samples():
    B = Ball(HPoint(np.array([2 + 0j]), -1.0), 0.5)
    P = ball_sample_interior(B, 20_000, seed=3)
    assert B.contains(P).all()
    # Haar-uniform: the relative position is uniform in the unit ball, so the
    # mean of |z|^2 after normalising is 4 / (3 pi) in H^1
    rel = dilate_array(2.0, multiply_array(np.array([-2.0, 0, 1.0]), P))
    assert np.mean(np.sum(rel[:, :2] ** 2, axis=1)) == pytest.approx(4 / (3 * np.pi), rel=0.02)


def test_exact_volume_formula():
    assert koranyi_ball_volume_exact(1) == pytest.approx(np.pi**2 / 2)
    assert koranyi_ball_volume_exact(2, 2.0) == pytest.approx(koranyi_ball_volume_exact(2) * 2**6)


def test_diameter_of_unit_ball():
    est = set_diameter_estimate(Ball(HPoint.identity(1), 1.0), seed=0)
    assert est.bound == "lower"
    assert est.value <= 2.0 + 1e-12
    assert est.value == pytest.approx(2.0, rel=0.02)


def test_set_distance_cases():
    B = Ball(HPoint(np.array([0.3j]), 0.1), 0.25)
    assert set_distance_estimate(B, B, seed=0).value == pytest.approx(0.0, abs=1e-3)
    # centres on a horizontal ray: the Koranyi distance is exactly 13/16
    E1 = Ball(HPoint(np.array([15 / 16 + 0j]), 0.0), 1 / 16)
    E2 = Ball(HPoint.identity(1), 1 / 16)
    d = set_distance_estimate(E1, E2, seed=0)
    assert d.bound == "upper"
    assert 13 / 16 - 1e-9 <= d.value <= 13 / 16 + 5e-3


def test_point_cloud_diameter():
    P = np.array([[0, 0, 0], [1, 0, 0], [0, 0, 4.0]])
    assert set_diameter_estimate(PointCloud(P)).value == pytest.approx(17**0.25)  # (1,0,0) to (0,0,4)


def test_bilipschitz_interval():
    est = bilipschitz_constants(pairs=16, seed=0, restarts=2)
    c1, c2 = est.extra["c1"], est.extra["c2"]
    assert 1.0 - 1e-6 <= c1 <= c2 <= SQRT_PI * 1.01
