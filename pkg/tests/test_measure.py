import numpy as np
import pytest

from heisenberg_qc import maps
from heisenberg_qc.bmo import constant
from heisenberg_qc.group import HPoint
from heisenberg_qc.maps import MissingInverse
from heisenberg_qc.measure import (
    DensityEstimate,
    MeasurableSet,
    ball,
    ball_volume_estimate,
    density_in_ball,
    image_density_in_ball,
    integrate_over_ball,
)
from heisenberg_qc.metrics import koranyi_ball_volume_exact


def test_volume_matches_exact_and_dilation_law():
    for n in (1, 2):
        v1 = ball_volume_estimate(ball(n=n), 200_000, seed=0)
        v2 = ball_volume_estimate(ball(n=n, radius=2.0), 200_000, seed=1)
        exact = koranyi_ball_volume_exact(n)
        assert abs(v1.value - exact) <= 4 * v1.error
        ratio = v2.value / v1.value
        assert ratio == pytest.approx(2 ** (2 * n + 2), rel=0.02)


def test_volume_translation_invariant_and_budget_check():
    a = ball_volume_estimate(ball(n=1), 100_000, seed=4)
    b = ball_volume_estimate(ball([3.0, -1.0, 7.0], n=1), 100_000, seed=4)
    assert a.value == b.value  # same stream, translated box
    with pytest.raises(ValueError):
        ball_volume_estimate(ball(n=1), 999)


def test_integrate_examples():
    B = ball(n=1)
    assert integrate_over_ball(constant(7.0), B, 5000, seed=0).value == 7.0
    re = integrate_over_ball(lambda P: P[..., 0], B, 100_000, seed=0)
    assert abs(re.value) <= 4 * re.error
    z2 = integrate_over_ball(lambda P: P[..., 0] ** 2 + P[..., 1] ** 2, B, 200_000, seed=0)
    assert abs(z2.value - 4 / (3 * np.pi)) <= 4 * z2.error


def test_integrate_reports_nonfinite_location():
    with pytest.raises(FloatingPointError, match="non-finite"):
        integrate_over_ball(lambda P: np.where(P[..., 0] > 0, 1.0, np.inf), ball(n=1), 2000, seed=0)


def test_density_examples():
    B1, B2 = ball(n=1), ball(n=1, radius=2.0)
    E1 = MeasurableSet.from_ball(B1)
    assert density_in_ball(E1, B1).value == 1.0
    far = MeasurableSet.from_ball(ball([10.0, 0, 0], n=1))
    assert density_in_ball(far, B1).value == 0.0
    d = density_in_ball(E1, B2, 100_000, seed=0)
    assert abs(d.value - 1 / 16) <= 4 * d.error
    s = density_in_ball(E1, B2, 100_000, seed=0, method="set")
    assert s.value == pytest.approx(1 / 16, rel=1e-12)  # every sample of E1 lies in B2
    with pytest.raises(ValueError):
        density_in_ball(E1, B1, 10)


def test_set_side_matches_ball_side():
    E = MeasurableSet.from_ball(ball([0.5, 0.0, 0.2], n=1, radius=0.3))
    B = ball(n=1)
    a = density_in_ball(E, B, 200_000, seed=1, method="ball")
    b = density_in_ball(E, B, 200_000, seed=2, method="set")
    assert abs(a.value - b.value) <= 4 * np.hypot(a.error, b.error)
    assert density_in_ball(E, B, 2000, method="auto").method == "set"


def test_density_estimate_range_checked():
    with pytest.raises(ValueError):
        DensityEstimate(1.5, 0.0, 1000, 0)


def test_image_density_examples():
    E = MeasurableSet.from_ball(ball(n=1))
    B2 = ball(n=1, radius=2.0)
    idd = image_density_in_ball(E, maps.identity(), B2, 20_000, seed=3)
    assert idd.value == density_in_ball(E, B2, 20_000, seed=3).value
    d2 = image_density_in_ball(E, maps.dilation(2.0), B2, 20_000, seed=0)
    assert d2.value == 1.0
    l = np.array([1.0, 2.0, -1.0])
    T = maps.left_translation(l)
    Bt = ball(T(np.zeros(3)), 2.0, n=1)
    assert image_density_in_ball(E, T, Bt, 20_000, seed=5).value == density_in_ball(E, B2, 20_000, seed=5).value
    with pytest.raises(MissingInverse):
        image_density_in_ball(E, maps.MapDescriptor("no-inv", {}, 1, lambda P: P), B2)


def test_image_set_volume_and_sampler():
    E = MeasurableSet.from_ball(ball(n=1, radius=0.5))
    F = E.image(maps.dilation(3.0))
    assert F.volume == pytest.approx(81.0 * E.volume)
    P = F.sampler(1000, np.random.default_rng(0))
    assert F.contains(P).all()
    assert E.complement().contains(np.array([[5.0, 0, 0]]))[0]
