"""Haar-measure Monte Carlo: volumes, ball averages, relative densities.

Haar measure on H^n is Lebesgue measure in coordinates. All estimators
draw in fixed-size batches; batch ``k`` uses the stream
``derive(seed, key, k)`` and partial sums are merged in batch order, so a
result depends only on its inputs and seed, never on the thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _rng
from .estimates import Estimate
from .group import HPoint, dilate_array, multiply_array
from .maps import MapDescriptor, MissingInverse
from .metrics import Ball, cc_koranyi_bounds, koranyi_ball_volume_exact, norm_array

BATCH = 1 << 15


@dataclass(frozen=True, eq=False)
class MeasurableSet:
    """Membership oracle plus a bounding ball (``None`` for unbounded sets).

    ``sampler``/``volume`` are optional: when both are present the set can
    be sampled uniformly directly, which the set-side density estimator and
    the set geometry estimators use.
    """

    contains: Callable[[np.ndarray], np.ndarray]
    bound: Ball | None = None
    sampler: Callable[[int, np.random.Generator], np.ndarray] | None = field(default=None, repr=False)
    volume: float | None = None
    label: str = ""

    @classmethod
    def from_ball(cls, B: Ball) -> "MeasurableSet":
        vol = None
        if B.metric == "koranyi":
            vol = koranyi_ball_volume_exact(B.n, B.radius)
        return cls(B.contains, B, B.sample, vol, f"ball(r={B.radius:g})")

    def complement(self) -> "MeasurableSet":
        inner = self.contains
        return MeasurableSet(lambda P: ~inner(P), None, None, None, f"complement({self.label})")

    def image(self, f: MapDescriptor) -> "MeasurableSet":
        """f(E); membership is ``f^-1(x) in E``."""
        if f.inverse is None:
            raise MissingInverse(f"image of a set under {f.id!r} needs an inverse")
        inner = self.contains
        finv = f.inverse
        sampler = vol = bound = None
        if self.sampler is not None and self.volume is not None and f.jacobian is not None:
            base = self.sampler
            sampler = lambda m, rng: f.forward(base(m, rng))  # noqa: E731
            vol = f.jacobian * self.volume
        if self.bound is not None and f.ball_image is not None:
            bound = f.ball_image(self.bound)
        return MeasurableSet(lambda P: inner(finv(P)), bound, sampler, vol, f"{f.id}({self.label})")

    # sampled-set protocol for metrics.set_diameter_estimate / set_distance_estimate
    def draw(self, count: int, rng):
        if self.sampler is not None:
            P = self.sampler(count, rng)
            return P, P
        if self.bound is None:
            raise ValueError("cannot sample an unbounded set without a sampler")
        P = self.bound.sample(4 * count, rng)
        P = P[self.contains(P)][:count]
        return P, P

    def jitter(self, pre: np.ndarray, scale: float, rng):
        size = self.bound.radius if self.bound is not None else 1.0
        P = multiply_array(pre, dilate_array(scale * size, rng.normal(size=pre.shape)))
        keep = self.contains(P)
        P = np.where(keep[:, None], P, pre)
        return P, P


@dataclass
class DensityEstimate:
    value: float
    error: float
    samples: int
    seed: int
    method: str = "ball"

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"density {self.value} outside [0, 1]")

    def estimate(self) -> Estimate:
        return Estimate(self.value, self.error, self.samples, self.seed, "two-sided", f"density/{self.method}")


def _batches(samples: int, seed: int, key, work):
    sizes = _rng.batch_sizes(samples, BATCH)
    return _rng.pmap(lambda k: work(_rng.derive(seed, key, k), sizes[k]), range(len(sizes)))


def ball_volume_estimate(B: Ball, samples: int = 100_000, seed: int = 0) -> Estimate:
    """|B| = box volume x acceptance fraction of uniform box draws."""
    if samples < 1000:
        raise ValueError("ball_volume_estimate needs samples >= 1000")
    n = B.n
    grow = 1.0 if B.metric == "koranyi" else 1.0 / cc_koranyi_bounds()[0]

    def work(rng, m):
        U = dilate_array(grow, rng.uniform(-1.0, 1.0, size=(m, 2 * n + 1)))
        return int(np.count_nonzero(norm_array(U, B.metric) < 1.0))

    hits = sum(_batches(samples, seed, "volume", work))
    p = hits / samples
    box = B.box_volume()
    return Estimate(box * p, box * np.sqrt(p * (1 - p) / samples), samples, seed, "two-sided",
                    "box-rejection", {"acceptance": p, "box_volume": box})


def _sample_ball_batch(B: Ball, rng, m: int) -> np.ndarray:
    return B.sample(m, rng)


def _eval_field(u, P: np.ndarray) -> np.ndarray:
    vals = np.asarray(u(P), dtype=float)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        where = P[np.argmax(bad)]
        raise FloatingPointError(f"non-finite field value at {where.tolist()}")
    return vals


def integrate_over_ball(u, B: Ball, samples: int = 100_000, seed: int = 0) -> Estimate:
    """Monte Carlo average of ``u`` over B (the barred integral)."""

    def work(rng, m):
        v = _eval_field(u, _sample_ball_batch(B, rng, m))
        return v.sum(), (v * v).sum(), m

    parts = _batches(samples, seed, "integrate", work)
    s = sum(p[0] for p in parts)
    s2 = sum(p[1] for p in parts)
    mean = s / samples
    var = max(s2 / samples - mean * mean, 0.0)
    return Estimate(mean, np.sqrt(var / samples), samples, seed, "two-sided", "mc-mean")


def _density_ball_side(contains, B: Ball, samples: int, seed: int, key) -> DensityEstimate:
    def work(rng, m):
        return int(np.count_nonzero(contains(_sample_ball_batch(B, rng, m))))

    hits = sum(_batches(samples, seed, key, work))
    p = hits / samples
    return DensityEstimate(p, float(np.sqrt(p * (1 - p) / samples)), samples, seed, "ball")


def _density_set_side(E: MeasurableSet, B: Ball, samples: int, seed: int, key) -> DensityEstimate:
    ratio = E.volume / koranyi_ball_volume_exact(B.n, B.radius)

    def work(rng, m):
        return int(np.count_nonzero(B.contains(E.sampler(m, rng))))

    hits = sum(_batches(samples, seed, key, work))
    q = hits / samples
    val = min(1.0, ratio * q)
    return DensityEstimate(val, float(ratio * np.sqrt(q * (1 - q) / samples)), samples, seed, "set")


def density_in_ball(E: MeasurableSet, B: Ball, samples: int = 20_000, seed: int = 0, method: str = "ball") -> DensityEstimate:
    """mu(E cap B) / mu(B).

    ``method="ball"`` samples B and tests E (standard error
    ``sqrt(p(1-p)/samples)``). ``method="set"`` samples E and tests B,
    scaled by ``|E|/|B|``; it resolves small densities far better but needs
    a sampler and volume for E and a Koranyi ball. ``"auto"`` picks "set"
    when possible and ``|E| < |B|``.
    """
    if samples < 1000:
        raise ValueError("density_in_ball needs samples >= 1000")
    if method == "auto":
        method = "ball"
        if E.sampler is not None and E.volume is not None and B.metric == "koranyi":
            if E.volume < koranyi_ball_volume_exact(B.n, B.radius):
                method = "set"
    if method == "set":
        if E.sampler is None or E.volume is None or B.metric != "koranyi":
            raise ValueError("set-side density needs a sampler, a volume and a Koranyi ball")
        return _density_set_side(E, B, samples, seed, "density-set")
    return _density_ball_side(E.contains, B, samples, seed, "density")


def image_density_in_ball(E: MeasurableSet, f: MapDescriptor, B: Ball, samples: int = 20_000, seed: int = 0,
                          method: str = "ball") -> DensityEstimate:
    """mu(f(E) cap B) / mu(B), testing ``f^-1(x) in E``."""
    return density_in_ball(E.image(f), B, samples, seed, method)


def ball(center=None, radius: float = 1.0, n: int = 1, metric: str = "koranyi") -> Ball:
    """Convenience constructor accepting coordinates or an HPoint."""
    if center is None:
        center = HPoint.identity(n)
    elif not isinstance(center, HPoint):
        center = HPoint.from_coords(center)
    return Ball(center, radius, metric)
