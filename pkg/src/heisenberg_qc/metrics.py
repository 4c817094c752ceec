"""Koranyi and Carnot-Caratheodory metrics, balls, spheres, set geometry.

The Koranyi gauge ``N(z, t) = (|z|^4 + t^2)^(1/4)`` is exact; the distance
is its left-invariant extension ``d_K(p, q) = N(q^-1 p)``.

The CC distance is the infimum of lengths of horizontal paths. Along a
polygonal path in the z-plane each straight segment from ``a`` to ``b``
raises t by ``2 sum_j (a_y b_x - a_x b_y)``, so the endpoint of a polygon
with increments ``d_1..d_N`` is exactly the group product
``(d_1, 0)(d_2, 0)...(d_N, 0)``. :func:`cc_distance_estimate` minimises the
polygon length under that endpoint constraint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize

from . import _rng
from .estimates import Estimate
from .group import (
    HPoint,
    dilate_array,
    dim_of,
    inverse_array,
    multiply_array,
    symplectic_matrix,
)

METRICS = ("koranyi", "cc")


# -- Koranyi ---------------------------------------------------------------


def koranyi_norm_array(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    n = dim_of(P)
    r2 = np.sum(P[..., : 2 * n] ** 2, axis=-1)
    return np.sqrt(np.hypot(r2, P[..., 2 * n]))


def koranyi_distance_array(P, Q) -> np.ndarray:
    return koranyi_norm_array(multiply_array(inverse_array(Q), P))


def koranyi_norm(p: HPoint) -> float:
    return float(koranyi_norm_array(p.coords))


def koranyi_distance(p: HPoint, q: HPoint) -> float:
    if p.n != q.n:
        from .group import DimensionError

        raise DimensionError(f"dimension mismatch: H^{p.n} vs H^{q.n}")
    return float(koranyi_distance_array(p.coords, q.coords))


# -- horizontal paths ------------------------------------------------------


@dataclass
class HorizontalPath:
    """Polygonal horizontal path; t is induced by horizontality.

    ``waypoints`` has shape ``(m+1, 2n)`` in ``(x, y)`` layout, ``t0`` is the
    vertical coordinate at the first waypoint.
    """

    waypoints: np.ndarray
    t0: float = 0.0

    @property
    def n(self) -> int:
        return self.waypoints.shape[1] // 2

    def t_profile(self) -> np.ndarray:
        W = self.waypoints
        n = self.n
        a, b = W[:-1], W[1:]
        inc = 2.0 * np.sum(a[:, n:] * b[:, :n] - a[:, :n] * b[:, n:], axis=1)
        return self.t0 + np.concatenate([[0.0], np.cumsum(inc)])

    def points(self) -> np.ndarray:
        return np.column_stack([self.waypoints, self.t_profile()])

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1)))

    @property
    def start(self) -> HPoint:
        return HPoint.from_coords(self.points()[0])

    @property
    def end(self) -> HPoint:
        return HPoint.from_coords(self.points()[-1])

    def refined(self, segments: int) -> "HorizontalPath":
        """Same curve with the longest segments split until ``segments`` pieces."""
        W = [w for w in self.waypoints]
        while len(W) - 1 < segments:
            lens = [np.linalg.norm(W[i + 1] - W[i]) for i in range(len(W) - 1)]
            i = int(np.argmax(lens))
            W.insert(i + 1, 0.5 * (W[i] + W[i + 1]))
        return HorizontalPath(np.array(W), self.t0)


def _endpoint_t(D: np.ndarray, J: np.ndarray) -> float:
    S = np.cumsum(D, axis=0) - D  # partial sums before each increment
    return float(2.0 * np.sum(np.einsum("ki,ij,kj->k", S, J, D)))


def _endpoint_t_grad(D: np.ndarray, J: np.ndarray) -> np.ndarray:
    total = D.sum(axis=0)
    before = np.cumsum(D, axis=0) - D
    after = total - before - D
    return 2.0 * (after - before) @ J.T


@dataclass
class CCResult:
    value: float
    path: HorizontalPath
    converged: bool
    ladder: list[tuple[int, float]]
    constraint_residual: float
    restarts: int
    seed: int
    message: str = ""

    def estimate(self) -> Estimate:
        return Estimate(
            self.value,
            samples=self.restarts,
            seed=self.seed,
            bound="upper",
            estimator="cc-polygon-slsqp",
            extra={
                "converged": self.converged,
                "ladder": [list(x) for x in self.ladder],
                "constraint_residual": self.constraint_residual,
                "message": self.message,
            },
        )


def _initial_increments(w: np.ndarray, tau: float, N: int, rng, jitter: bool) -> np.ndarray:
    n = w.size // 2
    s = np.linspace(0.0, 1.0, N + 1)
    u = np.zeros(n, dtype=complex)
    u[0] = 1.0
    b = np.sqrt(abs(tau) / np.pi)
    if jitter:
        u = rng.normal(size=n) + 1j * rng.normal(size=n)
        u /= np.linalg.norm(u)
        b *= rng.uniform(0.5, 1.5)
    # A circle through the origin traversed so the loop supplies t ~ tau.
    sgn = -1.0 if tau > 0 else 1.0
    loop = (np.exp(2j * np.pi * sgn * s) - 1.0) / (2j * sgn)
    zc = s[:, None] * (w[:n] + 1j * w[n:])[None, :] + b * loop[:, None] * u[None, :]
    Z = np.column_stack([zc.real, zc.imag])
    if jitter:
        Z[1:-1] += 0.05 * rng.normal(size=Z[1:-1].shape)
    return np.diff(Z, axis=0)


def _solve(D0: np.ndarray, w: np.ndarray, tau: float, J: np.ndarray, energy: bool):
    N, d = D0.shape

    def unpack(v):
        return v.reshape(N, d)

    if energy:

        def obj(v):
            return float(v @ v), 2.0 * v
    else:

        def obj(v):
            D = unpack(v)
            L = np.sqrt(np.sum(D * D, axis=1) + 1e-24)
            return float(L.sum()), (D / L[:, None]).ravel()

    cons = [
        {
            "type": "eq",
            "fun": lambda v: unpack(v).sum(axis=0) - w,
            "jac": lambda v: np.tile(np.eye(d), (1, N)),
        },
        {
            "type": "eq",
            "fun": lambda v: np.array([_endpoint_t(unpack(v), J) - tau]),
            "jac": lambda v: _endpoint_t_grad(unpack(v), J).reshape(1, -1),
        },
    ]
    res = minimize(
        obj, D0.ravel(), jac=True, method="SLSQP", constraints=cons,
        options={"maxiter": 500, "ftol": 1e-13},
    )
    return unpack(res.x).copy(), bool(res.success), str(res.message)


def _close_exactly(D: np.ndarray, w: np.ndarray, tau: float, J: np.ndarray, loop_sides: int = 16):
    """Make a feasible polygon from a nearly feasible increment list.

    The z mismatch is spread evenly over the increments, then the remaining
    vertical mismatch is absorbed by a small closed regular polygon appended
    at the end (a closed loop raises t by -4 times its signed area).
    """
    N, d = D.shape
    n = d // 2
    D = D + (w - D.sum(axis=0)) / N
    Z = np.vstack([np.zeros(d), np.cumsum(D, axis=0)])
    dt = tau - _endpoint_t(D, J)
    if dt != 0.0:
        ang = 2.0 * np.pi * np.arange(loop_sides + 1) / loop_sides
        unit = np.zeros((loop_sides + 1, d))
        unit[:, 0] = np.cos(ang) - 1.0
        unit[:, n] = np.sin(ang)
        rise = _endpoint_t(np.diff(unit, axis=0), J)  # t gained by the unit loop
        R = np.sqrt(abs(dt / rise))
        if np.sign(dt) != np.sign(rise):
            unit[:, n] *= -1.0
        Z = np.vstack([Z, Z[-1] + R * unit[1:]])
    return HorizontalPath(Z), abs(dt)


def cc_distance_estimate(
    p: HPoint,
    q: HPoint,
    segments: int = 32,
    restarts: int = 8,
    seed: int = 0,
) -> CCResult:
    """Length of the shortest polygonal horizontal path from p to q found.

    The problem is reduced to the origin and the unit Koranyi sphere by a
    left translation and a dilation, which makes the estimate exactly
    left-invariant and homogeneous. Segment counts are refined along a
    doubling ladder ending at ``segments``, warm-starting each rung from the
    previous path, so the estimate never increases with refinement.
    """
    if segments < 2:
        raise ValueError("segments must be >= 2")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    n = p.n
    rel = multiply_array(inverse_array(p.coords), q.coords)
    scale = float(koranyi_norm_array(rel))
    if scale == 0.0:
        path = HorizontalPath(np.tile(p.coords[: 2 * n], (2, 1)), p.t)
        return CCResult(0.0, path, True, [(segments, 0.0)], 0.0, restarts, seed, "coincident")
    target = dilate_array(1.0 / scale, rel)
    w, tau = target[: 2 * n], float(target[2 * n])
    J = symplectic_matrix(n)
    rng = _rng.derive(seed, "cc")

    rungs = [segments]
    while rungs[0] > 8 and rungs[0] % 2 == 0:
        rungs.insert(0, rungs[0] // 2)

    best_D, best_val, conv, msg = None, np.inf, False, ""
    for k in range(restarts):
        D0 = _initial_increments(w, tau, rungs[0], rng, jitter=k > 0)
        D1, ok1, _ = _solve(D0, w, tau, J, energy=True)
        D2, ok2, m2 = _solve(D1, w, tau, J, energy=False)
        for D, ok in ((D2, ok2), (D1, ok1)):
            path, resid = _close_exactly(D, w, tau, J)
            if path.length() < best_val:
                best_D, best_val, conv, msg = D, path.length(), ok, m2
    best_path, resid = _close_exactly(best_D, w, tau, J)
    ladder = [(rungs[0], best_val)]
    for N in rungs[1:]:
        # Split segments: same curve, same length, still feasible.
        D_split = np.repeat(best_D / 2.0, 2, axis=0)
        D_new, ok, m = _solve(D_split, w, tau, J, energy=False)
        cand, cres = _close_exactly(D_new, w, tau, J)
        if cand.length() < best_val:
            best_D, best_val, conv, msg, best_path, resid = D_new, cand.length(), ok, m, cand, cres
        else:
            best_D = D_split
            best_path, resid = _close_exactly(best_D, w, tau, J)
            best_val = min(best_val, best_path.length())
        ladder.append((N, best_val))

    # Back to the original frame.
    pts = best_path.points()
    pts = multiply_array(p.coords, dilate_array(scale, pts))
    path = HorizontalPath(pts[:, : 2 * n], float(pts[0, 2 * n]))
    ladder = [(N, v * scale) for N, v in ladder]
    return CCResult(best_val * scale, path, conv, ladder, resid, restarts, seed, msg)


# -- tabulated CC profile --------------------------------------------------
#
# Unitary rotations of z and the conjugation (z, t) -> (conj z, -t) are
# isometries fixing the origin, and d_cc is homogeneous, so
#   d_cc(0, (z, t)) = N(z, t) * g(phi),   phi = atan2(|t|, |z|^2) in [0, pi/2].
# g is tabulated from cc_distance_estimate runs (see build_cc_profile).

PROFILE_RESOURCE = "cc_profile.json"


def build_cc_profile(nodes: int = 33, segments: int = 32, restarts: int = 8, seed: int = 0) -> dict:
    phis = 0.5 * np.pi * (1.0 - np.cos(np.linspace(0.0, np.pi, nodes))) / 2.0
    g = []
    for i, phi in enumerate(phis):
        q = HPoint(np.array([np.sqrt(np.cos(phi))]), np.sin(phi))
        g.append(cc_distance_estimate(HPoint.identity(1), q, segments, restarts, seed + i).value)
    return {
        "phi": phis.tolist(),
        "g": g,
        "segments": segments,
        "restarts": restarts,
        "seed": seed,
    }


@lru_cache(maxsize=1)
def _profile():
    data = json.loads(resources.files("heisenberg_qc.baselines").joinpath(PROFILE_RESOURCE).read_text())
    spline = CubicSpline(np.array(data["phi"]), np.array(data["g"]), bc_type="not-a-knot")
    return spline, float(np.min(data["g"])), float(np.max(data["g"]))


def cc_norm_array(P) -> np.ndarray:
    """CC distance to the origin from the tabulated profile (vectorised)."""
    P = np.asarray(P, dtype=float)
    n = dim_of(P)
    r2 = np.sum(P[..., : 2 * n] ** 2, axis=-1)
    phi = np.arctan2(np.abs(P[..., 2 * n]), r2)
    spline, _, _ = _profile()
    return koranyi_norm_array(P) * spline(phi)


def cc_distance_array(P, Q) -> np.ndarray:
    return cc_norm_array(multiply_array(inverse_array(Q), P))


def cc_koranyi_bounds() -> tuple[float, float]:
    """(min, max) of d_cc / d_K over the tabulated profile."""
    _, lo, hi = _profile()
    return lo, hi


def norm_array(P, metric: str = "koranyi") -> np.ndarray:
    if metric == "koranyi":
        return koranyi_norm_array(P)
    if metric == "cc":
        return cc_norm_array(P)
    raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")


def distance_array(P, Q, metric: str = "koranyi") -> np.ndarray:
    return norm_array(multiply_array(inverse_array(Q), P), metric)


# -- balls and sampling ----------------------------------------------------


def _unit_ball_box_sample(n: int, count: int, rng, metric: str) -> np.ndarray:
    """Uniform (Lebesgue) samples of the unit ball at the origin."""
    # B_cc(0,1) sits inside B_K(0, 1/min g).
    grow = 1.0 if metric == "koranyi" else 1.0 / cc_koranyi_bounds()[0]
    out, have = [], 0
    while have < count:
        m = max(256, int(1.8 * (count - have) * (4.0 ** n if metric == "cc" else 2.0 ** n)))
        B = rng.uniform(-1.0, 1.0, size=(m, 2 * n + 1))
        B = dilate_array(grow, B)
        B = B[norm_array(B, metric) < 1.0]
        out.append(B)
        have += len(B)
    return np.concatenate(out)[:count]


@dataclass(frozen=True)
class Ball:
    center: HPoint
    radius: float
    metric: str = "koranyi"

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}")
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self) -> int:
        return self.center.n

    def contains(self, P) -> np.ndarray:
        return distance_array(P, self.center.coords, self.metric) < self.radius

    def sample(self, count: int, rng) -> np.ndarray:
        U = _unit_ball_box_sample(self.n, count, rng, self.metric)
        return multiply_array(self.center.coords, dilate_array(self.radius, U))

    def box_volume(self) -> float:
        """Coordinate volume of the box the rejection sampler draws from."""
        grow = 1.0 if self.metric == "koranyi" else 1.0 / cc_koranyi_bounds()[0]
        n = self.n
        return 2.0 ** (2 * n + 1) * (grow * self.radius) ** (2 * n + 2)

    # sampled-set protocol used by the diameter/distance estimators
    def draw(self, count: int, rng):
        k = count // 2
        P = np.vstack([self.sample(count - k, rng), sphere_sample_array(self.center, self.radius, self.metric, k, rng)])
        return P, P

    def jitter(self, pre: np.ndarray, scale: float, rng):
        step = dilate_array(scale * self.radius, rng.normal(size=pre.shape))
        P = multiply_array(pre, step)
        rel = multiply_array(inverse_array(self.center.coords), P)
        d = norm_array(rel, self.metric)
        shrink = np.minimum(1.0, self.radius / np.maximum(d, 1e-300))
        P = multiply_array(self.center.coords, dilate_array(shrink, rel))
        return P, P

    def describe(self) -> dict:
        return {"center": self.center.coords.tolist(), "radius": self.radius, "metric": self.metric}


def sphere_sample_array(center: HPoint, r: float, metric: str, count: int, rng) -> np.ndarray:
    if not r > 0:
        raise ValueError(f"sphere radius must be positive, got {r}")
    n = center.n
    G = rng.normal(size=(count, 2 * n + 1))
    G = dilate_array(r / norm_array(G, metric), G)
    return multiply_array(center.coords, G)


def sphere_sample(center: HPoint, r: float, metric: str = "koranyi", count: int = 1000, seed: int = 0) -> np.ndarray:
    """Points at distance exactly r (to round-off) from ``center``.

    Directions are Gaussian in coordinates and pushed onto the sphere along
    their dilation orbit, which is exact because both distances are
    1-homogeneous. For ``metric="cc"`` the tabulated profile gives the radius.
    """
    return sphere_sample_array(center, r, metric, count, _rng.derive(seed, "sphere"))


def ball_sample_interior(B: Ball, count: int, seed: int = 0) -> np.ndarray:
    """Haar-uniform samples of B by rejection from a coordinate box."""
    return B.sample(count, _rng.derive(seed, "ball"))


def koranyi_ball_volume_exact(n: int, r: float = 1.0) -> float:
    """|B_K(0, r)| from the slice formula; used as an independent check."""
    from math import factorial, gamma, pi, sqrt

    # int_{-1}^{1} omega_2n (1 - t^2)^{n/2} dt, omega_2n = pi^n / n!
    slab = sqrt(pi) * gamma(n / 2 + 1) / gamma(n / 2 + 1.5)
    return pi**n / factorial(n) * slab * r ** (2 * n + 2)


# -- set diameter and distance ---------------------------------------------


@dataclass
class PointCloud:
    """A fixed finite set; no local refinement is possible."""

    points: np.ndarray

    def draw(self, count, rng):
        return self.points, self.points

    def jitter(self, pre, scale, rng):
        return pre, pre


def _pairwise(P, Q, metric, reduce):
    best, arg = None, None
    for i in range(0, len(P), 512):
        D = distance_array(P[i : i + 512, None, :], Q[None, :, :], metric)
        j = np.unravel_index(np.argmax(D) if reduce == "max" else np.argmin(D), D.shape)
        v = D[j]
        if best is None or (v > best if reduce == "max" else v < best):
            best, arg = v, (i + j[0], j[1])
    return float(best), arg


def _refine_pair(S1, S2, a_pre, b_pre, metric, rounds, rng, sign):
    a_pts, _ = S1.jitter(a_pre[None], 0.0, rng)
    b_pts, _ = S2.jitter(b_pre[None], 0.0, rng)
    best = float(distance_array(a_pts[0], b_pts[0], metric))
    a_best, b_best = a_pre, b_pre
    trials = 64
    for rnd in range(rounds):
        for scale in (0.1 / 4**rnd, 0.02 / 4**rnd):
            A, Apre = S1.jitter(np.repeat(a_best[None], trials, 0), scale, rng)
            B, Bpre = S2.jitter(np.repeat(b_best[None], trials, 0), scale, rng)
            d = distance_array(A, B, metric)
            i = int(np.argmax(sign * d))
            if sign * d[i] > sign * best:
                best, a_best, b_best = float(d[i]), Apre[i], Bpre[i]
    return best


def set_diameter_estimate(S, metric: str = "koranyi", budget: int = 2000, seed: int = 0, refine_rounds: int = 3) -> Estimate:
    """Largest sampled pairwise distance, refined locally. A lower bound."""
    rng = _rng.derive(seed, "diam")
    P, pre = S.draw(budget, rng)
    if len(P) == 0:
        raise ValueError("empty sample: set has no sampled points")
    best, (i, j) = _pairwise(P, P, metric, "max")
    refined = _refine_pair(S, S, pre[i], pre[j], metric, refine_rounds, rng, +1.0)
    return Estimate(max(best, refined), samples=len(P), seed=seed, bound="lower",
                    estimator="max-pairwise+local-refine", extra={"metric": metric})


def set_distance_estimate(S1, S2, metric: str = "koranyi", budget: int = 2000, seed: int = 0, refine_rounds: int = 3) -> Estimate:
    """Smallest sampled cross distance, refined locally. An upper bound."""
    rng = _rng.derive(seed, "dist")
    P1, pre1 = S1.draw(budget // 2, rng)
    P2, pre2 = S2.draw(budget - budget // 2, rng)
    if len(P1) == 0 or len(P2) == 0:
        raise ValueError("empty sample intersection: a set produced no points")
    best, (i, j) = _pairwise(P1, P2, metric, "min")
    refined = _refine_pair(S1, S2, pre1[i], pre2[j], metric, refine_rounds, rng, -1.0)
    return Estimate(min(best, refined), samples=len(P1) + len(P2), seed=seed, bound="upper",
                    estimator="min-pairwise+local-refine", extra={"metric": metric})


# -- bi-Lipschitz comparison -----------------------------------------------


def bilipschitz_constants(pairs: int = 64, radius: float = 10.0, seed: int = 0,
                          segments: int = 32, restarts: int = 4) -> Estimate:
    """Empirical range of d_cc / d_K over random pairs in B_K(0, radius).

    The CC side uses the direct optimiser, not the tabulated profile.
    """
    rng = _rng.derive(seed, "bilip")
    ratios = []
    ball = Ball(HPoint.identity(1), radius)
    P = ball.sample(pairs, rng)
    Q = ball.sample(pairs, rng)
    for k in range(pairs):
        p, q = HPoint.from_coords(P[k]), HPoint.from_coords(Q[k])
        dk = koranyi_distance(p, q)
        dc = cc_distance_estimate(p, q, segments, restarts, _rng.derive_int(seed, "bilip", k)).value
        ratios.append(dc / dk)
    ratios = np.array(ratios)
    return Estimate(float(ratios.max()), samples=pairs, seed=seed, bound="lower",
                    estimator="cc/koranyi sampled ratio",
                    extra={"c1": float(ratios.min()), "c2": float(ratios.max())})
