"""Quasiconformal distortion, the Gotoh density functional and the
necessity-direction construction for homogeneous homomorphisms.

All sup/inf quantities are sampled, so each result is labelled with the
side of the true value it bounds:

* ``K_f(x, r)`` from sampled spheres is a lower bound;
* ``lambda_max`` from sampled directions is a lower bound;
* a sampled set distance is an upper bound, a sampled diameter a lower bound.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from . import _rng
from .bmo import BallFamily, BMOEstimate, ScalarField, bmo_norm_estimate, pushforward
from .estimates import Estimate
from .group import (
    HomogeneousHom,
    HPoint,
    dilate_array,
    inverse_array,
    multiply_array,
    validate_homomorphism,
)
from .maps import MapDescriptor, homomorphism
from .measure import MeasurableSet, _batches, density_in_ball
from .metrics import (
    Ball,
    distance_array,
    koranyi_ball_volume_exact,
    koranyi_norm_array,
    norm_array,
    set_diameter_estimate,
    set_distance_estimate,
    sphere_sample_array,
)

GOTOH_K_GRID = tuple(2.0**k for k in range(11))
GOTOH_ALPHA_GRID = (1.0, 0.5, 0.25, 0.125)
NOT_QC_SLOPE = -0.2


def _as_map(L) -> MapDescriptor:
    if isinstance(L, MapDescriptor):
        return L
    if isinstance(L, HomogeneousHom):
        return homomorphism(L.A, L.mu)
    raise TypeError(f"expected MapDescriptor or HomogeneousHom, got {type(L).__name__}")


def map_at_scale(f: MapDescriptor, x: HPoint, r: float) -> MapDescriptor:
    """``h -> delta_{1/r}( f(x)^-1 f(x delta_r h) )``; sends the origin to itself.

    Its behaviour on B(0, 1) is that of f on B(x, r) up to a left
    translation and a dilation, both of which preserve every ratio used here.
    """
    xc = x.coords
    fx = f(xc[None])[0]
    fxi, xi = inverse_array(fx), inverse_array(xc)

    def fwd(H):
        return dilate_array(1.0 / r, multiply_array(fxi, f(multiply_array(xc, dilate_array(r, H)))))

    inv = None
    if f.inverse is not None:
        finv = f.inverse

        def inv(W):
            return dilate_array(1.0 / r, multiply_array(xi, finv(multiply_array(fx, dilate_array(r, W)))))

    return MapDescriptor(f"{f.id}@scale", {"x": xc.tolist(), "r": r}, f.n, fwd, inv,
                         f.group_compatible, f.expected_qc, f.jacobian, f.hom)


# -- distortion ------------------------------------------------------------


@dataclass
class DistortionResult:
    K: float
    sup: float
    inf: float
    sup_witness: np.ndarray
    inf_witness: np.ndarray
    samples: int
    collision: bool
    x: np.ndarray
    r: float

    def estimate(self, seed=None) -> Estimate:
        return Estimate(self.K, samples=self.samples, seed=seed, bound="lower", estimator="sphere-sup/inf",
                        extra={"sup": self.sup, "inf": self.inf, "r": self.r, "x": self.x.tolist(),
                               "collision": self.collision})


def _sphere_project(x: np.ndarray, rel: np.ndarray, r: float, metric: str) -> np.ndarray:
    rel = dilate_array(r / norm_array(rel, metric), rel)
    return multiply_array(x, rel)


def distortion(f: MapDescriptor, x: HPoint, r: float, samples: int = 2000, refine_rounds: int = 3,
               seed: int = 0, metric: str = "koranyi") -> DistortionResult:
    """Sampled ``K_f(x, r)``: sup over inf of ``d(f(x), f(y))`` on ``d(x, y) = r``.

    Sphere samples are refined by local perturbation around the sup and
    inf witnesses. The sampled sup is below the true sup and the sampled inf
    above the true inf, so the returned K is a lower bound.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    rng = _rng.derive(seed, "distortion")
    xc = x.coords
    fx = f(xc[None])[0]
    Y = sphere_sample_array(x, r, metric, samples, rng)
    D = distance_array(f(Y), fx, metric)
    i_sup, i_inf = int(np.argmax(D)), int(np.argmin(D))
    best = {+1: (float(D[i_sup]), Y[i_sup]), -1: (float(D[i_inf]), Y[i_inf])}
    xi = inverse_array(xc)
    trials = 64
    for rnd in range(refine_rounds):
        for sign in (+1, -1):
            for scale in (0.2 / 4**rnd, 0.05 / 4**rnd):
                val, y = best[sign]
                rel = multiply_array(xi, y)
                cand = rel[None] + scale * r * rng.normal(size=(trials, rel.size)) * np.r_[np.ones(rel.size - 1), r][None]
                Yc = _sphere_project(xc, cand, r, metric)
                Dc = distance_array(f(Yc), fx, metric)
                j = int(np.argmax(sign * Dc))
                if sign * Dc[j] > sign * val:
                    best[sign] = (float(Dc[j]), Yc[j])
    if refine_rounds > 0:
        # polish both witnesses on the sphere; only accepted if it improves
        for sign in (+1, -1):
            val, y = best[sign]
            rel0 = multiply_array(xi, y)
            w = np.r_[np.full(rel0.size - 1, r), r * r]

            def obj(g, sign=sign, w=w):
                yy = _sphere_project(xc, (g * w)[None], r, metric)
                return -sign * float(distance_array(f(yy), fx, metric)[0])

            res = minimize(obj, rel0 / w, method="Nelder-Mead",
                           options={"xatol": 1e-10, "fatol": 1e-15 * max(val, 1e-300), "maxiter": 2000})
            yy = _sphere_project(xc, (res.x * w)[None], r, metric)[0]
            cand = float(distance_array(f(yy[None]), fx, metric)[0])
            if sign * cand > sign * val:
                best[sign] = (cand, yy)
    sup, ysup = best[+1]
    inf, yinf = best[-1]
    collision = inf <= 0.0
    K = np.inf if collision else sup / inf
    return DistortionResult(float(max(K, 1.0)), sup, inf, ysup, yinf, samples + 4 * refine_rounds * 2 * trials,
                            collision, xc, float(r))


@dataclass
class DistortionProfile:
    x: np.ndarray
    radii: np.ndarray
    K: np.ndarray
    sups: np.ndarray
    infs: np.ndarray
    slope: float
    plateau: float
    samples: int
    sup_slope: float = 0.0

    def to_dict(self) -> dict:
        return {"x": self.x.tolist(), "radii": self.radii.tolist(), "K": self.K.tolist(),
                "sup": self.sups.tolist(), "inf": self.infs.tolist(), "slope": self.slope,
                "sup_slope": self.sup_slope, "plateau": self.plateau, "samples_per_radius": self.samples, "bound": "lower"}


@dataclass
class QCProfile:
    profiles: list[DistortionProfile]
    verdict: str
    threshold: float

    def to_dict(self) -> dict:
        return {"verdict": self.verdict, "threshold": self.threshold,
                "profiles": [p.to_dict() for p in self.profiles]}


def _last_decade(radii: np.ndarray) -> np.ndarray:
    return radii <= radii.min() * 10.0 * (1 + 1e-12)


def qc_profile(f: MapDescriptor, points, radii, samples: int = 2000, refine_rounds: int = 3, seed: int = 0,
               threshold: float = 16.0, metric: str = "koranyi") -> QCProfile:
    """Distortion profiles along a decreasing radius ladder.

    The verdict is ``NOT-QC-consistent`` if any point's log-log slope of K
    against r over the smallest decade is at most -0.2 (K blowing up as
    r shrinks), ``QC-consistent`` if every small-r plateau is at most
    ``threshold``, and ``inconclusive`` otherwise. It is an estimator
    verdict about the sampled ladder, not a proof.

    ``sup_slope`` is the same fit for ``sup / r`` alone. For the vertical
    stretch it is about -1/2 while K itself falls like r^-3/2, because
    vertical displacements of size r can land at distance ~r^2.
    """
    radii = np.asarray(radii, dtype=float)
    if np.any(np.diff(radii) >= 0):
        raise ValueError("radius ladder must be strictly decreasing")
    points = [p if isinstance(p, HPoint) else HPoint.from_coords(p) for p in points]
    jobs = [(i, j) for i in range(len(points)) for j in range(len(radii))]
    res = _rng.pmap(lambda ij: distortion(f, points[ij[0]], radii[ij[1]], samples, refine_rounds,
                                          _rng.derive_int(seed, "profile", ij[0], ij[1]), metric), jobs)
    profiles = []
    for i, p in enumerate(points):
        rows = res[i * len(radii) : (i + 1) * len(radii)]
        K = np.array([d.K for d in rows])
        sel = _last_decade(radii)
        slope = 0.0
        if sel.sum() >= 2 and np.all(np.isfinite(K[sel])):
            slope = float(np.polyfit(np.log(radii[sel]), np.log(K[sel]), 1)[0])
        elif not np.all(np.isfinite(K[sel])):
            slope = -np.inf
        sups = np.array([d.sup for d in rows])
        # expansion of the sup side alone: log(sup/r) against log r
        sup_slope = float(np.polyfit(np.log(radii[sel]), np.log(sups[sel] / radii[sel]), 1)[0]) if sel.sum() >= 2 else 0.0
        profiles.append(DistortionProfile(p.coords, radii, K, sups, np.array([d.inf for d in rows]), slope,
                                          float(np.max(K[sel])), rows[0].samples, sup_slope))
    if any(pr.slope <= NOT_QC_SLOPE for pr in profiles):
        verdict = "NOT-QC-consistent"
    elif max(pr.plateau for pr in profiles) <= threshold:
        verdict = "QC-consistent"
    else:
        verdict = "inconclusive"
    return QCProfile(profiles, verdict, threshold)


# -- lambda_max and the necessity construction -----------------------------


def lambda_max_search(L, samples: int = 4000, refine_rounds: int = 3, seed: int = 0, n: int | None = None):
    """Max of ``v -> d_K(L(v), 0)`` over the unit Koranyi sphere.

    ``L`` is a HomogeneousHom, a MapDescriptor fixing the origin (e.g. from
    :func:`map_at_scale`) or any array callable. Returns
    ``(lambda_max, v, Estimate)``; the value is a lower bound and never
    decreases under refinement.
    """
    if isinstance(L, HomogeneousHom):
        F, n = L.apply_array, L.n
    else:
        F = L
        n = n if n is not None else L.n
    rng = _rng.derive(seed, "lambda-max")
    origin = HPoint.identity(n)

    def val(V):
        return koranyi_norm_array(F(V))

    V = sphere_sample_array(origin, 1.0, "koranyi", samples, rng)
    vals = val(V)
    i = int(np.argmax(vals))
    best, v = float(vals[i]), V[i]
    history = [best]
    for rnd in range(refine_rounds):
        for scale in (0.1 / 4**rnd, 0.02 / 4**rnd):
            C = v[None] + scale * rng.normal(size=(64, v.size))
            C = dilate_array(1.0 / koranyi_norm_array(C), C)
            cv = val(C)
            j = int(np.argmax(cv))
            if cv[j] > best:
                best, v = float(cv[j]), C[j]
        history.append(best)
    if refine_rounds > 0:

        def neg(g):
            g = g / koranyi_norm_array(g) ** np.r_[np.ones(2 * n), 2.0]
            return -float(val(g[None])[0])

        res = minimize(neg, v, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        g = res.x / koranyi_norm_array(res.x) ** np.r_[np.ones(2 * n), 2.0]
        cand = float(val(g[None])[0])
        if cand > best:
            best, v = cand, g
        history.append(best)
    if not np.isfinite(best) or best <= 0:
        raise ValueError("lambda_max search failed: functional is not positive on the unit sphere")
    est = Estimate(best, samples=samples, seed=seed, bound="lower", estimator="sphere-max+refine",
                   extra={"v": v.tolist(), "history": history})
    return best, HPoint.from_coords(v), est


class _ImageSet:
    """Image of a sampled set; refinement happens in the preimage."""

    def __init__(self, S, F):
        self.S, self.F = S, F

    def draw(self, count, rng):
        P, pre = self.S.draw(count, rng)
        return self.F(P), pre

    def jitter(self, pre, scale, rng):
        P, pre = self.S.jitter(pre, scale, rng)
        return self.F(P), pre


@dataclass
class NecessityConstruction:
    r: float
    lambda_max: float
    v: np.ndarray
    x: np.ndarray
    E1: Ball
    E2: Ball
    pair_min: float
    pair_bound: float
    pairs: int
    pair_ok: bool
    dist: Estimate
    diam: Estimate
    roundness: Estimate
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.pair_ok and all(self.checks.values())

    def to_dict(self) -> dict:
        return {"r": self.r, "lambda_max": self.lambda_max, "v": self.v.tolist(), "x": self.x.tolist(),
                "E1": self.E1.describe(), "E2": self.E2.describe(),
                "pair_min": self.pair_min, "pair_bound_13_16": self.pair_bound, "pairs": self.pairs,
                "pair_ok": self.pair_ok, "dist": self.dist.to_dict(), "diam": self.diam.to_dict(),
                "roundness": self.roundness.to_dict(), "checks": self.checks, "passed": self.passed}


def necessity_construction(L, r: float = 1.0, lambda_samples: int = 4000, pair_samples: int = 100,
                           set_budget: int = 1000, volume_samples: int = 100_000, seed: int = 0) -> NecessityConstruction:
    """The two-ball construction for a homogeneous homomorphism L.

    ``x`` sits on the sphere of radius 15r/16 in the direction where L
    stretches most, ``E1 = B(x, r/16)`` and ``E2 = B(0, r/16)``. Every
    sampled pair (a, b) in E1 x E2 must satisfy
    ``d(La, Lb) >= (13/16) r lambda_max``; the set distance of the images
    must dominate both ``(3/4) r lambda_max`` and ``(3/8) diam L(B(0,r))``.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    if isinstance(L, HomogeneousHom):
        hom = L
    elif isinstance(L, MapDescriptor) and L.hom is not None:
        hom = L.hom
    else:
        raise TypeError("necessity_construction needs a homogeneous homomorphism")
    if not hom.validated:
        ok, worst = validate_homomorphism(hom)
        if not ok:
            raise ValueError(f"L is not a group homomorphism (residual {worst:.3g})")
    F = hom.apply_array
    n = hom.n
    lam, v, _ = lambda_max_search(hom, lambda_samples, seed=_rng.derive_int(seed, "lam"))
    x = dilate_array(15.0 * r / 16.0, v.coords)
    E1 = Ball(HPoint.from_coords(x), r / 16.0)
    E2 = Ball(HPoint.identity(n), r / 16.0)

    rng = _rng.derive(seed, "pairs")
    A, _ = E1.draw(pair_samples, rng)
    B, _ = E2.draw(pair_samples, rng)
    Dp = distance_array(F(A)[:, None, :], F(B)[None, :, :])
    pair_min = float(Dp.min())
    pair_bound = 13.0 / 16.0 * r * lam
    pair_ok = pair_min >= pair_bound - 1e-9

    dist = set_distance_estimate(_ImageSet(E1, F), _ImageSet(E2, F), budget=set_budget,
                                 seed=_rng.derive_int(seed, "dist"))
    diam = set_diameter_estimate(_ImageSet(Ball(HPoint.identity(n), r), F), budget=set_budget,
                                 seed=_rng.derive_int(seed, "diam"))
    rho = roundness_ratio(hom, r, samples=volume_samples, diam_budget=set_budget, seed=_rng.derive_int(seed, "round"))
    # dist is an upper bound and diam a lower bound of the true values, so
    # the sampled checks err on the permissive side only by round-off
    tol = 1e-9 * r * lam
    checks = {
        "dist_ge_3/4_r_lambda": dist.value >= 0.75 * r * lam - tol,
        "dist_ge_3/8_diam": dist.value >= 0.375 * diam.value - tol,
        "3/4_r_lambda_ge_3/8_diam": 0.75 * r * lam >= 0.375 * diam.value - tol,
    }
    return NecessityConstruction(r, lam, v.coords, x, E1, E2, pair_min, pair_bound, len(A) * len(B), pair_ok,
                                 dist, diam, rho, checks)


def random_homomorphism(rng, n: int = 1, max_cond: float = 8.0) -> HomogeneousHom:
    """Random invertible homogeneous homomorphism with cond(A) <= max_cond.

    Each complex coordinate gets its own 2x2 block on (x_j, y_j); all blocks
    share the determinant mu, which is what the group law requires.
    """
    cond = float(np.exp(rng.uniform(0.0, np.log(max_cond))))
    scale = float(np.exp(rng.uniform(np.log(0.25), np.log(4.0))))
    sign = 1.0 if rng.uniform() < 0.5 else -1.0
    A = np.zeros((2 * n, 2 * n))
    for j in range(n):
        a, b = rng.uniform(0, 2 * np.pi, size=2)
        U = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
        V = np.array([[np.cos(b), -np.sin(b)], [np.sin(b), np.cos(b)]])
        S = np.diag([scale * np.sqrt(cond), sign * scale / np.sqrt(cond)])
        blk = U @ S @ V
        idx = [j, n + j]
        A[np.ix_(idx, idx)] = blk
    mu = sign * scale * scale
    L = HomogeneousHom(A, mu)
    ok, worst = validate_homomorphism(L)
    if not ok:
        raise AssertionError(f"random homomorphism failed validation ({worst:.3g})")
    return HomogeneousHom(A, mu, validated=True)


# -- roundness -------------------------------------------------------------


def image_volume_estimate(f: MapDescriptor, B: Ball, samples: int = 200_000, seed: int = 0) -> Estimate:
    """|f(B)| by Monte Carlo in a coordinate box around sampled image points.

    Membership is ``f^-1(y) in B``. The box is grown until no accepted
    point touches its outer 2% shell.
    """
    if f.inverse is None:
        raise ValueError(f"image volume of {f.id!r} needs an inverse")
    rng = _rng.derive(seed, "image-box")
    P, _ = B.draw(4000, rng)
    Y = f(P)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo) * 1.1 + 1e-12
    finv = f.inverse
    for attempt in range(6):

        def work(rng, m, mid=mid, half=half):
            U = mid + half * rng.uniform(-1.0, 1.0, size=(m, mid.size))
            inside = B.contains(finv(U))
            edge = np.any(np.abs(U[inside] - mid) > 0.98 * half, axis=-1)
            return int(inside.sum()), int(edge.sum())

        parts = _batches(samples, seed, ("image-volume", attempt), work)
        hits, edge = sum(p[0] for p in parts), sum(p[1] for p in parts)
        if edge == 0:
            break
        half = half * 1.5
    box = float(np.prod(2.0 * half))
    p = hits / samples
    return Estimate(box * p, box * np.sqrt(p * (1 - p) / samples), samples, seed, "two-sided",
                    "image-box-rejection", {"box_volume": box, "acceptance": p})


def roundness_ratio(L, r: float = 1.0, samples: int = 200_000, diam_budget: int = 2000, seed: int = 0,
                    center: HPoint | None = None) -> Estimate:
    """``|f(B(c, r))| / diam(f(B(c, r)))^(2n+2)``.

    The diameter is a sampled lower bound, so the ratio leans high; the
    volume is a two-sided Monte Carlo estimate.
    """
    if not r > 0:
        raise ValueError("r must be positive")
    f = _as_map(L)
    c = center if center is not None else HPoint.identity(f.n)
    B = Ball(c, r)
    vol = image_volume_estimate(f, B, samples, _rng.derive_int(seed, "vol"))
    diam = set_diameter_estimate(_ImageSet(B, f), budget=diam_budget, seed=_rng.derive_int(seed, "diam"))
    if diam.value <= 0:
        raise ValueError("degenerate image: diameter 0")
    Q = 2 * f.n + 2
    rho = vol.value / diam.value**Q
    return Estimate(rho, vol.error / diam.value**Q, samples, seed, "upper", "volume/diam^Q",
                    {"volume": vol.value, "volume_error": vol.error, "diam": diam.value, "Q": Q, "r": r})


def identity_roundness(n: int = 1) -> float:
    """|B_K(0,1)| / 2^(2n+2): the roundness of a Koranyi ball (diameter 2)."""
    return koranyi_ball_volume_exact(n) / 2.0 ** (2 * n + 2)


def roundness_profile(f: MapDescriptor, x: HPoint, radii, samples: int = 100_000, diam_budget: int = 1000,
                      seed: int = 0, threshold_factor: float = 0.5) -> dict:
    """Roundness of f(B(x, r)) along a shrinking ladder; running min as liminf surrogate.

    The verdict compares that running minimum with ``threshold_factor``
    times the Koranyi ball's own roundness. It is a declared heuristic.
    """
    radii = np.asarray(radii, dtype=float)
    vals = []
    for k, r in enumerate(radii):
        g = map_at_scale(f, x, float(r))
        vals.append(roundness_ratio(g, 1.0, samples, diam_budget, _rng.derive_int(seed, "rp", k)).value)
    vals = np.array(vals)
    running = np.minimum.accumulate(vals)
    thr = threshold_factor * identity_roundness(f.n)
    return {"radii": radii.tolist(), "roundness": vals.tolist(), "running_min": running.tolist(),
            "liminf_surrogate": float(running[-1]), "threshold": thr,
            "verdict": "round" if running[-1] >= thr else "degenerating", "heuristic": True}


# -- Gotoh density functional ----------------------------------------------


def gotoh_functional(E1: MeasurableSet, E2: MeasurableSet, family: BallFamily, samples: int = 20_000,
                     seed: int = 0, method: str = "auto") -> Estimate:
    """``max over balls B in family of min_i mu(E_i cap B) / mu(B)``."""
    def one(i):
        B = family.balls[i]
        d1 = density_in_ball(E1, B, samples, _rng.derive_int(seed, "gotoh", i, 1), method)
        d2 = density_in_ball(E2, B, samples, _rng.derive_int(seed, "gotoh", i, 2), method)
        return (d1, d2) if d1.value <= d2.value else (d2, d1)

    res = _rng.pmap(one, range(len(family)))
    mins = np.array([r[0].value for r in res])
    i = int(np.argmax(mins))
    return Estimate(float(mins[i]), res[i][0].error, samples * 2 * len(family), seed, "lower",
                    "max-ball-min-density", {"argmax": family.balls[i].describe(), "family": family.describe(),
                                             "method": res[i][0].method})


def random_ball_pairs(n: int, count: int, seed: int = 0, extent: float = 1.0, r_min: float = 0.2,
                      r_max: float = 1.0) -> list[tuple[MeasurableSet, MeasurableSet]]:
    """Random pairs of Koranyi balls, centres uniform in a coordinate box."""
    rng = _rng.derive(seed, "ball-pairs")
    lo = np.r_[np.full(2 * n, -extent), -extent**2]
    pairs = []
    for _ in range(count):
        sets = []
        for _ in range(2):
            c = HPoint.from_coords(rng.uniform(lo, -lo))
            r = float(np.exp(rng.uniform(np.log(r_min), np.log(r_max))))
            sets.append(MeasurableSet.from_ball(Ball(c, r)))
        pairs.append(tuple(sets))
    return pairs


def bridging_family(a: np.ndarray, b: np.ndarray, factors=(0.5, 0.75, 1.0, 1.5, 2.0, 3.0),
                    metric: str = "koranyi") -> BallFamily:
    """Balls centred along the dilation segment from a to b, radii ~ d(a, b)."""
    D = float(distance_array(b, a, metric))
    rel = multiply_array(inverse_array(a), b)
    balls = []
    for k in range(5):
        c = HPoint.from_coords(multiply_array(a, dilate_array(k / 4.0, rel)))
        balls.extend(Ball(c, D * s, metric) for s in factors)
    return BallFamily(balls, {"kind": "bridging", "a": np.asarray(a).tolist(), "b": np.asarray(b).tolist(),
                              "factors": list(factors)})


@dataclass
class GotohReport:
    left: Estimate
    right: Estimate
    satisfied: list
    best_K: dict
    required_K: dict
    unsat: bool

    def to_dict(self) -> dict:
        return {"left": self.left.to_dict(), "right": self.right.to_dict(),
                "satisfied": [list(x) for x in self.satisfied],
                "best_K": {str(a): k for a, k in self.best_K.items()},
                "required_K": {str(a): k for a, k in self.required_K.items()},
                "unsat": self.unsat, "note": "UNSAT within the grid is inconclusive"}


def _grid_report(left: Estimate, right: Estimate, K_grid, alpha_grid) -> GotohReport:
    sat, best, req = [], {}, {}
    for a in alpha_grid:
        need = left.value / right.value**a if right.value > 0 else (0.0 if left.value == 0 else np.inf)
        req[a] = float(need)
        ks = [K for K in K_grid if left.value <= K * right.value**a]
        sat.extend((K, a) for K in ks)
        best[a] = min(ks) if ks else None
    return GotohReport(left, right, sat, best, req, not sat)


def gotoh_check(f: MapDescriptor, pairs, family: BallFamily, right_family: BallFamily | None = None,
                K_grid=GOTOH_K_GRID, alpha_grid=GOTOH_ALPHA_GRID, samples: int = 20_000, seed: int = 0,
                method: str = "auto") -> list[GotohReport]:
    """Evaluate both sides of the density inequality for each set pair.

    The right side uses ``right_family`` when given, else the ball-wise
    image of ``family`` for maps that send balls to balls, else ``family``.
    Pair ``j`` uses identical seeds on both sides.
    """
    if f.inverse is None:
        raise ValueError(f"gotoh_check needs an invertible map, {f.id!r} has no inverse")
    if right_family is None:
        right_family = family.image(f) if f.ball_image is not None else family
    out = []
    for j, (E1, E2) in enumerate(pairs):
        s = _rng.derive_int(seed, "pair", j)
        left = gotoh_functional(E1, E2, family, samples, s, method)
        right = gotoh_functional(E1.image(f), E2.image(f), right_family, samples, s, method)
        out.append(_grid_report(left, right, K_grid, alpha_grid))
    return out


def necessity_pairs(f: MapDescriptor, x: HPoint, r: float, lambda_samples: int = 4000, seed: int = 0):
    """Sets E1, E2 around x at scale r, built from f's most stretched direction.

    Returns ``(E1, E2, left_family, right_family)``. The left family contains
    B(x, r) and balls bridging E1 and E2; the right family bridges f(E1)
    and f(E2) with radii from their centre distance upwards.
    """
    g = map_at_scale(f, x, r)
    _, v, _ = lambda_max_search(g, lambda_samples, seed=seed)
    xc = x.coords
    c1 = multiply_array(xc, dilate_array(15.0 * r / 16.0, v.coords))
    B1, B2 = Ball(HPoint.from_coords(c1), r / 16.0), Ball(x, r / 16.0)
    E1, E2 = MeasurableSet.from_ball(B1), MeasurableSet.from_ball(B2)
    left = bridging_family(c1, xc, factors=(0.5, 0.75, 1.0)) + BallFamily.centered(x, [r])
    fc1, fc2 = f(c1[None])[0], f(xc[None])[0]
    right = bridging_family(fc1, fc2)
    return E1, E2, left, right


def gotoh_scale_experiment(f: MapDescriptor, x: HPoint, radii, samples: int = 20_000, seed: int = 0,
                           K_grid=GOTOH_K_GRID, alpha_grid=GOTOH_ALPHA_GRID) -> dict:
    """Gotoh check on necessity-style pairs along a shrinking radius ladder.

    Reports, per radius, both sides and the K each alpha requires. For a
    map that is not quasiconformal the required K grows as r shrinks.
    """
    rows = []
    for k, r in enumerate(radii):
        E1, E2, lf, rf = necessity_pairs(f, x, float(r), seed=_rng.derive_int(seed, "np", k))
        s = _rng.derive_int(seed, "scale", k)
        left = gotoh_functional(E1, E2, lf, samples, s, "auto")
        right = gotoh_functional(E1.image(f), E2.image(f), rf, samples, s, "auto")
        rep = _grid_report(left, right, K_grid, alpha_grid)
        rows.append({"r": float(r), **rep.to_dict()})
    req = {a: [row["required_K"][str(a)] for row in rows] for a in alpha_grid}
    grows = {str(a): bool(np.all(np.diff(v) > 0)) for a, v in req.items()}
    best = {str(a): [row["best_K"][str(a)] for row in rows] for a in alpha_grid}
    return {"rows": rows, "required_K_increasing": grows, "best_K": best}


# -- BMO transfer ----------------------------------------------------------


@dataclass
class TransferReport:
    ratio: float
    norm_u: BMOEstimate
    norm_Fu: BMOEstimate
    matched: bool

    def to_dict(self) -> dict:
        return {"ratio": self.ratio, "norm_u": self.norm_u.estimate().to_dict(),
                "norm_Fu": self.norm_Fu.estimate().to_dict(), "matched_families": self.matched}


def bmo_transfer_experiment(f: MapDescriptor, u: ScalarField, family: BallFamily, samples_per_ball: int = 2000,
                            seed: int = 0, matched: bool = True, refine_rounds: int = 3) -> TransferReport:
    """Ratio of estimated BMO norms of ``u o f^-1`` and ``u``.

    With ``matched`` and a map sending balls to balls, ``u o f^-1`` is
    measured on the image family, so both estimates range over
    corresponding balls. When both norms are exactly zero the ratio is
    reported as 1 (the inequality holds with C = 1).
    """
    Fu = pushforward(u, f)
    fam_F = family.image(f) if matched and f.ball_image is not None else family
    nu = bmo_norm_estimate(u, family, samples_per_ball, seed, refine_rounds)
    nF = bmo_norm_estimate(Fu, fam_F, samples_per_ball, seed, refine_rounds)
    if nu.value == 0.0 and nF.value == 0.0:
        ratio = 1.0
    elif nu.value == 0.0:
        ratio = np.inf
    else:
        ratio = nF.value / nu.value
    return TransferReport(float(ratio), nu, nF, fam_F is not family)
