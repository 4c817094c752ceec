"""Mean oscillation, BMO norm estimates and John-Nirenberg tail fits.

The supremum over all balls is replaced by a finite :class:`BallFamily`
(lattice of centers x geometric radius ladder) refined around its argmax.
Every norm reported here is therefore a lower bound of the true sup.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _rng
from .estimates import Estimate
from .group import HPoint, dilate_array, inverse_array, multiply_array
from .maps import MapDescriptor, MissingInverse
from .metrics import Ball, koranyi_norm_array

# slope of log(max oscillation) vs log(radius) over the top decade above
# which a function is reported as "not BMO"
NOT_BMO_SLOPE = 0.5


@dataclass(frozen=True, eq=False)
class ScalarField:
    id: str
    params: dict
    evaluator: Callable[[np.ndarray], np.ndarray]
    singular: tuple = ()
    sup_abs: float | None = None

    def __call__(self, P) -> np.ndarray:
        return self.evaluator(np.asarray(P, dtype=float))

    def describe(self) -> dict:
        return {"id": self.id, "params": self.params}


def _center_coords(center, n):
    if center is None:
        return np.zeros(2 * n + 1)
    c = np.asarray(center, dtype=float)
    if c.size != 2 * n + 1:
        raise ValueError(f"center must have {2 * n + 1} coordinates")
    return c


def constant(c: float = 0.0, n: int = 1) -> ScalarField:
    return ScalarField("constant", {"c": c}, lambda P: np.full(P.shape[:-1], float(c)), (), abs(c))


def bounded_sinusoid(amplitude: float = 1.0, freq: float = 1.0, axis: int = 0, n: int = 1) -> ScalarField:
    return ScalarField("bounded-sinusoid", {"amplitude": amplitude, "freq": freq, "axis": axis},
                       lambda P: amplitude * np.sin(freq * P[..., axis]), (), abs(amplitude))


def indicator_halfspace(axis: int = -1, offset: float = 0.0, n: int = 1) -> ScalarField:
    return ScalarField("indicator-halfspace", {"axis": axis, "offset": offset},
                       lambda P: (P[..., axis] > offset).astype(float), (), 1.0)


def log_koranyi(center=None, n: int = 1) -> ScalarField:
    """log d_K(x, center); singular at the center."""
    c = _center_coords(center, n)
    ci = inverse_array(c)
    return ScalarField("log-koranyi", {"center": c.tolist()},
                       lambda P: np.log(koranyi_norm_array(multiply_array(ci, P))), (c,), None)


def koranyi_distance(center=None, n: int = 1) -> ScalarField:
    c = _center_coords(center, n)
    ci = inverse_array(c)
    return ScalarField("koranyi-distance", {"center": c.tolist()},
                       lambda P: koranyi_norm_array(multiply_array(ci, P)), (), None)


def affine(terms, const: float = 0.0, n: int = 1) -> ScalarField:
    """``const + sum coef_i * u_i`` for catalog fields u_i.

    ``terms`` is a list of ``{"coef": c, "id": ..., "params": {...}}``.
    """
    built = [(float(t.get("coef", 1.0)), make_field(t["id"], n, **t.get("params", {}))) for t in terms]

    def ev(P):
        out = np.full(P.shape[:-1], float(const))
        for c, u in built:
            out = out + c * u(P)
        return out

    sing = tuple(s for _, u in built for s in u.singular)
    sups = [u.sup_abs for _, u in built]
    sup = None if any(s is None for s in sups) else abs(const) + sum(abs(c) * s for (c, _), s in zip(built, sups))
    return ScalarField("affine", {"terms": terms, "const": const}, ev, sing, sup)


FIELDS = {
    "constant": constant,
    "bounded-sinusoid": bounded_sinusoid,
    "indicator-halfspace": indicator_halfspace,
    "log-koranyi": log_koranyi,
    "koranyi-distance": koranyi_distance,
    "affine": affine,
}

FIELDS_DOC = {
    "constant": "u = c; params: c",
    "bounded-sinusoid": "u = amplitude * sin(freq * coord[axis]); params: amplitude, freq, axis",
    "indicator-halfspace": "u = 1{coord[axis] > offset}; params: axis (default t), offset",
    "log-koranyi": "u = log d_K(x, center); params: center (default origin)",
    "koranyi-distance": "u = d_K(x, center); not in BMO; params: center",
    "affine": "u = const + sum coef_i u_i; params: terms [{coef, id, params}], const",
}

# catalog entries that belong to BMO
BMO_FIELDS = ("constant", "bounded-sinusoid", "indicator-halfspace", "log-koranyi")


def make_field(id: str, n: int = 1, **params) -> ScalarField:
    if id not in FIELDS:
        raise KeyError(f"unknown function id {id!r}; known: {sorted(FIELDS)}")
    return FIELDS[id](n=n, **params)


def pushforward(u: ScalarField, f: MapDescriptor) -> ScalarField:
    """``u o f^-1``."""
    if f.inverse is None:
        raise MissingInverse(f"pushforward by {f.id!r} needs an inverse")
    finv = f.inverse
    sing = tuple(f.forward(s) for s in u.singular)
    return ScalarField(f"push({u.id})", {"u": u.describe(), "f": f.describe()},
                       lambda P: u(finv(P)), sing, u.sup_abs)


# -- ball families ---------------------------------------------------------


@dataclass
class BallFamily:
    balls: list[Ball]
    spec: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.balls:
            raise ValueError("ball family is empty")

    def __len__(self):
        return len(self.balls)

    def __iter__(self):
        return iter(self.balls)

    @property
    def radii(self) -> np.ndarray:
        return np.unique([b.radius for b in self.balls])

    @classmethod
    def lattice(cls, n: int = 1, extent: float = 8.0, per_axis: int | None = None,
                r_min: float = 2.0**-4, r_max: float = 2.0**3, ratio: float = 2.0,
                metric: str = "koranyi") -> "BallFamily":
        """Centers on a lattice in the box |x_j|,|y_j| <= extent, |t| <= extent^2."""
        if per_axis is None:
            per_axis = max(2, int(round(125 ** (1.0 / (2 * n + 1)))))
        if r_min <= 0 or r_max < r_min or ratio <= 1:
            raise ValueError("radius ladder needs 0 < r_min <= r_max and ratio > 1")
        axis_z = np.linspace(-extent, extent, per_axis)
        axis_t = np.linspace(-extent**2, extent**2, per_axis)
        k = int(np.floor(np.log(r_max / r_min) / np.log(ratio) + 1e-9))
        radii = r_min * ratio ** np.arange(k + 1)
        balls = []
        for c in itertools.product(*([axis_z] * (2 * n) + [axis_t])):
            center = HPoint.from_coords(np.array(c))
            balls.extend(Ball(center, float(r), metric) for r in radii)
        spec = {"kind": "lattice", "n": n, "extent": extent, "per_axis": per_axis,
                "r_min": r_min, "r_max": r_max, "ratio": ratio, "metric": metric}
        return cls(balls, spec)

    @classmethod
    def centered(cls, center: HPoint, radii, metric: str = "koranyi") -> "BallFamily":
        radii = [float(r) for r in radii]
        return cls([Ball(center, r, metric) for r in radii],
                   {"kind": "centered", "center": center.coords.tolist(), "radii": radii, "metric": metric})

    def image(self, f: MapDescriptor) -> "BallFamily":
        """Ball-wise image; only for maps that send balls to balls."""
        if f.ball_image is None:
            raise ValueError(f"map {f.id!r} does not send balls to balls")
        return BallFamily([f.ball_image(b) for b in self.balls], {"kind": "image", "of": self.spec, "map": f.describe()})

    def __add__(self, other: "BallFamily") -> "BallFamily":
        return BallFamily(self.balls + other.balls, {"kind": "union", "parts": [self.spec, other.spec]})

    def describe(self) -> dict:
        return dict(self.spec, size=len(self.balls))


# -- estimators ------------------------------------------------------------


def _draw_avoiding(u: ScalarField, B: Ball, samples: int, rng) -> np.ndarray:
    P = B.sample(samples, rng)
    for s in u.singular:
        hit = np.all(P == s, axis=-1)
        while np.any(hit):  # probability zero, but guarded
            P[hit] = B.sample(int(hit.sum()), rng)
            hit = np.all(P == s, axis=-1)
    return P


def _oscillation(u: ScalarField, B: Ball, samples: int, rng):
    v = np.asarray(u(_draw_avoiding(u, B, samples, rng)), dtype=float)
    if not np.all(np.isfinite(v)):
        raise FloatingPointError(f"non-finite values of {u.id} on ball {B.describe()}")
    dev = np.abs(v - v.mean())
    return float(dev.mean()), float(dev.std() / np.sqrt(samples)), v


def mean_oscillation(u: ScalarField, B: Ball, samples: int = 4000, seed: int = 0) -> Estimate:
    """Monte Carlo estimate of the average of |u - u_B| over B."""
    m, err, _ = _oscillation(u, B, samples, _rng.derive(seed, "osc"))
    return Estimate(m, err, samples, seed, "two-sided", "mc-mean-oscillation", {"ball": B.describe()})


@dataclass
class BMOEstimate:
    value: float
    error: float
    argmax: Ball
    per_ball: np.ndarray
    family: dict
    growth_slope: float
    verdict: str
    samples_per_ball: int
    seed: int
    refined: int = 0

    def estimate(self) -> Estimate:
        return Estimate(self.value, self.error, self.samples_per_ball * (len(self.per_ball) + self.refined),
                        self.seed, "lower", "max-over-ball-family",
                        {"argmax": self.argmax.describe(), "family": self.family,
                         "growth_slope": self.growth_slope, "verdict": self.verdict})


def _growth_slope(family: BallFamily, values: np.ndarray) -> float:
    radii = np.array([b.radius for b in family.balls])
    ladder = np.unique(radii)
    top = ladder[ladder >= ladder[-1] / 10.0 * (1 - 1e-12)]
    if len(top) < 2:
        top = ladder[-2:]
    if len(top) < 2:
        return 0.0
    peaks = np.array([values[radii == r].max() for r in top])
    if np.any(peaks <= 0):
        return 0.0
    return float(np.polyfit(np.log(top), np.log(peaks), 1)[0])


def bmo_norm_estimate(u: ScalarField, family: BallFamily, samples_per_ball: int = 2000, seed: int = 0,
                      refine_rounds: int = 3) -> BMOEstimate:
    """Largest mean oscillation over ``family``, then refined near the argmax.

    Ball ``i`` always uses the stream ``derive(seed, "bmo", i)``, so a
    family and its image under a similarity see coupled samples. Ties are
    broken towards the lowest ball index.
    """
    res = _rng.pmap(lambda i: _oscillation(u, family.balls[i], samples_per_ball, _rng.derive(seed, "bmo", i))[:2],
                    range(len(family)))
    vals = np.array([r[0] for r in res])
    errs = np.array([r[1] for r in res])
    i = int(np.argmax(vals))
    best, best_err, best_ball = float(vals[i]), float(errs[i]), family.balls[i]
    slope = _growth_slope(family, vals)

    refined = 0
    for rnd in range(refine_rounds):
        rng = _rng.derive(seed, "bmo-refine", rnd)
        B0 = best_ball
        cands = []
        for j in range(6):
            step = dilate_array(0.25 * B0.radius, rng.normal(size=2 * B0.n + 1))
            c = HPoint.from_coords(multiply_array(B0.center.coords, step))
            cands.append(Ball(c, B0.radius * float(rng.choice([0.7, 1.0, 1.4])), B0.metric))
        out = _rng.pmap(lambda jc: _oscillation(u, jc[1], samples_per_ball,
                                                _rng.derive(seed, "bmo-refine", rnd, jc[0]))[:2],
                        list(enumerate(cands)))
        refined += len(cands)
        for (m, e), B in zip(out, cands):
            if m > best:
                best, best_err, best_ball = m, e, B

    verdict = "not-BMO" if slope > NOT_BMO_SLOPE else "bounded"
    return BMOEstimate(best, best_err, best_ball, vals, family.describe(), slope, verdict,
                       samples_per_ball, seed, refined)


@dataclass
class JNFitReport:
    A_hat: float
    prefactor: float
    r2: float
    lambda_range: tuple[float, float]
    lambdas: np.ndarray
    tails: np.ndarray
    passed: bool
    trivial: bool
    samples: int
    seed: int

    def to_dict(self) -> dict:
        return {"A_hat": self.A_hat, "prefactor": self.prefactor, "r2": self.r2,
                "lambda_range": list(self.lambda_range), "lambdas": self.lambdas.tolist(),
                "tails": self.tails.tolist(), "passed": self.passed, "trivial": self.trivial,
                "samples": self.samples, "seed": self.seed}


def jn_lambda_grid(bmo_norm: float, points: int = 16) -> np.ndarray:
    return np.geomspace(0.25 * bmo_norm, 8.0 * bmo_norm, points)


def jn_tail_fit(u: ScalarField, B: Ball, bmo_norm: float, lambdas=None, samples: int = 100_000,
                seed: int = 0) -> JNFitReport:
    """Fit ``tail(lam) ~ c exp(-A lam / ||u||)`` on a log scale.

    ``tail(lam)`` is the measured fraction of B where ``|u - u_B| > lam``.
    The fit is a least-squares line through the points with a non-empty
    tail. PASS needs ``A_hat > 0``, ``R^2 >= 0.9`` and every point at or
    below ``2 exp(-A_hat lam / ||u||)``. Fewer than three non-empty tail
    points is reported as a trivial pass.
    """
    if not bmo_norm > 0:
        raise ValueError("bmo_norm must be positive")
    lambdas = jn_lambda_grid(bmo_norm) if lambdas is None else np.asarray(lambdas, dtype=float)
    _, _, v = _oscillation(u, B, samples, _rng.derive(seed, "jn"))
    dev = np.abs(v - v.mean())
    tails = np.array([np.count_nonzero(dev > lam) for lam in lambdas]) / samples
    s = lambdas / bmo_norm
    rng_ = (float(lambdas[0]), float(lambdas[-1]))
    pos = tails > 0
    if pos.sum() < 3:
        return JNFitReport(np.inf, 0.0, 1.0, rng_, lambdas, tails, True, True, samples, seed)
    slope, icpt = np.polyfit(s[pos], np.log(tails[pos]), 1)
    pred = slope * s[pos] + icpt
    y = np.log(tails[pos])
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - pred) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    A_hat = float(-slope)
    under = bool(np.all(tails <= 2.0 * np.exp(-A_hat * s)))
    passed = A_hat > 0 and r2 >= 0.9 and under
    return JNFitReport(A_hat, float(np.exp(icpt)), r2, rng_, lambdas, tails, passed, False, samples, seed)
