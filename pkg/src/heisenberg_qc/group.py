"""Arithmetic of the Heisenberg group H^n = C^n x R.

Points are handled in two forms. :class:`HPoint` is the immutable value
type used at API boundaries. Internally everything is vectorised over
float arrays of shape ``(..., 2n+1)`` laid out as ``[x_1..x_n, y_1..y_n, t]``
with ``z_j = x_j + i y_j``; the ``*_array`` functions work on that layout.

Group law::

    (z, t)(z', t') = (z + z', t + t' + 2 Im sum_j z_j conj(z'_j))

and ``Im(z conj z') = y x' - x y'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _rng


class DimensionError(ValueError):
    """Points from groups of different dimension were combined."""


def dim_of(P: np.ndarray) -> int:
    """Group index n from an array in ``(..., 2n+1)`` layout."""
    d = np.shape(P)[-1]
    if d < 3 or d % 2 == 0:
        raise DimensionError(f"coordinate length {d} is not 2n+1 with n >= 1")
    return (d - 1) // 2


@dataclass(frozen=True)
class GroupParams:
    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")

    @property
    def Q(self) -> int:
        """Homogeneous dimension; Haar measure scales by ``delta**Q``."""
        return 2 * self.n + 2


@dataclass(frozen=True, eq=False)
class HPoint:
    """A point (z, t) of H^n with z a complex n-vector."""

    z: np.ndarray
    t: float

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=complex)).copy()
        if z.ndim != 1 or z.size < 1:
            raise DimensionError("z must be a non-empty complex vector")
        t = float(self.t)
        if not (np.all(np.isfinite(z)) and np.isfinite(t)):
            raise ValueError("HPoint coordinates must be finite")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", t)

    @property
    def n(self) -> int:
        return self.z.size

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.z.real, self.z.imag, [self.t]])

    @classmethod
    def from_coords(cls, c) -> "HPoint":
        c = np.asarray(c, dtype=float)
        n = dim_of(c)
        return cls(c[:n] + 1j * c[n : 2 * n], c[2 * n])

    @classmethod
    def identity(cls, n: int = 1) -> "HPoint":
        return cls(np.zeros(n, dtype=complex), 0.0)

    def __eq__(self, other):
        if not isinstance(other, HPoint):
            return NotImplemented
        return self.n == other.n and bool(np.all(self.z == other.z)) and self.t == other.t

    def __hash__(self):
        return hash((self.z.tobytes(), self.t))

    def __mul__(self, other: "HPoint") -> "HPoint":
        return multiply(self, other)

    def __repr__(self):
        zs = ", ".join(f"{v.real:g}{v.imag:+g}i" for v in self.z)
        return f"HPoint(z=[{zs}], t={self.t:g})"


# -- vectorised kernels -----------------------------------------------------


def multiply_array(P, Q) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape[-1] != Q.shape[-1]:
        raise DimensionError(f"dimension mismatch: {P.shape[-1]} vs {Q.shape[-1]}")
    n = dim_of(P)
    x, y, t = P[..., :n], P[..., n : 2 * n], P[..., 2 * n]
    x2, y2, t2 = Q[..., :n], Q[..., n : 2 * n], Q[..., 2 * n]
    twist = 2.0 * np.sum(y * x2 - x * y2, axis=-1)
    out = np.empty(np.broadcast_shapes(P.shape, Q.shape))
    out[..., :n] = x + x2
    out[..., n : 2 * n] = y + y2
    out[..., 2 * n] = t + t2 + twist
    return out


def inverse_array(P) -> np.ndarray:
    return -np.asarray(P, dtype=float)


def dilate_array(delta, P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    n = dim_of(P)
    delta = np.asarray(delta, dtype=float)
    # delta is a scalar or one factor per point
    if np.broadcast_shapes(delta.shape, P.shape[:-1]) != P.shape[:-1]:
        raise ValueError(f"delta shape {delta.shape} does not match points {P.shape[:-1]}")
    out = P * delta[..., None]
    out[..., 2 * n] *= delta
    return out


# -- HPoint API -------------------------------------------------------------


def _check(p: HPoint, q: HPoint):
    if p.n != q.n:
        raise DimensionError(f"dimension mismatch: H^{p.n} vs H^{q.n}")


def multiply(p: HPoint, q: HPoint) -> HPoint:
    _check(p, q)
    return HPoint.from_coords(multiply_array(p.coords, q.coords))


def inverse(p: HPoint) -> HPoint:
    return HPoint(-p.z, -p.t)


def dilate(delta: float, p: HPoint) -> HPoint:
    if not delta > 0:
        raise ValueError(f"dilation factor must be positive, got {delta}")
    return HPoint(delta * p.z, delta * delta * p.t)


def left_translate(l: HPoint, p: HPoint) -> HPoint:
    return multiply(l, p)


# -- homogeneous homomorphisms ---------------------------------------------


@dataclass(frozen=True, eq=False)
class HomogeneousHom:
    """Dilation-commuting map ``(z, t) -> (A z, mu t)``.

    ``A`` acts on the real vector ``(Re z, Im z)``. It is a group
    homomorphism only when ``A`` scales the symplectic form
    ``sum_j (y_j x'_j - x_j y'_j)`` by exactly ``mu``; that is checked by
    :func:`validate_homomorphism`, not here, so invalid candidates can exist.
    """

    A: np.ndarray
    mu: float
    validated: bool = field(default=False, compare=False)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] % 2:
            raise DimensionError(f"A must be 2n x 2n, got shape {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "mu", float(self.mu))

    @property
    def n(self) -> int:
        return self.A.shape[0] // 2

    @classmethod
    def identity(cls, n: int = 1) -> "HomogeneousHom":
        return cls(np.eye(2 * n), 1.0, validated=True)

    @classmethod
    def dilation(cls, lam: float, n: int = 1) -> "HomogeneousHom":
        return cls(lam * np.eye(2 * n), lam * lam, validated=True)

    def apply_array(self, P) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        n = dim_of(P)
        if n != self.n:
            raise DimensionError(f"hom on H^{self.n} applied to H^{n} points")
        out = np.empty_like(P)
        out[..., : 2 * n] = P[..., : 2 * n] @ self.A.T
        out[..., 2 * n] = self.mu * P[..., 2 * n]
        return out

    def is_invertible(self) -> bool:
        return self.mu != 0 and abs(np.linalg.det(self.A)) > 0

    def inverse(self) -> "HomogeneousHom":
        return HomogeneousHom(np.linalg.inv(self.A), 1.0 / self.mu, validated=self.validated)

    def jacobian(self) -> float:
        """Absolute Jacobian determinant, i.e. the Haar-measure scale factor."""
        return abs(np.linalg.det(self.A) * self.mu)


def symplectic_matrix(n: int) -> np.ndarray:
    """J with ``v^T J w = sum_j (y_j x'_j - x_j y'_j)`` for v=(x,y), w=(x',y')."""
    J = np.zeros((2 * n, 2 * n))
    J[n:, :n] = np.eye(n)
    J[:n, n:] = -np.eye(n)
    return J


def validate_homomorphism(L: HomogeneousHom, samples: int = 256, tol: float = 1e-9, seed: int = 0):
    """Check ``L(pq) == L(p) L(q)`` on random pairs.

    Returns ``(ok, worst_residual)``; the residual is the largest coordinate
    error relative to ``max(1, |L(pq)|_inf)``.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = _rng.derive(seed, "validate-hom")
    d = 2 * L.n + 1
    P = rng.normal(size=(samples, d))
    Q = rng.normal(size=(samples, d))
    lhs = L.apply_array(multiply_array(P, Q))
    rhs = multiply_array(L.apply_array(P), L.apply_array(Q))
    scale = np.maximum(1.0, np.max(np.abs(lhs), axis=-1))
    worst = float(np.max(np.max(np.abs(lhs - rhs), axis=-1) / scale))
    return worst <= tol, worst


def hom_apply(L: HomogeneousHom, p: HPoint, *, strict: bool = True) -> HPoint:
    """Apply L to p. With ``strict`` an unvalidated L is checked first."""
    if strict and not L.validated:
        ok, worst = validate_homomorphism(L)
        if not ok:
            raise ValueError(f"L is not a group homomorphism (residual {worst:.3g})")
        object.__setattr__(L, "validated", True)
    return HPoint.from_coords(L.apply_array(p.coords))
