"""Catalog of homeomorphisms of H^n with forward and inverse evaluators.

Every catalog map has a constant Jacobian determinant, recorded in
``jacobian``; image sets can then be sampled uniformly by pushing forward
uniform samples, and their Haar volume is ``jacobian * |E|``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .group import (
    HomogeneousHom,
    HPoint,
    dilate_array,
    inverse_array,
    multiply_array,
    validate_homomorphism,
)
from .metrics import Ball

ArrayMap = Callable[[np.ndarray], np.ndarray]


class MissingInverse(ValueError):
    """The operation needs f^-1 but the map descriptor has none."""


@dataclass(frozen=True, eq=False)
class MapDescriptor:
    id: str
    params: dict
    n: int
    forward: ArrayMap
    inverse: ArrayMap | None = None
    group_compatible: bool = False
    expected_qc: bool | None = None
    jacobian: float | None = None
    hom: HomogeneousHom | None = None
    ball_image: Callable[[Ball], Ball] | None = field(default=None, repr=False)

    def __call__(self, P) -> np.ndarray:
        return self.forward(np.asarray(P, dtype=float))

    def apply(self, p: HPoint) -> HPoint:
        return HPoint.from_coords(self.forward(p.coords))

    def inv(self, P) -> np.ndarray:
        if self.inverse is None:
            raise MissingInverse(f"map {self.id!r} has no inverse evaluator")
        return self.inverse(np.asarray(P, dtype=float))

    def inverse_map(self) -> "MapDescriptor":
        if self.inverse is None:
            raise MissingInverse(f"map {self.id!r} has no inverse evaluator")
        bi = None
        if self.ball_image is not None:
            fwd_ball = self.ball_image
            inv_pt = self.inverse

            def bi(B: Ball) -> Ball:
                c = HPoint.from_coords(inv_pt(B.center.coords))
                scale = fwd_ball(Ball(c, 1.0, B.metric)).radius
                return Ball(c, B.radius / scale, B.metric)

        return MapDescriptor(
            id=f"inverse({self.id})",
            params=dict(self.params),
            n=self.n,
            forward=self.inverse,
            inverse=self.forward,
            group_compatible=self.group_compatible,
            expected_qc=self.expected_qc,
            jacobian=None if self.jacobian is None else 1.0 / self.jacobian,
            hom=None if self.hom is None else self.hom.inverse(),
            ball_image=bi,
        )

    def describe(self) -> dict:
        return {"id": self.id, "params": _jsonable(self.params), "n": self.n}


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        out[k] = v
    return out


def compose(f: MapDescriptor, g: MapDescriptor) -> MapDescriptor:
    """``f o g``."""
    if f.n != g.n:
        raise ValueError("cannot compose maps on different groups")
    inv = None
    if f.inverse is not None and g.inverse is not None:
        inv = lambda P: g.inverse(f.inverse(P))  # noqa: E731
    bi = None
    if f.ball_image is not None and g.ball_image is not None:
        bi = lambda B: f.ball_image(g.ball_image(B))  # noqa: E731
    hom = None
    if f.hom is not None and g.hom is not None:
        hom = HomogeneousHom(f.hom.A @ g.hom.A, f.hom.mu * g.hom.mu,
                             validated=f.hom.validated and g.hom.validated)
    jac = None if f.jacobian is None or g.jacobian is None else f.jacobian * g.jacobian
    qc = None
    if f.expected_qc is not None and g.expected_qc is not None:
        qc = f.expected_qc and g.expected_qc
    return MapDescriptor(
        id=f"{f.id}*{g.id}",
        params={"outer": f.describe(), "inner": g.describe()},
        n=f.n,
        forward=lambda P: f.forward(g.forward(P)),
        inverse=inv,
        group_compatible=f.group_compatible and g.group_compatible,
        expected_qc=qc,
        jacobian=jac,
        hom=hom,
        ball_image=bi,
    )


# -- catalog constructors --------------------------------------------------


def identity(n: int = 1) -> MapDescriptor:
    return MapDescriptor("identity", {}, n, lambda P: np.array(P, dtype=float), lambda P: np.array(P, dtype=float),
                         True, True, 1.0, HomogeneousHom.identity(n), lambda B: B)


def left_translation(l, n: int | None = None) -> MapDescriptor:
    l = l if isinstance(l, HPoint) else HPoint.from_coords(l)
    lc, li = l.coords, inverse_array(l.coords)
    return MapDescriptor(
        "left-translation", {"l": lc.tolist()}, l.n,
        lambda P: multiply_array(lc, P), lambda P: multiply_array(li, P),
        True, True, 1.0, None,
        lambda B: Ball(HPoint.from_coords(multiply_array(lc, B.center.coords)), B.radius, B.metric),
    )


def _rot_matrix(theta: float, n: int) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    I = np.eye(n)
    return np.block([[c * I, -s * I], [s * I, c * I]])


def rotation(theta: float, n: int = 1) -> MapDescriptor:
    """(z, t) -> (e^{i theta} z, t)."""
    L = HomogeneousHom(_rot_matrix(theta, n), 1.0, validated=True)
    Li = L.inverse()
    return MapDescriptor(
        "rotation", {"theta": float(theta)}, n, L.apply_array, Li.apply_array,
        True, True, 1.0, L,
        lambda B: Ball(HPoint.from_coords(L.apply_array(B.center.coords)), B.radius, B.metric),
    )


def conjugation(n: int = 1) -> MapDescriptor:
    """(z, t) -> (conj z, -t)."""
    A = np.diag(np.concatenate([np.ones(n), -np.ones(n)]))
    L = HomogeneousHom(A, -1.0, validated=True)
    return MapDescriptor(
        "conjugation", {}, n, L.apply_array, L.apply_array, True, True, 1.0, L,
        lambda B: Ball(HPoint.from_coords(L.apply_array(B.center.coords)), B.radius, B.metric),
    )


def dilation(lam: float, n: int = 1) -> MapDescriptor:
    if not lam > 0:
        raise ValueError(f"dilation factor must be positive, got {lam}")
    L = HomogeneousHom.dilation(lam, n)
    return MapDescriptor(
        "dilation", {"lam": float(lam)}, n,
        lambda P: dilate_array(lam, P), lambda P: dilate_array(1.0 / lam, P),
        True, True, lam ** (2 * n + 2), L,
        lambda B: Ball(HPoint.from_coords(dilate_array(lam, B.center.coords)), lam * B.radius, B.metric),
    )


def homomorphism(A, mu: float, id: str = "homomorphism", params: dict | None = None) -> MapDescriptor:
    L = HomogeneousHom(A, mu)
    ok, worst = validate_homomorphism(L)
    if ok:
        object.__setattr__(L, "validated", True)
    inv = L.inverse().apply_array if L.is_invertible() else None
    return MapDescriptor(
        id, params if params is not None else {"A": L.A.tolist(), "mu": L.mu}, L.n,
        L.apply_array, inv, ok, ok and L.is_invertible(), L.jacobian(), L,
    )


def anisotropic(a: float, n: int = 1) -> MapDescriptor:
    """Homogeneous homomorphism x_1 -> a x_1, y_1 -> y_1 / a, t -> t."""
    if a == 0:
        raise ValueError("a must be non-zero")
    d = np.ones(2 * n)
    d[0], d[n] = a, 1.0 / a
    return homomorphism(np.diag(d), 1.0, "anisotropic", {"a": float(a)})


def vertical_stretch(c: float = 2.0, n: int = 1) -> MapDescriptor:
    """(z, t) -> (z, c t). A homeomorphism, not quasiconformal for c != 1."""
    if c == 0:
        raise ValueError("c must be non-zero")

    def fwd(P, c=c):
        Q = np.array(P, dtype=float)
        Q[..., -1] *= c
        return Q

    def inv(P, c=c):
        Q = np.array(P, dtype=float)
        Q[..., -1] /= c
        return Q

    return MapDescriptor("vertical-stretch", {"c": float(c)}, n, fwd, inv, False, c == 1, abs(c))


def contact_shear(k: float = 1.0, n: int = 1) -> MapDescriptor:
    """(x_1, y_1, t) -> (x_1, y_1 + k x_1^2, t - 2k x_1^3 / 3).

    A smooth contact diffeomorphism that is not a homomorphism; its Pansu
    differential varies with the base point.
    """

    def fwd(P, k=k):
        Q = np.array(P, dtype=float)
        x = Q[..., 0]
        Q[..., n] += k * x**2
        Q[..., -1] -= 2.0 * k * x**3 / 3.0
        return Q

    def inv(P, k=k):
        Q = np.array(P, dtype=float)
        x = Q[..., 0]
        Q[..., n] -= k * x**2
        Q[..., -1] += 2.0 * k * x**3 / 3.0
        return Q

    return MapDescriptor("contact-shear", {"k": float(k)}, n, fwd, inv, True, None, 1.0)


CATALOG = {
    "identity": identity,
    "left-translation": left_translation,
    "rotation": rotation,
    "conjugation": conjugation,
    "dilation": dilation,
    "anisotropic": anisotropic,
    "vertical-stretch": vertical_stretch,
    "contact-shear": contact_shear,
    "homomorphism": homomorphism,
}

CATALOG_DOC = {
    "identity": "p -> p",
    "left-translation": "p -> l p; params: l (2n+1 coordinates)",
    "rotation": "(z,t) -> (e^{i theta} z, t); params: theta",
    "conjugation": "(z,t) -> (conj z, -t)",
    "dilation": "(z,t) -> (lam z, lam^2 t); params: lam",
    "anisotropic": "(x1,y1,t) -> (a x1, y1/a, t); params: a",
    "vertical-stretch": "(z,t) -> (z, c t); params: c",
    "contact-shear": "(x1,y1,t) -> (x1, y1 + k x1^2, t - 2k x1^3/3); params: k",
    "homomorphism": "(z,t) -> (A z, mu t); params: A (2n x 2n), mu",
}


def make_map(id: str, n: int = 1, **params) -> MapDescriptor:
    """Build a catalog map by id. ``compose`` takes a list of map specs."""
    if id == "compose":
        specs = params.pop("maps")
        built = [make_map(s["id"], n, **s.get("params", {})) for s in specs]
        out = built[0]
        for g in built[1:]:
            out = compose(out, g)
        return out
    if id not in CATALOG:
        raise KeyError(f"unknown map id {id!r}; known: {sorted(CATALOG)}")
    if id == "left-translation":
        l = np.asarray(params["l"], dtype=float)
        if l.size != 2 * n + 1:
            raise ValueError(f"left-translation l must have {2 * n + 1} coordinates")
        return left_translation(l)
    if id == "homomorphism":
        return homomorphism(np.asarray(params["A"], dtype=float), float(params["mu"]))
    return CATALOG[id](n=n, **params)


def with_id(f: MapDescriptor, id: str) -> MapDescriptor:
    return replace(f, id=id)
