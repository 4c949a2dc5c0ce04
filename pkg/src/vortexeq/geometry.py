"""Closed surfaces, points on them, distances and retractions.

Points are plain numpy arrays.  On the torus kinds a point is a Cartesian
pair reduced into the fundamental domain ``{s1 a1 + s2 a2 : 0 <= s < 1}``;
on the sphere it is a unit 3-vector (the physical position is ``radius * p``).
Tangent vectors are Cartesian pairs on the torus and ambient 3-vectors
orthogonal to ``p`` on the sphere, measured in physical length units.

Every function accepts arrays with arbitrary leading batch dimensions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import InvalidInputError
from .fields import PeriodicField

__all__ = [
    "SurfaceKind",
    "Surface",
    "flat_torus",
    "round_sphere",
    "conformal_torus",
    "canonical",
    "distance",
    "min_image",
    "retract",
    "random_point",
    "tangent_basis",
    "project_tangent",
    "rotate_tangent",
    "random_rotation",
]


class SurfaceKind(str, enum.Enum):
    FLAT_TORUS = "flat_torus"
    ROUND_SPHERE = "round_sphere"
    CONFORMAL_TORUS = "conformal_torus"


def gauss_reduce(basis):
    """Lagrange-Gauss reduction of a 2-D lattice basis (rows)."""
    b1, b2 = np.array(basis[0], dtype=float), np.array(basis[1], dtype=float)
    for _ in range(100):
        if b1 @ b1 > b2 @ b2:
            b1, b2 = b2, b1
        mu = np.round((b1 @ b2) / (b1 @ b1))
        if mu == 0:
            break
        b2 = b2 - mu * b1
    return np.array([b1, b2])


@dataclass(frozen=True, eq=False)
class Surface:
    """Immutable description of a supported closed surface.

    Build instances with :func:`flat_torus`, :func:`round_sphere` or
    :func:`conformal_torus`.  For the conformal torus the metric is
    ``exp(2u) g_flat`` with ``u`` the conformal factor.
    """

    kind: SurfaceKind
    lattice: np.ndarray | None = None
    radius: float | None = None
    conformal_factor: PeriodicField | None = None
    volume: float = field(init=False)

    def __post_init__(self):
        if self.kind in (SurfaceKind.FLAT_TORUS, SurfaceKind.CONFORMAL_TORUS):
            lat = np.array(self.lattice, dtype=float)
            if lat.shape != (2, 2):
                raise InvalidInputError("lattice must be two basis vectors in the plane")
            det = float(np.linalg.det(lat))
            if abs(det) < 1e-12 * max(1.0, float(np.abs(lat).max()) ** 2):
                raise InvalidInputError("lattice basis is linearly dependent")
            lat.setflags(write=False)
            object.__setattr__(self, "lattice", lat)
            if self.kind is SurfaceKind.FLAT_TORUS:
                vol = abs(det)
            else:
                u = self.conformal_factor
                if u is None:
                    raise InvalidInputError("conformal torus needs a conformal factor")
                if not np.allclose(u.lattice, lat):
                    raise InvalidInputError("conformal factor lives on a different lattice")
                # trapezoid on a periodic grid is spectrally accurate
                vol = abs(det) * float(np.exp(2.0 * u.values).mean())
        elif self.kind is SurfaceKind.ROUND_SPHERE:
            r = float(self.radius)
            if not r > 0:
                raise InvalidInputError("sphere radius must be positive")
            object.__setattr__(self, "radius", r)
            vol = 4.0 * np.pi * r * r
        else:
            raise InvalidInputError(f"unknown surface kind {self.kind!r}")
        object.__setattr__(self, "volume", vol)

    @property
    def is_torus(self):
        return self.kind is not SurfaceKind.ROUND_SPHERE

    @property
    def dim(self):
        """Length of the coordinate vector of a point."""
        return 2 if self.is_torus else 3

    @property
    def homogeneous(self):
        return self.kind is not SurfaceKind.CONFORMAL_TORUS

    @property
    def symmetry_dim(self):
        """Dimension of the isometry group acting on configurations."""
        if self.kind is SurfaceKind.FLAT_TORUS:
            return 2
        if self.kind is SurfaceKind.ROUND_SPHERE:
            return 3
        return 0

    @cached_property
    def inv_lattice(self):
        return np.linalg.inv(self.lattice)

    @cached_property
    def reduced(self):
        return gauss_reduce(self.lattice)

    @cached_property
    def inv_reduced(self):
        return np.linalg.inv(self.reduced)

    def frac(self, x):
        """Fractional coordinates of Cartesian torus points."""
        return np.asarray(x, dtype=float) @ self.inv_lattice

    def cart(self, s):
        return np.asarray(s, dtype=float) @ self.lattice

    def to_dict(self):
        d = {"kind": self.kind.value}
        if self.is_torus:
            d["lattice"] = self.lattice.tolist()
        else:
            d["radius"] = self.radius
        if self.conformal_factor is not None:
            d["conformal_grid_shape"] = list(self.conformal_factor.shape)
        return d

    def __repr__(self):
        if self.kind is SurfaceKind.ROUND_SPHERE:
            return f"Surface(round_sphere, radius={self.radius})"
        return f"Surface({self.kind.value}, lattice={self.lattice.tolist()})"


def flat_torus(lattice=((1.0, 0.0), (0.0, 1.0))):
    return Surface(SurfaceKind.FLAT_TORUS, lattice=lattice)


def round_sphere(radius=1.0):
    return Surface(SurfaceKind.ROUND_SPHERE, radius=radius)


def conformal_torus(u, lattice=((1.0, 0.0), (0.0, 1.0)), n=64):
    """Torus with metric ``exp(2u)`` times the flat metric.

    ``u`` is a :class:`PeriodicField`, a 2-D array of grid samples, or a
    callable ``u(x, y)`` sampled on an ``n x n`` grid.
    """
    lattice = np.array(lattice, dtype=float)
    if isinstance(u, PeriodicField):
        field_ = u
    elif callable(u):
        field_ = PeriodicField.from_function(u, n=n, lattice=lattice)
    else:
        field_ = PeriodicField(u, lattice)
    return Surface(SurfaceKind.CONFORMAL_TORUS, lattice=lattice, conformal_factor=field_)


def _check_points(s, *arrays):
    out = []
    for a in arrays:
        a = np.asarray(a, dtype=float)
        if a.ndim == 0 or a.shape[-1] != s.dim:
            raise InvalidInputError(
                f"points on {s.kind.value} need {s.dim} coordinates, got shape {a.shape}"
            )
        out.append(a)
    return out


def canonical(s, x):
    """Canonical representative of ``x`` (fundamental domain / unit vector)."""
    (x,) = _check_points(s, x)
    if s.is_torus:
        f = s.frac(x)
        f = f - np.floor(f)
        f = np.where(f >= 1.0, 0.0, f)
        return s.cart(f)
    n = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise InvalidInputError("zero vector is not a point of the sphere")
    return x / n


_NEIGHBOURS = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)


def min_image(s, d):
    """Shortest lattice translate of the Cartesian difference vector ``d``."""
    d = np.asarray(d, dtype=float)
    r = d @ s.inv_reduced
    r = r - np.round(r)
    x0 = r @ s.reduced
    cand = x0[..., None, :] + _NEIGHBOURS @ s.reduced
    k = np.argmin(np.einsum("...ij,...ij->...i", cand, cand), axis=-1)
    return np.take_along_axis(cand, k[..., None, None], axis=-2)[..., 0, :]


def distance(s, p, q):
    """Geodesic distance (flat chart distance on the conformal torus).

    Flat torus: minimum over lattice translates of the Euclidean distance.
    Sphere: ``radius * angle`` with the angle from ``atan2(|p x q|, p.q)``,
    which equals ``arccos`` of the clamped inner product but stays accurate
    for nearly coincident and nearly antipodal pairs.
    """
    p, q = _check_points(s, p, q)
    if s.is_torus:
        return np.linalg.norm(min_image(s, p - q), axis=-1)
    c = np.einsum("...i,...i->...", p, q)
    x = np.linalg.norm(np.cross(p, q), axis=-1)
    return s.radius * np.arctan2(x, c)


def project_tangent(s, p, v):
    if s.is_torus:
        return np.asarray(v, dtype=float)
    v = np.asarray(v, dtype=float)
    return v - np.einsum("...i,...i->...", v, p)[..., None] * p


def _retract(s, p, v):
    if s.is_torus:
        return canonical(s, p + v)
    y = p + v / s.radius
    return y / np.linalg.norm(y, axis=-1, keepdims=True)


def retract(s, p, v):
    """Move from ``p`` along tangent vector ``v``.

    Torus: add and reduce modulo the lattice.  Sphere: projective retraction
    ``(p + v/R) / |p + v/R|``.  ``retract(s, p, 0)`` returns ``p`` unchanged.
    """
    p, v = _check_points(s, p, v)
    if not s.is_torus:
        normal = np.abs(np.einsum("...i,...i->...", p, v))
        if np.any(normal > 1e-10 * np.maximum(1.0, np.linalg.norm(v, axis=-1))):
            raise InvalidInputError("sphere step is not tangent to the base point")
    if not np.any(v):
        return p.copy()
    return _retract(s, p, v)


def random_point(s, seed, size=None):
    """Area-uniform random point(s), deterministic in ``seed``.

    ``size`` may be an int or a shape; the point axis is appended.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    shape = () if size is None else ((size,) if np.isscalar(size) else tuple(size))
    if s.kind is SurfaceKind.ROUND_SPHERE:
        g = rng.standard_normal(shape + (3,))
        return g / np.linalg.norm(g, axis=-1, keepdims=True)
    if s.kind is SurfaceKind.FLAT_TORUS:
        return canonical(s, s.cart(rng.random(shape + (2,))))
    # rejection sampling against the conformal area element
    u = s.conformal_factor
    wmax = float(np.exp(2.0 * u.values.max())) * 1.05
    n = int(np.prod(shape)) if shape else 1
    out = np.empty((0, 2))
    while len(out) < n:
        cand = s.cart(rng.random((2 * n + 8, 2)))
        acc = rng.random(len(cand)) * wmax < np.exp(2.0 * u(cand))
        out = np.concatenate([out, cand[acc]])
    return canonical(s, out[:n].reshape(shape + (2,)))


def tangent_basis(s, p):
    """Oriented orthonormal tangent frame, shape ``(..., 2, dim)``.

    On the sphere ``(e1, e2, p)`` is right-handed so the quarter turn ``J``
    maps ``e1`` to ``e2``.  On the torus kinds it is the Cartesian frame of
    the chart (orthonormal for the flat metric).
    """
    p = np.asarray(p, dtype=float)
    if s.is_torus:
        return np.broadcast_to(np.eye(2), p.shape[:-1] + (2, 2)).copy()
    axis = np.zeros_like(p)
    idx = np.argmin(np.abs(p), axis=-1)
    np.put_along_axis(axis, idx[..., None], 1.0, axis=-1)
    e1 = np.cross(p, axis)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(p, e1)
    return np.stack([e1, e2], axis=-2)


def rotate_tangent(s, p, v):
    """Quarter turn ``J`` in the oriented tangent plane.

    Torus chart: ``(a, b) -> (-b, a)``.  Sphere: ``v -> p x v``.
    """
    v = np.asarray(v, dtype=float)
    if s.is_torus:
        return np.stack([-v[..., 1], v[..., 0]], axis=-1)
    return np.cross(p, v)


def random_rotation(seed):
    """Uniform random rotation matrix in SO(3)."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
