"""Green function of the Laplace-Beltrami operator on the supported surfaces.

Conventions
-----------
``G(p, .)`` solves ``-lap G(p, .) = delta_p - 1/vol`` with zero mean, so that

    G(p, q) = -log(d(p, q)) / (2 pi) - h(p, q)

with ``h`` the regular part.  (The operator in the defining equation is the
non-negative Laplace-Beltrami operator; that is the only sign for which the
singular term above carries a minus sign.)

Flat torus
    Ewald splitting of the heat-kernel representation.  With ``x`` the
    minimum-image difference ``p - q`` and a splitting time ``t``,

        G(x) = 1/(4 pi) sum_n E1(|x+n|^2 / 4t) - t/A
               + 1/A sum_{k != 0} exp(-4 pi^2 |k|^2 t) / (4 pi^2 |k|^2) cos(2 pi k.x)

    over lattice vectors ``n`` and dual vectors ``k``.  The ``n = 0`` term is
    rewritten with the entire function ``Ein(z) = E1(z) + log z + gamma`` so
    the regular part is evaluated without cancellation.
Round sphere
    ``G = -log(1 - p.q) / (4 pi) + C_SPHERE``.
Conformal torus (metric ``exp(2u) g``)
    ``G~ = G + F`` with ``F(p, q) = c - w(p) - w(q)``, where ``w`` solves
    ``lap w = 1/vol_g - exp(2u)/vol_g~`` (zero mean) and
    ``c = mean_g~(w) + mean_g(w)``.

``grad_p`` is the coordinate differential in the chart (Cartesian on the
torus kinds) or the tangent gradient on the sphere, in physical units.
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np
from scipy.special import exp1

from .errors import InvalidInputError, SingularityError
from .fields import PeriodicField, fourier_eval
from .geometry import (
    SurfaceKind,
    canonical,
    distance,
    min_image,
    retract,
    tangent_basis,
)

__all__ = [
    "C_SPHERE",
    "GreenValue",
    "ConformalCorrection",
    "green_eval",
    "green_value",
    "green_grad",
    "green_pair",
    "robin",
    "robin_grad",
    "singularity_slope",
    "poisson_solve",
    "conformal_correction",
    "green_mean",
    "fourier_series_green",
]

EULER_GAMMA = 0.57721566490153286061

# Zero-mean constant of the unit-sphere Green function.  The mean of
# -log(1 - cos t)/(4 pi) over the sphere is
#   -(1/(8 pi)) * int_{-1}^{1} log(1 - u) du = -(2 log 2 - 2)/(8 pi),
# so C_SPHERE = (log 2 - 1)/(4 pi).  The same constant works for any radius.
# tests/test_green.py re-derives it by adaptive 1-D quadrature in the angle.
C_SPHERE = -0.024418571507784773

SINGULAR_DIST = 1e-12
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GreenValue:
    value: np.ndarray
    grad_p: np.ndarray
    regular: np.ndarray
    grad_regular: np.ndarray


@dataclass(frozen=True)
class ConformalCorrection:
    """Smooth correction ``F(p, q) = c - w(p) - w(q)``."""

    w: PeriodicField
    c: float

    def __call__(self, p, q):
        return self.c - (self.w(p) + self.w(q))


def _ein(z):
    """``Ein(z) = E1(z) + log z + gamma`` for ``z >= 0`` (entire)."""
    z = np.asarray(z, dtype=float)
    small = z < 1.0
    zs = np.where(small, z, 0.0)
    term = zs.copy()
    acc = zs.copy()
    for k in range(2, 22):
        term = -term * zs / k
        acc = acc + term / k
    zl = np.where(small, 1.0, z)
    big = exp1(zl) + np.log(zl) + EULER_GAMMA
    return np.where(small, acc, big)


class _TorusKernel:
    """Precomputed Ewald data for one lattice.

    ``split`` scales the splitting time with the squared length of the
    shortest lattice vector; ``cutoff`` is the exponent below which terms of
    either sum are kept (``exp(-36) ~ 2e-16``).
    """

    def __init__(self, surface, split=0.02, cutoff=36.0):
        R = surface.reduced
        self.reduced = R
        self.inv_reduced = surface.inv_reduced
        self.area = abs(float(np.linalg.det(R)))
        b1 = float(np.linalg.norm(R[0]))
        self.t = split * b1 * b1
        self.cutoff = cutoff
        # real-space images: everything that can come within reach of a
        # minimum-image vector (covering radius bound below)
        cover = 0.5 * (np.linalg.norm(R[0]) + np.linalg.norm(R[1]))
        reach = np.sqrt(4.0 * self.t * cutoff) + cover
        m = int(np.ceil(reach / (0.5 * b1))) + 1
        idx = np.array([(i, j) for i in range(-m, m + 1) for j in range(-m, m + 1)
                        if (i, j) != (0, 0)], dtype=float)
        vecs = idx @ R
        self.images = vecs[np.linalg.norm(vecs, axis=1) <= reach]
        # Fourier modes in the fractional coordinates of the reduced basis
        dual = np.linalg.inv(R).T
        self.dual = dual
        kmin = np.sqrt(cutoff / (4.0 * np.pi ** 2 * self.t))
        K1 = int(np.ceil(kmin * np.linalg.norm(R[0]))) + 1
        K2 = int(np.ceil(kmin * np.linalg.norm(R[1]))) + 1
        k1 = np.arange(-K1, K1 + 1)
        k2 = np.arange(-K2, K2 + 1)
        kv = k1[:, None, None] * dual[0] + k2[None, :, None] * dual[1]
        k2n = np.einsum("abi,abi->ab", kv, kv)
        with np.errstate(divide="ignore"):
            coef = np.exp(-4.0 * np.pi ** 2 * k2n * self.t) / (4.0 * np.pi ** 2 * k2n * self.area)
        coef[K1, K2] = 0.0
        self.coef = coef.astype(complex)
        self.const = (np.log(4.0 * self.t) - EULER_GAMMA) / (4.0 * np.pi) - self.t / self.area

    def smooth(self, x0, grad=False):
        """``S(x0) = G(x0) + log|x0|/(2 pi)`` for minimum-image ``x0``."""
        t = self.t
        r2 = np.einsum("...i,...i->...", x0, x0)
        z0 = r2 / (4.0 * t)
        val = _ein(z0) / (4.0 * np.pi) + self.const
        y = x0[..., None, :] + self.images
        ry2 = np.einsum("...ki,...ki->...k", y, y)
        zy = ry2 / (4.0 * t)
        val = val + exp1(zy).sum(axis=-1) / (4.0 * np.pi)
        s = x0 @ self.inv_reduced
        if not grad:
            return val + fourier_eval(self.coef, s)
        fv, fg = fourier_eval(self.coef, s, self.dual)
        val = val + fv
        safe = np.where(r2 > 0, r2, 1.0)
        near = np.where(r2 > 0, -np.expm1(-z0) / safe, 1.0 / (4.0 * t))
        g = near[..., None] * x0 / TWO_PI
        g = g - np.einsum("...k,...ki->...i", np.exp(-zy) / ry2, y) / TWO_PI
        return val, g + fg

    def screened_log(self, x0, t):
        """Periodised ``E1(|x+n|^2/4t)/(4 pi)``; its cell integral is ``t``."""
        r2 = np.einsum("...i,...i->...", x0, x0)
        y = x0[..., None, :] + self.images
        ry2 = np.einsum("...ki,...ki->...k", y, y)
        with np.errstate(divide="ignore"):
            v = exp1(r2 / (4.0 * t)) + exp1(ry2 / (4.0 * t)).sum(axis=-1)
        return v / (4.0 * np.pi)


_kernels = weakref.WeakKeyDictionary()
_tight_kernels = weakref.WeakKeyDictionary()
_corrections = weakref.WeakKeyDictionary()


def _kernel(s, tight=False):
    cache = _tight_kernels if tight else _kernels
    k = cache.get(s)
    if k is None:
        k = _TorusKernel(s, split=0.035, cutoff=50.0) if tight else _TorusKernel(s)
        cache[s] = k
    return k


def _check_distinct(d):
    if np.any(d < SINGULAR_DIST):
        raise SingularityError("Green function evaluated at coincident points")


def _sphere_parts(s, p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    diff = p - q
    one_minus = 0.5 * np.einsum("...i,...i->...", diff, diff)  # 1 - p.q, stable
    d = distance(s, p, q)
    return p, q, one_minus, d


def green_value(s, p, q, tight=False):
    """``G(p, q)`` only (cheapest path)."""
    if s.kind is SurfaceKind.ROUND_SPHERE:
        p, q, om, d = _sphere_parts(s, p, q)
        _check_distinct(d)
        return -np.log(om) / (4.0 * np.pi) + C_SPHERE
    x0 = min_image(s, np.asarray(p, float) - np.asarray(q, float))
    r = np.linalg.norm(x0, axis=-1)
    _check_distinct(r)
    val = _kernel(s, tight).smooth(x0) - np.log(r) / TWO_PI
    if s.kind is SurfaceKind.CONFORMAL_TORUS:
        val = val + conformal_correction(s)(p, q)
    return val


def green_grad(s, p, q, tight=False):
    """Value and ``grad_p`` of ``G(p, q)``."""
    gv = green_eval(s, p, q, tight=tight)
    return gv.value, gv.grad_p


def green_eval(s, p, q, tight=False):
    """Green function, its ``p``-gradient, regular part and its gradient.

    Raises :class:`SingularityError` when ``d(p, q) < 1e-12``.
    """
    if s.kind is SurfaceKind.ROUND_SPHERE:
        p, q, om, d = _sphere_parts(s, p, q)
        _check_distinct(d)
        R = s.radius
        value = -np.log(om) / (4.0 * np.pi) + C_SPHERE
        tang = q - np.einsum("...i,...i->...", p, q)[..., None] * p
        grad = tang / (4.0 * np.pi * R * om[..., None])
        regular = -np.log(d) / TWO_PI - value
        # d/dp of -log(d)/(2 pi) where d = R * angle
        ang = d / R
        sin_a = np.sin(ang)
        dir_ = tang / np.where(sin_a > 0, sin_a, 1.0)[..., None]
        grad_log = -(1.0 / (TWO_PI * R * ang))[..., None] * (-dir_)
        grad_reg = grad_log - grad
        return GreenValue(value, grad, regular, grad_reg)

    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    x0 = min_image(s, p - q)
    r2 = np.einsum("...i,...i->...", x0, x0)
    r = np.sqrt(r2)
    _check_distinct(r)
    S, gS = _kernel(s, tight).smooth(x0, grad=True)
    if s.kind is SurfaceKind.CONFORMAL_TORUS:
        corr = conformal_correction(s)
        wp, gwp = corr.w.value_and_grad(p)
        S = S + corr.c - wp - corr.w(q)
        gS = gS - gwp
    value = S - np.log(r) / TWO_PI
    grad = gS - x0 / (TWO_PI * r2[..., None])
    return GreenValue(value, grad, -S, -gS)


def green_pair(s, p, q, tight=False, grad=True):
    """``G(p, q)`` with both gradients ``(grad_p, grad_q)`` in one pass.

    The pairwise sums of the Hamiltonian go through here; ``grad=False``
    returns the value alone.
    """
    if not grad:
        return green_value(s, p, q, tight=tight)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if s.kind is SurfaceKind.ROUND_SPHERE:
        diff = p - q
        om = 0.5 * np.einsum("...i,...i->...", diff, diff)
        _check_distinct(s.radius * np.sqrt(2.0 * om))
        value = -np.log(om) / (4.0 * np.pi) + C_SPHERE
        c = 1.0 - om
        scale = 1.0 / (4.0 * np.pi * s.radius * om)
        gp = (q - c[..., None] * p) * scale[..., None]
        gq = (p - c[..., None] * q) * scale[..., None]
        return value, gp, gq
    x0 = min_image(s, p - q)
    r2 = np.einsum("...i,...i->...", x0, x0)
    _check_distinct(np.sqrt(r2))
    S, gS = _kernel(s, tight).smooth(x0, grad=True)
    value = S - 0.25 * np.log(r2) / np.pi
    g = gS - x0 / (TWO_PI * r2[..., None])
    gp, gq = g, -g
    if s.kind is SurfaceKind.CONFORMAL_TORUS:
        corr = conformal_correction(s)
        wp, gwp = corr.w.value_and_grad(p)
        wq, gwq = corr.w.value_and_grad(q)
        value = value + corr.c - wp - wq
        gp = gp - gwp
        gq = gq - gwq
    return value, gp, gq


def robin(s, p, tight=False):
    """Diagonal of the regular part, ``h(p, p)``.

    On the conformal torus this is the limit taken with the true metric
    distance ``d~(p, q) ~ exp(u(p)) |p - q|``, i.e. the chart value minus
    ``u(p) / (2 pi)``.
    """
    p = np.asarray(p, dtype=float)
    if s.kind is SurfaceKind.ROUND_SPHERE:
        val = -np.log(s.radius) / TWO_PI - np.log(2.0) / (4.0 * np.pi) - C_SPHERE
        return np.full(p.shape[:-1], val)
    h0 = -_kernel(s, tight).smooth(np.zeros(p.shape[:-1] + (2,)))
    if s.kind is SurfaceKind.FLAT_TORUS:
        return h0
    corr = conformal_correction(s)
    u = s.conformal_factor(p)
    return h0 - (corr.c - 2.0 * corr.w(p)) - u / TWO_PI


def robin_grad(s, p, tight=False):
    """Tangent (chart) gradient of ``p -> h(p, p)``."""
    p = np.asarray(p, dtype=float)
    if s.kind is not SurfaceKind.CONFORMAL_TORUS:
        return np.zeros_like(p)
    corr = conformal_correction(s)
    return 2.0 * corr.w.grad(p) - s.conformal_factor.grad(p) / TWO_PI


def singularity_slope(s, p, direction=None, dmin=1e-5, dmax=1e-2, num=31):
    """Least-squares slope of ``G(p, q)`` against ``log d(p, q)`` as ``q -> p``.

    Should equal ``-1/(2 pi)`` on every surface.
    """
    p = canonical(s, p)
    e = tangent_basis(s, p)
    if direction is None:
        v = np.cos(0.7) * e[0] + np.sin(0.7) * e[1]
    else:
        v = np.asarray(direction, dtype=float)
        v = v - (0.0 if s.is_torus else (v @ p) * p)
        v = v / np.linalg.norm(v)
    steps = np.geomspace(dmin, dmax, num)
    qs = np.array([retract(s, p, h * v) for h in steps])
    d = distance(s, p, qs)
    g = green_value(s, np.broadcast_to(p, qs.shape), qs)
    slope, _ = np.polyfit(np.log(d), g, 1)
    return float(slope)


def _wavevectors(lattice, shape):
    dual = np.linalg.inv(np.asarray(lattice, dtype=float)).T
    n1, n2 = shape
    k1 = np.fft.fftfreq(n1, 1.0 / n1)
    k2 = np.fft.fftfreq(n2, 1.0 / n2)
    kv = k1[:, None, None] * dual[0] + k2[None, :, None] * dual[1]
    return np.einsum("abi,abi->ab", kv, kv)


def poisson_solve(s, rhs, atol=1e-8):
    """Zero-mean solution of ``lap w = rhs`` on a periodic grid (spectral).

    ``lap`` is the flat (analyst's) Laplacian of the torus chart, so a single
    mode ``cos(2 pi x)`` maps to ``-cos(2 pi x) / (4 pi^2)``.  ``rhs`` is a
    grid over the fractional coordinates of ``s.lattice`` or a
    :class:`PeriodicField`; the result has the same type.
    """
    if not s.is_torus:
        raise InvalidInputError("poisson_solve needs a torus surface")
    as_field = isinstance(rhs, PeriodicField)
    r = rhs.values if as_field else np.asarray(rhs, dtype=float)
    if r.ndim != 2:
        raise InvalidInputError("rhs must be a 2-D grid")
    area = abs(float(np.linalg.det(s.lattice)))
    total = float(r.mean()) * area
    if abs(total) > atol * max(1.0, float(np.abs(r).mean()) * area):
        raise InvalidInputError(
            f"rhs has nonzero integral {total:.3e}; the equation has no solution"
        )
    k2 = _wavevectors(s.lattice, r.shape)
    rh = np.fft.fft2(r)
    k2[0, 0] = 1.0
    wh = -rh / (4.0 * np.pi ** 2 * k2)
    wh[0, 0] = 0.0
    w = np.fft.ifft2(wh).real
    if as_field:
        return PeriodicField(w, s.lattice)
    return w


def conformal_correction(s):
    """The smooth correction relating the conformal and flat Green functions."""
    if s.kind is not SurfaceKind.CONFORMAL_TORUS:
        raise InvalidInputError("conformal_correction needs a conformal torus")
    corr = _corrections.get(s)
    if corr is not None:
        return corr
    u = s.conformal_factor.values
    e2u = np.exp(2.0 * u)
    vol_g = abs(float(np.linalg.det(s.lattice)))
    vol_t = s.volume
    rhs = 1.0 / vol_g - e2u / vol_t
    rhs = rhs - rhs.mean()  # remove roundoff only; the mean is zero analytically
    w = poisson_solve(s, rhs)
    c = float((w * e2u).sum() / e2u.sum() + w.mean())
    corr = ConformalCorrection(PeriodicField(w, s.lattice), c)
    _corrections[s] = corr
    return corr


def _graded_nodes(a, b, levels=28, order=20):
    """Gauss-Legendre nodes on ``[a, b]`` geometrically graded towards ``a``."""
    x, w = np.polynomial.legendre.leggauss(order)
    edges = a + (b - a) * np.concatenate([[0.0], 0.5 ** np.arange(levels - 1, -1, -1)])
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
        weights.append(0.5 * (hi - lo) * w)
    return np.concatenate(nodes), np.concatenate(weights)


def green_mean(s, p, n=256):
    """Quadrature of ``G(p, .)`` against the area element of ``s``.

    Torus kinds: an ``n x n`` grid offset by half a cell from ``p``.  The
    logarithmic singularity is removed first with a periodised screened log
    whose cell integral is known exactly; the remainder is smooth and the
    grid sum is spectrally accurate.  Sphere: Gauss-Legendre in the polar
    angle about ``p`` (graded towards ``p``) times a uniform azimuth rule.
    """
    p = canonical(s, p)
    if s.kind is SurfaceKind.ROUND_SPHERE:
        th, wt = _graded_nodes(0.0, np.pi)
        phi = np.arange(2 * n) * (np.pi / n)
        e1, e2 = tangent_basis(s, p)
        ring = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
        q = np.cos(th)[:, None, None] * p + np.sin(th)[:, None, None] * ring[None]
        g = green_value(s, np.broadcast_to(p, q.shape), q)
        R2 = s.radius ** 2
        return float(np.einsum("ij,i->", g, wt * np.sin(th)) * (np.pi / n) * R2)
    area = abs(float(np.linalg.det(s.lattice)))
    f = (np.arange(n) + 0.5) / n
    F1, F2 = np.meshgrid(f, f, indexing="ij")
    q = p + np.stack([F1, F2], axis=-1) @ s.lattice
    q = canonical(s, q)
    kern = _kernel(s)
    tau = 0.005 * float(np.linalg.norm(s.reduced[0])) ** 2
    x0 = min_image(s, p - q)
    S = kern.screened_log(x0, tau)
    G = green_value(s, np.broadcast_to(p, q.shape), q)
    if s.kind is SurfaceKind.FLAT_TORUS:
        rho = np.ones_like(G)
        rho_p = 1.0
    else:
        rho = np.exp(2.0 * s.conformal_factor(q))
        rho_p = float(np.exp(2.0 * s.conformal_factor(p)))
    cell = area / (n * n)
    return float(((G - S) * rho).sum() * cell + ((rho - rho_p) * S).sum() * cell + rho_p * tau)


def fourier_series_green(lattice, x, kmax=64):
    """Plain truncated Fourier series of the flat-torus Green function.

    Independent of the Ewald evaluator and used to cross-check it at
    moderate separations; the truncation error decays like ``1/kmax^2``
    away from the lattice points.
    """
    lattice = np.asarray(lattice, dtype=float)
    area = abs(float(np.linalg.det(lattice)))
    dual = np.linalg.inv(lattice).T
    x = np.asarray(x, dtype=float)
    s = x @ np.linalg.inv(lattice)
    k = np.arange(-kmax, kmax + 1)
    kv = k[:, None, None] * dual[0] + k[None, :, None] * dual[1]
    k2 = np.einsum("abi,abi->ab", kv, kv)
    with np.errstate(divide="ignore"):
        coef = 1.0 / (4.0 * np.pi ** 2 * k2 * area)
    coef[kmax, kmax] = 0.0
    return fourier_eval(coef.astype(complex), s)
