"""Scalar fields on the torus and on the sphere.

A :class:`PeriodicField` stores samples on a uniform grid over the fractional
coordinates of a lattice and evaluates its trigonometric interpolant (and the
Cartesian gradient of it) at arbitrary points.  A :class:`FunctionField`
wraps a pair of callables and is the way to hand a positive weight ``K`` to
a sphere Hamiltonian.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

__all__ = ["PeriodicField", "FunctionField", "fourier_eval"]


def fourier_eval(coef, s, dual=None):
    """Evaluate ``Re sum_k coef[k] exp(2 pi i k.s)`` at fractional points ``s``.

    ``coef`` is a dense ``(2K1+1, 2K2+1)`` array indexed from ``-K1..K1`` and
    ``-K2..K2``.  When ``dual`` (rows are the dual basis vectors) is given,
    the Cartesian gradient is returned as well.
    """
    s = np.asarray(s, dtype=float)
    K1 = (coef.shape[0] - 1) // 2
    K2 = (coef.shape[1] - 1) // 2
    k1 = np.arange(-K1, K1 + 1)
    k2 = np.arange(-K2, K2 + 1)
    e1 = np.exp(2j * np.pi * s[..., 0, None] * k1)
    e2 = np.exp(2j * np.pi * s[..., 1, None] * k2)
    t = e1 @ coef  # (..., 2K2+1)
    val = np.einsum("...b,...b->...", t, e2).real
    if dual is None:
        return val
    d1 = np.einsum("...b,...b->...", (e1 * (2j * np.pi * k1)) @ coef, e2).real
    d2 = np.einsum("...b,...b->...", t, e2 * (2j * np.pi * k2)).real
    grad = d1[..., None] * dual[0] + d2[..., None] * dual[1]
    return val, grad


class PeriodicField:
    """Smooth periodic field sampled on an ``n1 x n2`` grid of a lattice cell.

    Sample ``values[i, j]`` sits at fractional coordinates ``(i/n1, j/n2)``,
    i.e. at ``(i/n1) a1 + (j/n2) a2``.  Evaluation uses the trigonometric
    interpolant with Fourier modes below ``rtol`` (relative to the largest
    coefficient) dropped, so smooth fields evaluate quickly.
    """

    def __init__(self, values, lattice=((1.0, 0.0), (0.0, 1.0)), rtol=1e-15):
        values = np.array(values, dtype=float)
        if values.ndim != 2 or min(values.shape) < 4:
            raise InvalidInputError("field samples must be a 2-D grid of at least 4x4")
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("field samples must be finite")
        lattice = np.array(lattice, dtype=float)
        self.values = values
        self.values.setflags(write=False)
        self.lattice = lattice
        self.dual = np.linalg.inv(lattice).T
        n1, n2 = values.shape
        c = np.fft.fft2(values) / (n1 * n2)
        k1 = np.fft.fftfreq(n1, 1.0 / n1).astype(int)
        k2 = np.fft.fftfreq(n2, 1.0 / n2).astype(int)
        # drop the Nyquist rows: their interpolant is not real-valued
        keep1 = np.abs(k1) < n1 / 2
        keep2 = np.abs(k2) < n2 / 2
        c = c[np.ix_(keep1, keep2)]
        k1, k2 = k1[keep1], k2[keep2]
        mag = np.abs(c)
        big = mag > rtol * max(mag.max(), 1e-300)
        K1 = int(np.abs(k1[big.any(axis=1)]).max()) if big.any() else 0
        K2 = int(np.abs(k2[big.any(axis=0)]).max()) if big.any() else 0
        coef = np.zeros((2 * K1 + 1, 2 * K2 + 1), dtype=complex)
        sel1 = np.abs(k1) <= K1
        sel2 = np.abs(k2) <= K2
        coef[np.ix_(k1[sel1] + K1, k2[sel2] + K2)] = c[np.ix_(sel1, sel2)]
        self.coef = coef

    @classmethod
    def from_function(cls, func, n=64, lattice=((1.0, 0.0), (0.0, 1.0)), **kw):
        """Sample ``func(x, y)`` (Cartesian) on an ``n x n`` grid of the cell."""
        lattice = np.array(lattice, dtype=float)
        s = np.arange(n) / n
        S1, S2 = np.meshgrid(s, s, indexing="ij")
        xy = S1[..., None] * lattice[0] + S2[..., None] * lattice[1]
        return cls(func(xy[..., 0], xy[..., 1]), lattice, **kw)

    @property
    def shape(self):
        return self.values.shape

    def mean(self):
        return float(self.values.mean())

    def _frac(self, x):
        return np.asarray(x, dtype=float) @ self.dual.T

    def __call__(self, x):
        return fourier_eval(self.coef, self._frac(x))

    def value_and_grad(self, x):
        return fourier_eval(self.coef, self._frac(x), self.dual)

    def grad(self, x):
        return self.value_and_grad(x)[1]

    def __repr__(self):
        return f"PeriodicField(shape={self.values.shape}, modes={self.coef.shape})"


class FunctionField:
    """Scalar field given by callables ``f(points)`` and ``grad(points)``.

    ``grad`` must return the Riemannian (tangent) gradient in the ambient
    coordinates used for points on the surface.
    """

    def __init__(self, f, grad):
        self.f = f
        self._grad = grad

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    def grad(self, x):
        return np.asarray(self._grad(np.asarray(x, dtype=float)), dtype=float)

    def value_and_grad(self, x):
        return self(x), self.grad(x)
