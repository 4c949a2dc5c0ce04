"""Independent reference computations.

None of these call into the Green-function evaluators of the package; the
values they produce are frozen in the test modules and re-derived by the
slow oracle tests.
"""

import mpmath
import numpy as np


def sphere_mean_constant():
    """Constant making ``-log(1 - cos t)/(4 pi) + c`` zero-mean on the unit sphere."""
    # 1 - cos t = 2 sin(t/2)^2 avoids cancellation at the singular endpoint
    f = lambda t: -mpmath.log(2 * mpmath.sin(t / 2) ** 2) / (4 * mpmath.pi) * mpmath.sin(t) / 2
    return -float(mpmath.quad(f, [0, mpmath.pi / 2, mpmath.pi]))


def _theta_green(x, y, tau):
    q = mpmath.exp(1j * mpmath.pi * tau)
    th = mpmath.jtheta(1, mpmath.pi * (x + 1j * y), q)
    return -mpmath.log(abs(th)) / (2 * mpmath.pi) + y ** 2 / (2 * mpmath.im(tau))


def theta_green(z, tau):
    """Flat-torus Green function from the Jacobi theta function, up to a constant.

    Lattice spanned by ``1`` and ``tau``; ``z`` is the complex offset.
    """
    return float(_theta_green(z.real, z.imag, tau))


def theta_green_curvature(z, tau):
    """``(G_xx, G_yy)`` of the theta-function Green function at offset ``z``."""
    x, y = z.real, z.imag
    gxx = mpmath.diff(lambda t: _theta_green(t, y, tau), x, 2)
    gyy = mpmath.diff(lambda t: _theta_green(x, t, tau), y, 2)
    return float(gxx), float(gyy)


def fourier_grid_green(n=512):
    """``G(0, x)`` on an ``n x n`` grid of the unit square torus by FFT.

    Uses the truncated Fourier series ``sum_k exp(2 pi i k.x) / (4 pi^2 |k|^2)``;
    the origin (singular) entry is meaningless.
    """
    k = np.fft.fftfreq(n, 1.0 / n)
    k2 = k[:, None] ** 2 + k[None, :] ** 2
    k2[0, 0] = 1.0
    ghat = 1.0 / (4 * np.pi ** 2 * k2)
    ghat[0, 0] = 0.0
    return np.fft.ifft2(ghat).real * n * n


def grid_critical_offsets(n=512, exclude=0.05, rel=1e-3):
    """Grid nodes where the discrete gradient of ``G(0, .)`` has a local minimum near zero."""
    g = fourier_grid_green(n)
    gx = (np.roll(g, -1, 0) - np.roll(g, 1, 0)) * (n / 2.0)
    gy = (np.roll(g, -1, 1) - np.roll(g, 1, 1)) * (n / 2.0)
    gn = np.hypot(gx, gy)
    f = np.arange(n) / n
    dist = np.minimum(f, 1 - f)
    r = np.hypot(dist[:, None], dist[None, :])
    ok = r > exclude
    scale = np.median(gn[ok])
    nb = np.min([np.roll(np.roll(gn, a, 0), b, 1) for a in (-1, 0, 1) for b in (-1, 0, 1) if a or b], axis=0)
    crit = ok & (gn <= nb) & (gn < rel * scale)
    idx = np.argwhere(crit)
    return sorted((float(i / n), float(j / n)) for i, j in idx)


def discrete_conformal_green(ufunc, n=128):
    """Green function of the 5-point discretisation of the conformal Laplacian.

    Solves ``-lap_h G = delta_q / h^2 - exp(2u) / vol`` on the unit square
    torus and fixes the constant by the ``exp(2u)``-weighted zero mean.
    Returns ``(X, Y, G)`` where ``G(i, j)`` is the grid function for the
    source at node ``(i, j)``.
    """
    h = 1.0 / n
    x = np.arange(n) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    e2u = np.exp(2 * ufunc(X, Y))
    s = np.sin(np.pi * np.arange(n) / n) ** 2
    lam = (4 / h ** 2) * (s[:, None] + s[None, :])
    lam[0, 0] = 1.0

    def G(i, j):
        r = -e2u / (e2u.sum() * h * h)
        r[i, j] += 1 / h ** 2
        rh = np.fft.fft2(r)
        rh[0, 0] = 0.0
        g = np.fft.ifft2(rh / lam).real
        return g - (g * e2u).sum() / e2u.sum()

    return X, Y, G


def fd_laplacian(w, h):
    """Fourth-order central-difference Laplacian on a periodic grid with spacing ``h``."""
    out = np.zeros_like(w)
    for ax in (0, 1):
        out += (-np.roll(w, 2, ax) + 16 * np.roll(w, 1, ax) - 30 * w
                + 16 * np.roll(w, -1, ax) - np.roll(w, -2, ax)) / (12 * h * h)
    return out


def collinear_cos_theta(g1, g2):
    """Symmetric collinear sphere equilibrium: cosine of the angle p1-p2."""
    return -g2 / (g1 + g2)

