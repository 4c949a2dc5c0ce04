"""Non-resonance condition on vortex strengths.

For a subset ``I`` of the vortices let

    S(I) = sum_{i != j in I} G_i G_j = (sum_I G_i)^2 - sum_I G_i^2.

The strengths are non-resonant when ``S(I) != 0`` for every ``|I| >= 2``;
the resonant strengths form an algebraic hypersurface ``V``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInputError

__all__ = [
    "GammaVector",
    "GammaCheck",
    "subset_sums",
    "gamma_condition",
    "variety_distance",
    "sinh_poisson_gammas",
    "SinhPoisson",
    "MAX_N",
]

MAX_N = 24
DEFAULT_RTOL = 1e-12


@dataclass(frozen=True)
class GammaVector:
    gammas: tuple

    def __post_init__(self):
        g = tuple(float(v) for v in np.asarray(self.gammas, dtype=float).reshape(-1))
        if len(g) < 2:
            raise InvalidInputError("need at least two strengths")
        if any(v == 0 or not np.isfinite(v) for v in g):
            raise InvalidInputError("strengths must be finite and nonzero")
        object.__setattr__(self, "gammas", g)

    def __len__(self):
        return len(self.gammas)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.gammas, dtype=dtype)


def _as_gammas(g):
    return np.asarray(g.gammas if isinstance(g, GammaVector) else GammaVector(g).gammas)


def subset_sums(gammas):
    """``(masks, S)`` for every subset with at least two elements.

    Bit ``i`` of ``masks[k]`` marks vortex ``i``.  Sums are built by doubling,
    so the cost is ``O(2^N)``.
    """
    g = np.asarray(gammas, dtype=float)
    n = g.size
    if n > MAX_N:
        raise CapacityError(f"subset enumeration supports N <= {MAX_N}, got {n}")
    s1 = np.zeros(1)
    s2 = np.zeros(1)
    size = np.zeros(1, dtype=np.int64)
    for v in g:
        s1 = np.concatenate([s1, s1 + v])
        s2 = np.concatenate([s2, s2 + v * v])
        size = np.concatenate([size, size + 1])
    masks = np.arange(1 << n, dtype=np.int64)
    keep = size >= 2
    return masks[keep], (s1 * s1 - s2)[keep]


def _indices(mask, n):
    return tuple(i + 1 for i in range(n) if mask >> i & 1)


@dataclass(frozen=True)
class GammaCheck:
    passed: bool
    worst_subset: tuple  # 1-based
    worst_value: float
    tolerance: float
    margin: float

    def to_dict(self):
        return {
            "passed": self.passed,
            "worst_subset": list(self.worst_subset),
            "worst_value": self.worst_value,
            "tolerance": self.tolerance,
            "margin": self.margin,
        }


def gamma_condition(gammas, rtol=DEFAULT_RTOL):
    """Check ``S(I) != 0`` for all subsets, up to ``rtol * sum G_i^2``.

    Returns the subset with the smallest ``|S(I)|`` (lowest bitmask on ties).
    """
    g = _as_gammas(gammas)
    masks, S = subset_sums(g)
    scale = float((g * g).sum())
    k = int(np.argmin(np.abs(S)))
    tol = rtol * scale
    worst = float(S[k])
    return GammaCheck(
        passed=bool(abs(worst) > tol),
        worst_subset=_indices(int(masks[k]), g.size),
        worst_value=worst,
        tolerance=tol,
        margin=abs(worst) / scale,
    )


def variety_distance(gammas):
    """Scale-free resonance margin ``min_I |S(I)| / sum G_i^2``."""
    g = _as_gammas(gammas)
    _, S = subset_sums(g)
    return float(np.abs(S).min() / (g * g).sum())


@dataclass(frozen=True)
class SinhPoisson:
    gammas: GammaVector
    resonant_taus: tuple


def sinh_poisson_gammas(m, n, tau, tol=1e-12):
    """Strengths ``(1,..,1, -1/tau,..,-1/tau)`` with ``m`` positive entries.

    Also returns every ``tau > 0`` at which some subset becomes resonant.  A
    subset with ``a`` positive and ``b`` negative entries has
    ``S = (a - b x)^2 - a - b x^2`` with ``x = 1/tau``, a quadratic in ``x``.
    """
    if not (isinstance(m, (int, np.integer)) and isinstance(n, (int, np.integer))):
        raise InvalidInputError("m and n must be integers")
    if not 0 <= m <= n or n < 2:
        raise InvalidInputError("need 0 <= m <= n and n >= 2")
    if not tau > 0:
        raise InvalidInputError("tau must be positive")
    gam = GammaVector([1.0] * m + [-1.0 / tau] * (n - m))
    roots = set()
    for a in range(m + 1):
        for b in range(n - m + 1):
            if a + b < 2:
                continue
            # (b^2 - b) x^2 - 2ab x + (a^2 - a) = 0
            coef = [b * b - b, -2 * a * b, a * a - a]
            if not any(coef):
                continue
            for r in np.roots(coef) if coef[0] or coef[1] else []:
                if abs(r.imag) < tol and r.real > tol:
                    roots.add(float(round(1.0 / r.real, 12)))
    return SinhPoisson(gam, tuple(sorted(roots)))
