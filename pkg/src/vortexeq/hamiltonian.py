"""Vortex-type Hamiltonians, their gradients, Hessians and Morse reports.

For strengths ``gammas`` and points ``p_1..p_N``

    H(p) = sum_{i != j} G_i G_j G(p_i, p_j) + Psi(p)

where the double sum runs over ordered pairs, so each unordered pair is
counted twice.  Users comparing against half-sum conventions should rescale
the strengths by ``sqrt(2)``.

Configurations are arrays of shape ``(..., N, dim)``; all evaluators are
vectorised over the leading batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable

import numpy as np

from .errors import InvalidInputError, PreconditionError
from .fields import FunctionField, PeriodicField
from .geometry import (
    Surface,
    SurfaceKind,
    _retract,
    canonical,
    distance,
    project_tangent,
    tangent_basis,
)
from .green import green_pair, robin, robin_grad

__all__ = [
    "PsiSpec",
    "VortexSystem",
    "EquilibriumReport",
    "eval_H",
    "eval_Psi",
    "eval_H_and_differential",
    "differential",
    "grad_H",
    "grad_norm",
    "hess_H",
    "hessian_eigen",
    "morse_check",
    "build_report",
    "min_pair_distance",
    "ZERO_MODE_REL",
]

ZERO_MODE_REL = 1e-4
FD_STEP = 1e-5

_VARIANTS = ("zero", "kirchhoff_routh", "log_k", "two_log_k", "custom")


@dataclass(frozen=True, eq=False)
class PsiSpec:
    """The one-body term ``Psi``.

    variant
        ``zero``, ``kirchhoff_routh`` (``robin_sign * sum G_i^2 h(p_i, p_i)``),
        ``log_k`` (``sum log K(p_i)`` plus the Kirchhoff-Routh term),
        ``two_log_k`` (``K1`` on the first ``m`` vortices, ``K2`` on the rest,
        plus the Kirchhoff-Routh term) or ``custom``.
    robin_sign
        ``-1`` is the usual Kirchhoff-Routh sign.  ``+1`` gives the
        ``+ sum G_i^2 h(p_i, p_i)`` variant used in genericity arguments.
    func, grad
        For ``custom``: ``func(points) -> (...)`` and ``grad(points) -> (..., N, dim)``
        returning the chart differential (torus) or tangent gradient (sphere).
    invariant
        Declares a custom ``Psi`` invariant under the isometries of the
        surface, which decides how many symmetry zero modes to expect.
    """

    variant: str = "kirchhoff_routh"
    K: object = None
    K1: object = None
    K2: object = None
    m: int = 0
    func: Callable | None = None
    grad: Callable | None = None
    robin_sign: float = -1.0
    invariant: bool = False

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise InvalidInputError(f"unknown psi variant {self.variant!r}")
        if self.robin_sign not in (-1.0, 1.0):
            raise InvalidInputError("robin_sign must be -1 or +1")
        for name in self._field_names():
            fld = getattr(self, name)
            if fld is None:
                raise InvalidInputError(f"psi variant {self.variant} needs field {name}")
            if isinstance(fld, PeriodicField) and not np.all(fld.values > 0):
                raise InvalidInputError(f"{name} must be strictly positive on its grid")
            if not isinstance(fld, (PeriodicField, FunctionField)):
                raise InvalidInputError(f"{name} must be a PeriodicField or FunctionField")
        if self.variant == "custom" and (self.func is None or self.grad is None):
            raise InvalidInputError("custom psi needs both func and grad")
        if self.m < 0:
            raise InvalidInputError("split index m must be nonnegative")

    def _field_names(self):
        if self.variant == "log_k":
            return ("K",)
        if self.variant == "two_log_k":
            return ("K1", "K2")
        return ()

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def kirchhoff_routh(cls, robin_sign=-1.0):
        return cls("kirchhoff_routh", robin_sign=robin_sign)

    @classmethod
    def log_k(cls, K, robin_sign=-1.0):
        return cls("log_k", K=K, robin_sign=robin_sign)

    @classmethod
    def two_log_k(cls, K1, K2, m, robin_sign=-1.0):
        return cls("two_log_k", K1=K1, K2=K2, m=int(m), robin_sign=robin_sign)

    @classmethod
    def custom(cls, func, grad, invariant=False):
        return cls("custom", func=func, grad=grad, invariant=invariant)

    @property
    def has_robin(self):
        return self.variant in ("kirchhoff_routh", "log_k", "two_log_k")

    @property
    def is_invariant(self):
        """True when ``Psi`` commutes with every isometry of a homogeneous surface."""
        if self.variant in ("zero", "kirchhoff_routh"):
            return True
        if self.variant == "custom":
            return bool(self.invariant)
        fields_ = [getattr(self, n) for n in self._field_names()]
        return all(isinstance(f, PeriodicField) and np.ptp(f.values) == 0 for f in fields_)

    def to_dict(self):
        d = {"variant": self.variant}
        if self.has_robin:
            d["robin_sign"] = self.robin_sign
        if self.variant == "two_log_k":
            d["m"] = self.m
        if self.variant == "custom":
            d["invariant"] = bool(self.invariant)
        return d


@dataclass(frozen=True, eq=False)
class VortexSystem:
    """Surface, nonzero strengths and a ``Psi`` specification.

    Configurations are passed separately to each evaluator, which lets a
    single system evaluate whole batches of configurations at once.
    """

    surface: Surface
    gammas: np.ndarray
    psi: PsiSpec = field(default_factory=PsiSpec)

    def __post_init__(self):
        g = np.array(self.gammas, dtype=float).reshape(-1)
        if g.size < 2:
            raise InvalidInputError("need at least two vortices")
        if np.any(g == 0) or not np.all(np.isfinite(g)):
            raise InvalidInputError("vortex strengths must be finite and nonzero")
        if self.psi.variant == "two_log_k" and self.psi.m > g.size:
            raise InvalidInputError("split index m exceeds the number of vortices")
        g.setflags(write=False)
        object.__setattr__(self, "gammas", g)
        pairs = np.array(list(combinations(range(g.size), 2)), dtype=int)
        object.__setattr__(self, "_pairs", pairs)

    @property
    def n(self):
        return self.gammas.size

    @property
    def dim(self):
        return self.surface.dim

    @property
    def symmetry_dim(self):
        """Expected number of symmetry zero modes of the Hessian."""
        return self.surface.symmetry_dim if self.psi.is_invariant else 0

    def with_gammas(self, gammas):
        return VortexSystem(self.surface, gammas, self.psi)

    def with_psi(self, psi):
        return VortexSystem(self.surface, self.gammas, psi)

    def to_dict(self):
        return {
            "surface": self.surface.to_dict(),
            "gammas": self.gammas.tolist(),
            "psi": self.psi.to_dict(),
        }


def _config(sys, points):
    x = np.asarray(points, dtype=float)
    if x.ndim < 2 or x.shape[-2:] != (sys.n, sys.dim):
        raise InvalidInputError(
            f"configuration must have shape (..., {sys.n}, {sys.dim}), got {x.shape}"
        )
    return x


def min_pair_distance(sys, points):
    x = _config(sys, points)
    I, J = sys._pairs.T
    return distance(sys.surface, x[..., I, :], x[..., J, :]).min(axis=-1)


def _log_field(fld, x):
    val = np.asarray(fld(x), dtype=float)
    if np.any(val <= 0):
        raise InvalidInputError("K must be positive at every vortex position")
    return np.log(val)


def _log_field_grad(fld, x):
    val, g = fld.value_and_grad(x)
    val = np.asarray(val, dtype=float)
    if np.any(val <= 0):
        raise InvalidInputError("K must be positive at every vortex position")
    return np.asarray(g, dtype=float) / val[..., None]


def eval_Psi(spec, surface, points, gammas, tight=False):
    """``Psi`` at configuration(s) ``points`` of shape ``(..., N, dim)``."""
    x = np.asarray(points, dtype=float)
    g2 = np.asarray(gammas, dtype=float) ** 2
    if spec.variant == "zero":
        return np.zeros(x.shape[:-2])
    if spec.variant == "custom":
        return np.asarray(spec.func(x), dtype=float)
    out = spec.robin_sign * (g2 * robin(surface, x, tight=tight)).sum(axis=-1)
    if spec.variant == "log_k":
        out = out + _log_field(spec.K, x).sum(axis=-1)
    elif spec.variant == "two_log_k":
        m = spec.m
        if m:
            out = out + _log_field(spec.K1, x[..., :m, :]).sum(axis=-1)
        if m < x.shape[-2]:
            out = out + _log_field(spec.K2, x[..., m:, :]).sum(axis=-1)
    return out


def _psi_differential(spec, surface, x, gammas):
    if spec.variant == "zero":
        return np.zeros_like(x)
    if spec.variant == "custom":
        return np.asarray(spec.grad(x), dtype=float)
    out = spec.robin_sign * gammas[:, None] ** 2 * robin_grad(surface, x)
    if spec.variant == "log_k":
        out = out + _log_field_grad(spec.K, x)
    elif spec.variant == "two_log_k":
        m = spec.m
        parts = []
        if m:
            parts.append(_log_field_grad(spec.K1, x[..., :m, :]))
        if m < x.shape[-2]:
            parts.append(_log_field_grad(spec.K2, x[..., m:, :]))
        out = out + np.concatenate(parts, axis=-2)
    return out


def eval_H(sys, points, tight=False):
    """Hamiltonian at one configuration (float) or a batch (array)."""
    x = _config(sys, points)
    I, J = sys._pairs.T
    G = green_pair(sys.surface, x[..., I, :], x[..., J, :], tight=tight, grad=False)
    w = 2.0 * sys.gammas[I] * sys.gammas[J]
    h = (G * w).sum(axis=-1) + eval_Psi(sys.psi, sys.surface, x, sys.gammas, tight=tight)
    return float(h) if h.ndim == 0 else h


def eval_H_and_differential(sys, points, tight=False):
    """``(H, dH)`` in one pass; ``dH`` has the shape of ``points``."""
    x = _config(sys, points)
    I, J = sys._pairs.T
    G, gp, gq = green_pair(sys.surface, x[..., I, :], x[..., J, :], tight=tight)
    w = 2.0 * sys.gammas[I] * sys.gammas[J]
    h = (G * w).sum(axis=-1) + eval_Psi(sys.psi, sys.surface, x, sys.gammas, tight=tight)
    d = _psi_differential(sys.psi, sys.surface, x, sys.gammas).copy()
    for k, (i, j) in enumerate(sys._pairs):
        d[..., i, :] += w[k] * gp[..., k, :]
        d[..., j, :] += w[k] * gq[..., k, :]
    if not sys.surface.is_torus:
        d = project_tangent(sys.surface, x, d)
    return h, d


def differential(sys, points, tight=False):
    """Chart differential of ``H`` (the tangent gradient on the sphere)."""
    return eval_H_and_differential(sys, points, tight=tight)[1]


def _metric_weight(sys, x):
    """``exp(-2u)`` at each vortex on the conformal torus, else ``None``."""
    if sys.surface.kind is SurfaceKind.CONFORMAL_TORUS:
        return np.exp(-2.0 * sys.surface.conformal_factor(x))
    return None


def grad_H(sys, points):
    """Riemannian gradient of ``H``, one tangent vector per vortex.

    Flat torus and sphere: the Euclidean / tangent gradient.  Conformal torus:
    ``exp(-2u(p_i))`` times the chart differential.
    """
    x = _config(sys, points)
    d = differential(sys, x)
    wt = _metric_weight(sys, x)
    return d if wt is None else d * wt[..., None]


def _norm_from_differential(sys, x, d):
    wt = _metric_weight(sys, x)
    sq = np.einsum("...i,...i->...", d, d)
    if wt is not None:
        sq = sq * wt
    return np.sqrt(sq.sum(axis=-1))


def grad_norm(sys, points, tight=False):
    """Metric norm of the gradient, ``sqrt(sum_i |grad_i H|_g^2)``."""
    x = _config(sys, points)
    n = _norm_from_differential(sys, x, differential(sys, x, tight=tight))
    return float(n) if n.ndim == 0 else n


def _frame(sys, x):
    """Orthonormal chart frame per vortex, shape ``(N, 2, dim)``."""
    return tangent_basis(sys.surface, x)


def hess_H(sys, points, step=FD_STEP, return_defect=False):
    """Symmetrised Hessian in per-vortex chart coordinates, ``(2N, 2N)``.

    Central differences of the analytic differential.  On the sphere each
    vortex is moved along its tangent frame by the retraction and the
    differential at the displaced point is read off in the base frame, which
    gives the Riemannian Hessian at critical points.
    """
    x = canonical(sys.surface, _config(sys, points))
    if x.ndim != 2:
        raise InvalidInputError("hess_H takes a single configuration")
    n = sys.n
    E = _frame(sys, x)
    cols = []
    disp = []
    for i in range(n):
        for a in range(2):
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[i] = _retract(sys.surface, x[i], sgn * step * E[i, a])
                disp.append(y)
    D = differential(sys, np.array(disp)).reshape(2 * n, 2, n, sys.dim)
    for k in range(2 * n):
        dd = (D[k, 0] - D[k, 1]) / (2.0 * step)  # (N, dim)
        cols.append(np.einsum("jbd,jd->jb", E, dd).reshape(-1))
    A = np.array(cols).T
    defect = float(np.abs(A - A.T).max())
    H = 0.5 * (A + A.T)
    if return_defect:
        return H, defect
    return H


def hessian_eigen(hess, zero_rel=ZERO_MODE_REL):
    """Eigenvalues and the partition ``(negative, zero, positive)``."""
    lam = np.linalg.eigvalsh(hess)
    thresh = zero_rel * max(float(np.abs(lam).max()), 1e-300)
    neg = int((lam < -thresh).sum())
    zero = int((np.abs(lam) <= thresh).sum())
    pos = int((lam > thresh).sum())
    return lam, thresh, neg, zero, pos


@dataclass
class EquilibriumReport:
    """Refined critical point with its Hessian spectrum.

    ``zero_modes`` counts eigenvalues with ``|lam| <= threshold``;
    ``symmetry_modes`` is the number expected from the isometry group.  The
    point is nondegenerate (transverse to the symmetry orbit) when the two
    agree, which is the same as the smallest transverse ``|lam|`` exceeding
    the threshold.
    """

    point: np.ndarray
    h_value: float
    grad_norm: float
    hessian_eigenvalues: np.ndarray
    morse_index: int
    zero_modes: int
    positive_count: int
    symmetry_modes: int
    threshold: float
    nondegenerate: bool
    converged: bool = True
    iterations: int = 0
    message: str = ""

    def to_dict(self):
        return {
            "point": np.asarray(self.point).tolist(),
            "h_value": float(self.h_value),
            "grad_norm": float(self.grad_norm),
            "hessian_eigenvalues": np.asarray(self.hessian_eigenvalues).tolist(),
            "morse_index": int(self.morse_index),
            "zero_modes": int(self.zero_modes),
            "positive_count": int(self.positive_count),
            "symmetry_modes": int(self.symmetry_modes),
            "threshold": float(self.threshold),
            "nondegenerate": bool(self.nondegenerate),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "message": self.message,
        }


def build_report(sys, points, zero_rel=ZERO_MODE_REL, converged=True, iterations=0, message=""):
    x = canonical(sys.surface, _config(sys, points))
    h, d = eval_H_and_differential(sys, x)
    gn = float(_norm_from_differential(sys, x, d))
    lam, thresh, neg, zero, pos = hessian_eigen(hess_H(sys, x), zero_rel)
    return EquilibriumReport(
        point=x,
        h_value=float(h),
        grad_norm=gn,
        hessian_eigenvalues=lam,
        morse_index=neg,
        zero_modes=zero,
        positive_count=pos,
        symmetry_modes=sys.symmetry_dim,
        threshold=thresh,
        nondegenerate=zero == sys.symmetry_dim,
        converged=converged,
        iterations=iterations,
        message=message,
    )


def morse_check(sys, candidate, grad_tol=1e-6, zero_rel=ZERO_MODE_REL):
    """Hessian report at a near-critical configuration.

    Raises :class:`PreconditionError` unless ``|grad H| < grad_tol``.
    """
    x = _config(sys, candidate)
    gn = grad_norm(sys, x)
    if not gn < grad_tol:
        raise PreconditionError(
            f"candidate is not near-critical: |grad H| = {gn:.3e} >= {grad_tol:.1e}"
        )
    return build_report(sys, x, zero_rel=zero_rel)
