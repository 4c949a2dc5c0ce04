"""Three-vortex special cases: the sphere classifier and symmetric searches.

Sphere triples
    On the round sphere a configuration of three vortices is an equilibrium
    iff ``a_1 p_1 + a_2 p_2 + a_3 p_3 = 0`` with ``a_i = G_i (G_j + G_k)``.
    The three vectors ``a_i p_i`` must close a triangle, so an equilibrium
    exists iff every ``a_i`` is nonzero and the ``|a_i|`` satisfy the strict
    triangle inequality; it is then unique up to rotation and lies on a
    great circle.

Symmetric searches
    For an isometric involution ``tau`` the fixed set of the induced action
    on configurations consists of triples on a fixed circle, and critical
    points of H restricted to it are critical for H.  :func:`fixed_circle_search`
    runs a mountain pass between the two blow-up regions of the family
    ``p^s = (c(-s), c(0), c(s))``; :func:`reflection_search` minimises H on
    ``{p_2 fixed by tau, p_3 = tau(p_1)}`` when ``G_1 = G_3``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, SingularityError
from .geometry import (
    SurfaceKind,
    _retract,
    canonical,
    distance,
    random_point,
    round_sphere,
    tangent_basis,
)
from .hamiltonian import (
    PsiSpec,
    VortexSystem,
    build_report,
    eval_H,
    eval_H_and_differential,
    eval_Psi,
    grad_norm,
)

__all__ = [
    "SphereTripleSolution",
    "SphereClassification",
    "classify_sphere_triple",
    "FixedCircle",
    "Involution",
    "torus_reflection",
    "sphere_equator_reflection",
    "circle_configuration",
    "fixed_circle_search",
    "reflection_search",
    "SymmetricResult",
]


# -- sphere classifier -------------------------------------------------------


@dataclass
class SphereTripleSolution:
    points: np.ndarray
    residual: float
    angles: np.ndarray  # angular separations (p1,p2), (p2,p3), (p1,p3)
    grad_norm: float
    cos_theta: float | None = None  # symmetric case: cos of the angle p1-p2

    def to_dict(self):
        return {
            "points": self.points.tolist(),
            "residual": self.residual,
            "angles": self.angles.tolist(),
            "grad_norm": self.grad_norm,
            "cos_theta": self.cos_theta,
        }


@dataclass
class SphereClassification:
    gammas: tuple
    exists: bool
    coefficients: tuple
    symmetric: bool
    solutions: list = field(default_factory=list)
    reason: str = ""

    def to_dict(self):
        return {
            "gammas": list(self.gammas),
            "exists": self.exists,
            "coefficients": list(self.coefficients),
            "symmetric": self.symmetric,
            "solutions": [s.to_dict() for s in self.solutions],
            "reason": self.reason,
        }


def _angle(p, q):
    return float(np.arctan2(np.linalg.norm(np.cross(p, q)), p @ q))


def classify_sphere_triple(gammas, radius=1.0):
    """Existence and shape of the three-vortex equilibria on the sphere.

    The returned solution is verified against the Kirchhoff-Routh
    Hamiltonian on the sphere of the given radius.
    """
    g = np.asarray(gammas, dtype=float).reshape(-1)
    if g.size != 3:
        raise InvalidInputError("need exactly three strengths")
    if np.any(g == 0) or not np.all(np.isfinite(g)):
        raise InvalidInputError("strengths must be finite and nonzero")
    a = np.array([g[0] * (g[1] + g[2]), g[1] * (g[0] + g[2]), g[2] * (g[0] + g[1])])
    sym = bool(g[0] == g[2] and g[0] < 0 < g[1])
    out = SphereClassification(tuple(g.tolist()), False, tuple(a.tolist()), sym)
    A = np.abs(a)
    scale = A.max()
    if np.any(a == 0):
        out.reason = "some a_i vanishes; the remaining two terms cannot cancel"
        return out
    # strict triangle inequality; on equality the closing vectors are
    # collinear and two vortices either coincide or sit antipodally
    slack = np.array([A[1] + A[2] - A[0], A[0] + A[2] - A[1], A[0] + A[1] - A[2]])
    tol = 1e-14 * scale
    if np.any(slack < -tol):
        out.reason = "the |a_i| violate the triangle inequality"
        return out
    degenerate = bool(np.any(np.abs(slack) <= tol))
    # place a_1 p_1 along x, a_2 p_2 in the xy-plane, a_3 p_3 closes the triangle
    c12 = np.clip((A[2] ** 2 - A[0] ** 2 - A[1] ** 2) / (2 * A[0] * A[1]), -1.0, 1.0)
    V1 = A[0] * np.array([1.0, 0.0, 0.0])
    V2 = A[1] * np.array([c12, np.sqrt(1.0 - c12 * c12), 0.0])
    V3 = -(V1 + V2)
    P = np.array([V1 / a[0], V2 / a[1], V3 / a[2]])
    P /= np.linalg.norm(P, axis=1, keepdims=True)
    if degenerate:
        d = [_angle(P[i], P[j]) for i, j in ((0, 1), (1, 2), (0, 2))]
        if min(d) < 1e-8:
            out.reason = "boundary case: the closing triangle is flat and two vortices coincide"
            return out
    if sym:
        # cross-check against the closed form for G_1 = G_3 < 0 < G_2
        if not (g[0] + 2 * g[1] < 0):
            raise AssertionError("classifier disagrees with the symmetric criterion")
    res = float(np.linalg.norm(a @ P))
    sys = VortexSystem(round_sphere(radius), g, PsiSpec.kirchhoff_routh())
    gn = float(grad_norm(sys, P))
    ang = np.array([_angle(P[0], P[1]), _angle(P[1], P[2]), _angle(P[0], P[2])])
    cos_t = float(P[0] @ P[1]) if sym else None
    out.exists = True
    out.solutions = [SphereTripleSolution(P, res, ang, gn, cos_t)]
    out.reason = "the |a_i| satisfy the strict triangle inequality"
    return out


# -- involutions and fixed circles ------------------------------------------


@dataclass(frozen=True, eq=False)
class FixedCircle:
    """Closed geodesic ``t -> c(t)`` of length ``length``, unit speed."""

    surface: object
    origin: np.ndarray
    direction: np.ndarray
    length: float

    def point(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        s = self.surface
        if s.is_torus:
            return canonical(s, self.origin + t * self.direction)
        R = s.radius
        return np.cos(t / R) * self.origin + np.sin(t / R) * self.direction

    def tangent(self, t):
        t = np.asarray(t, dtype=float)[..., None]
        s = self.surface
        if s.is_torus:
            return np.broadcast_to(self.direction, t.shape[:-1] + (2,)).copy()
        R = s.radius
        return -np.sin(t / R) * self.origin + np.cos(t / R) * self.direction

    def to_dict(self):
        return {"origin": self.origin.tolist(), "direction": self.direction.tolist(),
                "length": self.length}


@dataclass(frozen=True, eq=False)
class Involution:
    """Linear isometric involution ``p -> M p`` of a torus or sphere."""

    kind: str
    surface: object
    matrix: np.ndarray
    fixed_circles: tuple

    def apply(self, p):
        p = np.asarray(p, dtype=float)
        return canonical(self.surface, p @ self.matrix.T)

    __call__ = apply

    def to_dict(self):
        return {"kind": self.kind, "fixed_circles": [c.to_dict() for c in self.fixed_circles]}


def torus_reflection(surface, axis="x"):
    """Reflection ``(x, y) -> (x, -y)`` (``axis='x'``) or ``(x, y) -> (-x, y)``.

    Needs a rectangular lattice with basis vectors along the axes.  The
    fixed set is two parallel circles, half a period apart.
    """
    if not surface.is_torus:
        raise InvalidInputError("torus_reflection needs a torus")
    L = surface.lattice
    if abs(L[0, 1]) > 1e-14 * abs(L[0, 0]) or abs(L[1, 0]) > 1e-14 * abs(L[1, 1]):
        raise InvalidInputError("reflection needs a rectangular lattice aligned with the axes")
    a, b = abs(L[0, 0]), abs(L[1, 1])
    if axis == "x":
        M = np.diag([1.0, -1.0])
        circles = tuple(FixedCircle(surface, np.array([0.0, y]), np.array([1.0, 0.0]), a)
                        for y in (0.0, 0.5 * b))
    elif axis == "y":
        M = np.diag([-1.0, 1.0])
        circles = tuple(FixedCircle(surface, np.array([x, 0.0]), np.array([0.0, 1.0]), b)
                        for x in (0.0, 0.5 * a))
    else:
        raise InvalidInputError("axis must be 'x' or 'y'")
    if surface.kind is SurfaceKind.CONFORMAL_TORUS:
        u = surface.conformal_factor
        pts = random_point(surface, 12345, 64)
        if np.abs(u(pts) - u(pts @ M.T)).max() > 1e-10:
            raise InvalidInputError("the conformal factor is not invariant under the reflection")
    return Involution(f"torus_reflection_{axis}", surface, M, circles)


def sphere_equator_reflection(surface):
    """``(x1, x2, x3) -> (x1, x2, -x3)``; the fixed set is the equator."""
    if surface.kind is not SurfaceKind.ROUND_SPHERE:
        raise InvalidInputError("equator reflection needs a round sphere")
    circ = FixedCircle(surface, np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0]),
                       2.0 * np.pi * surface.radius)
    return Involution("sphere_equator", surface, np.diag([1.0, 1.0, -1.0]), (circ,))


def default_involution(surface):
    if surface.is_torus:
        return torus_reflection(surface, "x")
    return sphere_equator_reflection(surface)


def _check_invariant(sys, maps, seed=7, tol=1e-10):
    """``Psi`` must be invariant under each configuration map in ``maps``."""
    if sys.psi.variant == "zero":
        return
    x = random_point(sys.surface, seed, (8, sys.n))
    base = eval_Psi(sys.psi, sys.surface, x, sys.gammas)
    for fmap in maps:
        other = eval_Psi(sys.psi, sys.surface, fmap(x), sys.gammas)
        if np.abs(other - base).max() > tol * max(1.0, np.abs(base).max()):
            raise InvalidInputError("Psi is not invariant under the involution")


# -- shared Newton on reduced coordinates -----------------------------------


def _newton(coord_grad, move, z, drop, tol, max_iter=40, step=1e-5):
    """Damped Newton in local coordinates with ``drop`` soft modes removed.

    ``coord_grad(z, base)`` returns the gradient in the coordinates attached
    to ``base``; ``move(z, delta)`` displaces ``z`` by coordinate vector
    ``delta``.
    """
    g = coord_grad(z, z)
    gn = float(np.linalg.norm(g))
    n = g.size
    it = 0
    while gn >= tol and it < max_iter:
        it += 1
        A = np.empty((n, n))
        for k in range(n):
            e = np.zeros(n)
            e[k] = step
            A[:, k] = (coord_grad(move(z, e), z) - coord_grad(move(z, -e), z)) / (2 * step)
        A = 0.5 * (A + A.T)
        lam, V = np.linalg.eigh(A)
        keep = np.ones(n, dtype=bool)
        keep[np.argsort(np.abs(lam))[:drop]] = False
        keep &= np.abs(lam) > 1e-12 * np.abs(lam).max()
        delta = -V[:, keep] @ ((V[:, keep].T @ g) / lam[keep])
        t = 1.0
        for _ in range(30):
            try:
                zn = move(z, t * delta)
                gnew = coord_grad(zn, zn)
                nn = float(np.linalg.norm(gnew))
            except SingularityError:
                nn = np.inf
            if nn < gn:
                break
            t *= 0.5
        else:
            break
        z, g, gn = zn, gnew, nn
    return z, gn, it


@dataclass
class SymmetricResult:
    report: object
    reduced_grad_norm: float
    level: float
    details: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "report": self.report.to_dict(),
            "reduced_grad_norm": self.reduced_grad_norm,
            "level": self.level,
            "details": self.details,
        }


def _check_sign_pattern(g):
    if g.size != 3:
        raise InvalidInputError("symmetric searches take three strengths")
    if not (g[0] < 0 < g[1] and g[2] < 0):
        raise InvalidInputError("strengths must alternate in sign: G_1 < 0 < G_2, G_3 < 0")
    if not g[0] * g[1] + g[0] * g[2] + g[1] * g[2] > 0:
        raise InvalidInputError("need G_1 G_2 + G_1 G_3 + G_2 G_3 > 0")


# -- fixed-circle mountain pass ----------------------------------------------


def circle_configuration(circle, w):
    """Configurations ``(c(w_1), c(w_2), c(w_3))`` for lifted angles ``w``."""
    return circle.point(np.asarray(w, dtype=float))


def _circle_h(sys, circle, W):
    return eval_H(sys, circle_configuration(circle, W))


def _circle_grad(sys, circle, W):
    x = circle_configuration(circle, W)
    _, d = eval_H_and_differential(sys, x)
    return np.einsum("...i,...i->...", d, circle.tangent(W))


def _reparametrize(Z):
    seg = np.linalg.norm(np.diff(Z, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], len(Z))
    return np.stack([np.interp(t, s, Z[:, k]) for k in range(Z.shape[1])], axis=1)


def fixed_circle_search(surface, gammas, circle=None, psi=None, involution=None, eps=None,
                        nodes=200, stagnation=1e-8, window=50, max_iter=20000, tol=1e-8):
    """Mountain pass for H on triples lying on a fixed circle of an involution.

    Paths of ``nodes`` points join ``p^eps`` to ``p^(L/2 - eps)`` in lifted
    angle coordinates; every path crosses the barrier ``w_3 - w_1 = L/2``.
    The lowest node is pushed up along the component of the restricted
    gradient normal to the path (with a short smoothing window around it)
    and the path is reparametrised by arclength.  When the path minimum has
    improved by less than ``stagnation`` over ``window`` iterations the
    lowest node is refined by Newton's method on the circle and the result
    is checked against the full gradient.
    """
    g = np.asarray(gammas, dtype=float).reshape(-1)
    _check_sign_pattern(g)
    psi = psi or PsiSpec.kirchhoff_routh()
    sys = VortexSystem(surface, g, psi)
    inv = involution or default_involution(surface)
    circle = circle or inv.fixed_circles[0]
    _check_invariant(sys, [inv.apply])
    L = float(circle.length)
    eps = L / 20.0 if eps is None else float(eps)
    if not 0 < eps < L / 4:
        raise InvalidInputError("eps must lie in (0, L/4)")
    A = np.array([-eps, 0.0, eps])
    B = np.array([-L / 2 + eps, 0.0, L / 2 - eps])
    Z = A + np.linspace(0.0, 1.0, nodes)[:, None] * (B - A)
    h = _circle_h(sys, circle, Z)
    best = [float(h[1:-1].min())]
    eta = 1e-2 * L
    it = 0
    kern = np.exp(-0.5 * (np.arange(-4, 5) / 2.0) ** 2)
    while it < max_iter:
        it += 1
        k = 1 + int(np.argmin(h[1:-1]))
        lo, hi = max(1, k - 4), min(nodes - 1, k + 5)
        sl = slice(lo, hi)
        wts = kern[lo - k + 4: hi - k + 4]
        gr = _circle_grad(sys, circle, Z[sl])
        tan = Z[lo + 1: hi + 1] - Z[lo - 1: hi - 1]
        tan /= np.linalg.norm(tan, axis=1, keepdims=True)
        gperp = gr - np.einsum("ki,ki->k", gr, tan)[:, None] * tan
        Zt = Z.copy()
        step = gperp / max(np.linalg.norm(gperp, axis=1).max(), 1e-300)
        Zt[sl] = Z[sl] + eta * wts[:, None] * step
        Zt = _reparametrize(Zt)
        ok = np.all(np.diff(Zt, axis=1) > 0, axis=1) & (Zt[:, 2] - Zt[:, 0] < L)
        try:
            ht = _circle_h(sys, circle, Zt) if ok.all() else None
        except SingularityError:
            ht = None
        if ht is not None and ht[1:-1].min() > h[1:-1].min():
            Z, h = Zt, ht
            eta = min(eta * 1.5, 0.05 * L)
        else:
            eta *= 0.5
        best.append(float(h[1:-1].min()))
        if len(best) > window and best[-1] - best[-1 - window] < stagnation:
            break
        if eta < 1e-14 * L:
            break
    k = 1 + int(np.argmin(h[1:-1]))
    level = float(h[k])
    w0 = Z[k]
    drop = 1 if sys.symmetry_dim > 0 else 0

    def cgrad(z, base):
        return _circle_grad(sys, circle, z)

    def move(z, delta):
        return z + delta

    w, rgn, nit = _newton(cgrad, move, w0, drop, tol=min(tol, 1e-10) * 1e-1)
    x = circle_configuration(circle, w)
    full = float(grad_norm(sys, x))
    rep = build_report(sys, x, converged=full < tol, iterations=nit,
                       message="" if full < tol else "NonConvergence: full gradient above tolerance")
    d13 = float(distance(surface, x[0], x[2]))
    return SymmetricResult(
        report=rep,
        reduced_grad_norm=rgn,
        level=level,
        details={
            "lifted_angles": w.tolist(),
            "path_iterations": it,
            "path_min_history_tail": best[-5:],
            "mountain_pass_estimate": w0.tolist(),
            "eps": eps,
            "circle_length": L,
            "barrier_distance_13": d13,
            "full_grad_norm": full,
        },
    )


# -- reflection-symmetric minimisation ----------------------------------------


def reflection_search(surface, gammas, involution=None, psi=None, starts=24, seed=0,
                      max_iter=3000, tol=1e-8):
    """Minimise H over ``{p_2 on a fixed circle, p_3 = tau(p_1)}`` (``G_1 = G_3``).

    H tends to infinity at the boundary of this set, so a multistart descent
    from ``starts`` seeded initial points finds local minima.  The best is
    polished by Newton's method in the reduced coordinates and verified
    with the full gradient.  Starts are merged deterministically by
    ``(H, lexicographic state)``.
    """
    g = np.asarray(gammas, dtype=float).reshape(-1)
    _check_sign_pattern(g)
    if g[0] != g[2]:
        raise InvalidInputError("reflection search needs G_1 = G_3")
    psi = psi or PsiSpec.kirchhoff_routh()
    sys = VortexSystem(surface, g, psi)
    inv = involution or default_involution(surface)
    M = inv.matrix

    def sigma(x):
        return np.stack([inv.apply(x[..., 2, :]), inv.apply(x[..., 1, :]),
                         inv.apply(x[..., 0, :])], axis=-2)

    _check_invariant(sys, [sigma])
    rng = np.random.default_rng(seed)
    circles = inv.fixed_circles
    # state: p1 (dim), circle index, t2
    P1 = random_point(surface, rng, starts)
    fixed_gap = np.abs(np.einsum("ij,bj->bi", M, P1) - P1).max(axis=1)
    while np.any(fixed_gap < 1e-2):
        bad = fixed_gap < 1e-2
        P1[bad] = random_point(surface, rng, int(bad.sum()))
        fixed_gap = np.abs(np.einsum("ij,bj->bi", M, P1) - P1).max(axis=1)
    C = rng.integers(0, len(circles), starts)
    T2 = rng.random(starts) * np.array([c.length for c in circles])[C]

    origins = np.array([c.origin for c in circles])
    dirs = np.array([c.direction for c in circles])

    def circ(c, t2, deriv=False):
        c = np.asarray(c)
        t = np.asarray(t2, dtype=float)[..., None]
        O, D = origins[c], dirs[c]
        if surface.is_torus:
            return D.copy() if deriv else canonical(surface, O + t * D)
        R = surface.radius
        if deriv:
            return -np.sin(t / R) * O + np.cos(t / R) * D
        return np.cos(t / R) * O + np.sin(t / R) * D

    def full(p1, c, t2):
        return np.stack([p1, circ(c, t2), inv.apply(p1)], axis=-2)

    def reduced(p1, c, t2):
        x = full(p1, c, t2)
        h, d = eval_H_and_differential(sys, x)
        g1 = d[..., 0, :] + d[..., 2, :] @ M  # M is symmetric
        g2 = np.einsum("...i,...i->...", d[..., 1, :], circ(c, t2, deriv=True))
        return h, g1, g2

    def move_p1(p1, v):
        if surface.is_torus:
            return canonical(surface, p1 + v)
        return _retract(surface, p1, v)

    h, g1, g2 = reduced(P1, C, T2)
    eta = np.full(starts, 1e-2)
    active = np.ones(starts, dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        gn = np.sqrt((g1[idx] ** 2).sum(-1) + g2[idx] ** 2)
        e = eta[idx]
        newp = move_p1(P1[idx], -e[:, None] * g1[idx])
        newt = T2[idx] - e * g2[idx]
        try:
            hn, g1n, g2n = reduced(newp, C[idx], newt)
        except SingularityError:
            hn = np.full(idx.size, np.inf)
            g1n, g2n = g1[idx], g2[idx]
        ok = np.isfinite(hn) & (hn <= h[idx] - 1e-4 * e * gn ** 2)
        acc = idx[ok]
        P1[acc], T2[acc], h[acc] = newp[ok], newt[ok], hn[ok]
        g1[acc], g2[acc] = g1n[ok], g2n[ok]
        eta[acc] = np.minimum(eta[acc] * 1.5, 1.0)
        eta[idx[~ok]] *= 0.5
        gn_new = np.sqrt((g1[idx] ** 2).sum(-1) + g2[idx] ** 2)
        active[idx[(gn_new < 1e-6) | (eta[idx] < 1e-16)]] = False
    # deterministic merge: lowest H, then lexicographic state
    keys = [(round(float(h[i]), 10), tuple(np.round(P1[i], 10)), int(C[i]), round(float(T2[i]), 10))
            for i in range(starts)]
    best = min(range(starts), key=lambda i: keys[i])
    ci = int(C[best])
    drop = 1 if sys.symmetry_dim > 0 else 0

    def cgrad(z, base):
        p1, t2 = z[:-1], z[-1]
        _, r1, r2 = reduced(p1[None], np.array([ci]), np.array([t2]))
        E = tangent_basis(surface, base[:-1])
        return np.concatenate([E @ r1[0], [r2[0]]])

    def move(z, delta):
        E = tangent_basis(surface, z[:-1])
        return np.concatenate([move_p1(z[:-1], delta[:2] @ E), [z[-1] + delta[2]]])

    z0 = np.concatenate([P1[best], [T2[best]]])
    z, rgn, nit = _newton(cgrad, move, z0, drop, tol=min(tol, 1e-10) * 1e-1)
    x = full(z[:-1][None], np.array([ci]), np.array([z[-1]]))[0]
    fullgn = float(grad_norm(sys, x))
    rep = build_report(sys, x, converged=fullgn < tol, iterations=nit,
                       message="" if fullgn < tol else "NonConvergence: full gradient above tolerance")
    return SymmetricResult(
        report=rep,
        reduced_grad_norm=rgn,
        level=float(eval_H(sys, x)),
        details={
            "starts": starts,
            "seed": seed,
            "start_minima": sorted(float(v) for v in h),
            "fixed_circle": ci,
            "full_grad_norm": fullgn,
            "p2_on_fixed_set": float(np.abs(inv.apply(x[1]) - x[1]).max()),
            "p3_mirror_residual": float(np.abs(inv.apply(x[0]) - x[2]).max()),
        },
    )
