"""Critical points of H: ascent flow, Newton refinement and the torus minimax.

The minimax search starts from the family

    gamma(s_1, .., s_N) = ([s_1, t_1], .., [s_N, t_N])     0 < t_1 < .. < t_N < 1

of configurations on horizontal circles of the torus, sampled on an ``M^N``
grid of the parameter torus, and deforms it by the gradient-ascent flow of H.
The flow never lowers H, so the minimum of H over the deformed family is a
nondecreasing lower bound for the minimax level, and the grid point that
attains it slows down near a critical point.  That point is the witness.

Only the torus is computed on.  For the Klein bottle the analogous family
uses ``gamma_K(s) = ([s_1, t_1], .., [s_N, t_N])`` in the fundamental domain
``[0, 1] x [0, 1/2]`` with the glide identification ``(x, y) ~ (x + 1/2, -y)``
and linking is detected through the first coordinates in ``R/Z``; for a
surface of higher genus the torus family is transported into a handle along
a degree-one collapse ``rho`` onto the torus.  Neither has a Green function
evaluator here, so both stay documentation.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CapacityError,
    ConditionFailure,
    InvalidInputError,
    PreconditionError,
    SingularityError,
)
from .geometry import SurfaceKind, _retract, canonical, distance, min_image, tangent_basis
from .hamiltonian import (
    PsiSpec,
    VortexSystem,
    ZERO_MODE_REL,
    _config,
    _metric_weight,
    _norm_from_differential,
    build_report,
    eval_H_and_differential,
    eval_Psi,
    grad_norm,
    hess_H,
    min_pair_distance,
)
from .vorticity import gamma_condition

__all__ = [
    "FlowTermination",
    "FlowTrace",
    "FlowOptions",
    "gradient_flow",
    "CollisionReport",
    "collision_bound_check",
    "newton_refine",
    "LinkingFamily",
    "MinimaxResult",
    "linking_minimax",
    "winding_matrix",
    "stability_probe",
    "distance_mod_symmetry",
]


class FlowTermination(str, enum.Enum):
    CONVERGED = "Converged"
    MAX_STEPS = "MaxSteps"
    COLLISION = "CollisionApproach"
    DIVERGED = "Diverged"
    STALLED = "Stalled"


@dataclass
class FlowOptions:
    max_steps: int = 10000
    step0: float = 1e-2
    grad_tol: float = 1e-8
    collision_dist: float = 1e-3
    max_step: float = 1.0
    # a single step moves no vortex farther than this fraction of the
    # current minimum pair distance, so pairs cannot tunnel through each other
    cap: float = 0.1
    armijo: float = 1e-4

    def to_dict(self):
        return dict(self.__dict__)


@dataclass
class FlowTrace:
    times: np.ndarray
    configs: np.ndarray
    h_values: np.ndarray
    grad_norms: np.ndarray
    min_pair_dist: np.ndarray
    termination: FlowTermination
    rejected: int = 0

    @property
    def final(self):
        return self.configs[-1]

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "h_values": self.h_values.tolist(),
            "grad_norms": self.grad_norms.tolist(),
            "min_pair_dist": self.min_pair_dist.tolist(),
            "termination": self.termination.value,
            "rejected": self.rejected,
            "final": self.final.tolist(),
        }


def _ascent_direction(sys, x, d):
    wt = _metric_weight(sys, x)
    return d if wt is None else d * wt[..., None]


def _move(sys, x, v):
    s = sys.surface
    if s.is_torus:
        return canonical(s, x + v)
    return _retract(s, x, v)


class _Ascent:
    """Vectorised backtracking ascent on a batch of configurations.

    Every configuration carries its own step size; rows never interact, so
    results do not depend on how the batch is split.
    """

    def __init__(self, sys, x, opts):
        self.sys = sys
        self.opts = opts
        self.x = np.array(x, dtype=float)
        self.h, self.d = eval_H_and_differential(sys, self.x)
        self.dmin = min_pair_distance(sys, self.x)
        self.gn = _norm_from_differential(sys, self.x, self.d)
        self.eta = np.full(self.x.shape[0], float(opts.step0))
        self.status = np.zeros(self.x.shape[0], dtype=np.int8)  # 0 active
        self.rejected = np.zeros(self.x.shape[0], dtype=np.int64)
        self.time = np.zeros(self.x.shape[0])
        self._update_status(np.arange(self.x.shape[0]))

    def _update_status(self, idx):
        o = self.opts
        st = self.status
        bad = ~np.isfinite(self.h[idx]) | ~np.isfinite(self.gn[idx])
        st[idx[self.gn[idx] < o.grad_tol]] = 1
        st[idx[self.dmin[idx] < o.collision_dist]] = 2
        st[idx[bad]] = 3
        st[idx[(st[idx] == 0) & (self.eta[idx] < 1e-18)]] = 4

    def step(self, idx):
        """One trial step for the rows ``idx``; returns the accepted mask."""
        o = self.opts
        sys = self.sys
        idx = idx[self.status[idx] == 0]
        if idx.size == 0:
            return idx, np.zeros(0, dtype=bool)
        x = self.x[idx]
        d = self.d[idx]
        g = _ascent_direction(sys, x, d)
        gmax = np.linalg.norm(g, axis=-1).max(axis=-1)
        eta = np.minimum(self.eta[idx], o.cap * self.dmin[idx] / np.maximum(gmax, 1e-300))
        y = _move(sys, x, eta[:, None, None] * g)
        try:
            hy, dy = eval_H_and_differential(sys, y)
            dmy = min_pair_distance(sys, y)
        except SingularityError:
            hy = np.full(idx.size, -np.inf)
            dy = np.zeros_like(d)
            dmy = np.zeros(idx.size)
        slope = np.einsum("bni,bni->b", d, g)
        ok = np.isfinite(hy) & (hy > self.h[idx]) & (hy - self.h[idx] >= o.armijo * eta * slope)
        acc = idx[ok]
        self.x[acc] = y[ok]
        self.h[acc] = hy[ok]
        self.d[acc] = dy[ok]
        self.dmin[acc] = dmy[ok]
        self.gn[acc] = _norm_from_differential(sys, y[ok], dy[ok])
        self.time[acc] += eta[ok]
        self.eta[acc] = np.minimum(2.0 * eta[ok], o.max_step)
        rej = idx[~ok]
        self.eta[rej] = 0.25 * eta[~ok]
        self.rejected[rej] += 1
        self._update_status(idx)
        return idx, ok


_STATUS = {
    1: FlowTermination.CONVERGED,
    2: FlowTermination.COLLISION,
    3: FlowTermination.DIVERGED,
    4: FlowTermination.STALLED,
}


def gradient_flow(sys, p0, opts=None, **kw):
    """Ascent ``p <- retract(p, eta grad H)`` with backtracking.

    Stops with ``Converged`` when ``|grad H| < grad_tol``, ``CollisionApproach``
    when two vortices come closer than ``collision_dist``, ``Diverged`` on
    non-finite values, ``Stalled`` if the step size collapses and
    ``MaxSteps`` otherwise.  Only accepted steps are recorded, so
    ``h_values`` is strictly increasing.
    """
    opts = opts or FlowOptions(**kw)
    x0 = canonical(sys.surface, _config(sys, p0))
    if x0.ndim != 2:
        raise InvalidInputError("gradient_flow takes a single configuration")
    if min_pair_distance(sys, x0) < 1e-12:
        raise InvalidInputError("initial configuration has coincident vortices")
    a = _Ascent(sys, x0[None], opts)
    rows = np.array([0])
    rec = [(0.0, a.x[0].copy(), a.h[0], a.gn[0], a.dmin[0])]
    for _ in range(opts.max_steps):
        if a.status[0] != 0:
            break
        _, ok = a.step(rows)
        if ok.size and ok[0]:
            rec.append((a.time[0], a.x[0].copy(), a.h[0], a.gn[0], a.dmin[0]))
    term = _STATUS.get(int(a.status[0]), FlowTermination.MAX_STEPS)
    t, c, h, g, dm = zip(*rec)
    return FlowTrace(np.array(t), np.array(c), np.array(h), np.array(g), np.array(dm),
                     term, int(a.rejected[0]))


# -- collision law ---------------------------------------------------------


@dataclass
class CollisionReport:
    cluster: tuple  # 1-based
    slope: float
    intercept: float
    expected_slope: float
    within_tolerance: bool
    condition_holds: bool
    flag: str
    radii: np.ndarray
    grad_norms: np.ndarray

    def to_dict(self):
        return {
            "cluster": list(self.cluster),
            "slope": self.slope,
            "expected_slope": self.expected_slope,
            "within_tolerance": self.within_tolerance,
            "condition_holds": self.condition_holds,
            "flag": self.flag,
            "samples": int(len(self.radii)),
        }


def _cluster(s, x, ratio=30.0):
    n = x.shape[0]
    D = np.array([[distance(s, x[i], x[j]) if i != j else 0.0 for j in range(n)]
                  for i in range(n)])
    iu = np.triu_indices(n, 1)
    k = np.argmin(D[iu])
    i0, j0 = iu[0][k], iu[1][k]
    thresh = ratio * D[i0, j0]
    members = {i0, j0}
    grew = True
    while grew:
        grew = False
        for i in range(n):
            if i not in members and any(D[i, j] < thresh for j in members):
                members.add(i)
                grew = True
    return tuple(sorted(members))


def cluster_radius(s, x, members):
    """``sqrt(sum_I d(p_i, c)^2)`` about the cluster centroid ``c``."""
    x = np.asarray(x, dtype=float)
    pts = x[..., list(members), :]
    if s.is_torus:
        off = min_image(s, pts - pts[..., :1, :])
        off = off - off.mean(axis=-2, keepdims=True)
        return np.sqrt(np.einsum("...ki,...ki->...", off, off))
    c = pts.mean(axis=-2)
    c = c / np.linalg.norm(c, axis=-1, keepdims=True)
    d = distance(s, pts, c[..., None, :])
    return np.sqrt((d * d).sum(axis=-1))


def collision_bound_check(sys, trace, decades=2.0, tol=0.1):
    """Fit ``log |grad H|`` against ``log r`` over the final approach.

    ``r`` is the radius of the colliding cluster, found from the final
    distances.  Near a collision of a non-resonant cluster the gradient
    blows up like ``1/r``, so the expected slope is ``-1``.  When the
    strengths of the cluster are resonant the bound may fail and the report
    says so.
    """
    if trace.termination is not FlowTermination.COLLISION:
        raise PreconditionError("trace did not end in a collision approach")
    members = _cluster(sys.surface, trace.final)
    r = cluster_radius(sys.surface, trace.configs, members)
    gn = np.asarray(trace.grad_norms)
    rf = r[-1]
    sel = (r > 0) & (r <= rf * 10.0 ** decades)
    if sel.sum() < 5:
        sel = np.zeros_like(sel)
        sel[-min(len(r), 10):] = True
    slope, icpt = np.polyfit(np.log(r[sel]), np.log(gn[sel]), 1)
    sub = sys.gammas[list(members)]
    holds = len(members) < 2 or gamma_condition(sub).passed
    ident = "{" + ",".join(str(i + 1) for i in members) + "}"
    flag = "" if holds else f"condition fails for I={ident}"
    return CollisionReport(
        cluster=tuple(i + 1 for i in members),
        slope=float(slope),
        intercept=float(icpt),
        expected_slope=-1.0,
        within_tolerance=bool(abs(slope + 1.0) <= tol),
        condition_holds=bool(holds),
        flag=flag,
        radii=r[sel],
        grad_norms=gn[sel],
    )


# -- Newton ----------------------------------------------------------------


def _coords(sys, x, d):
    E = tangent_basis(sys.surface, x)
    return np.einsum("nad,nd->na", E, d).reshape(-1), E


def newton_refine(sys, p_near, tol=1e-10, max_iter=40, gate=1e-2, zero_rel=ZERO_MODE_REL,
                  drop=None):
    """Damped Newton iteration on ``dH = 0``.

    The step solves the Hessian system with the ``drop`` smallest-magnitude
    eigenmodes removed (by default the expected symmetry modes, plus any mode
    that is numerically singular).  Returns an :class:`EquilibriumReport`;
    ``converged`` is False when ``|grad H| < tol`` was not reached.
    """
    s = sys.surface
    x = canonical(s, _config(sys, p_near)).copy()
    if x.ndim != 2:
        raise InvalidInputError("newton_refine takes a single configuration")
    gn = grad_norm(sys, x)
    if not gn < gate:
        raise PreconditionError(f"start is not near-critical: |grad H| = {gn:.3e} >= {gate:.1e}")
    drop = sys.symmetry_dim if drop is None else int(drop)
    it = 0
    msg = ""
    while gn >= tol and it < max_iter:
        it += 1
        _, d = eval_H_and_differential(sys, x)
        b, E = _coords(sys, x, d)
        A = hess_H(sys, x)
        lam, V = np.linalg.eigh(A)
        order = np.argsort(np.abs(lam))
        keep = np.ones(lam.size, dtype=bool)
        keep[order[:drop]] = False
        keep &= np.abs(lam) > 1e-10 * np.abs(lam).max()
        delta = -V[:, keep] @ ((V[:, keep].T @ b) / lam[keep])
        v = np.einsum("na,nad->nd", delta.reshape(sys.n, 2), E)
        t = 1.0
        for _ in range(30):
            y = _move(sys, x, t * v)
            try:
                gy = grad_norm(sys, y)
            except SingularityError:
                gy = np.inf
            if gy < gn:
                break
            t *= 0.5
        else:
            msg = "line search failed"
            break
        x, gn = y, gy
    conv = bool(gn < tol)
    if not conv and not msg:
        msg = "iteration limit"
    return build_report(sys, x, zero_rel=zero_rel, converged=conv, iterations=it,
                        message="" if conv else "NonConvergence: " + msg)


def distance_mod_symmetry(sys, p, q):
    """Configuration distance after quotienting the isometries that fix ``Psi``.

    Flat torus: common translations are removed.  Sphere: the best rotation
    (Kabsch) is removed.  Otherwise the plain configuration distance.
    """
    s = sys.surface
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    if s.kind is SurfaceKind.FLAT_TORUS:
        delta = min_image(s, q - p)
        rel = min_image(s, delta - delta[:1])
        rel = rel - rel.mean(axis=0)
        return float(np.sqrt((rel ** 2).sum()))
    if s.kind is SurfaceKind.ROUND_SPHERE:
        U, _, Vt = np.linalg.svd(q.T @ p)
        D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
        R = U @ D @ Vt
        return float(np.sqrt((distance(s, p @ R.T, q) ** 2).sum()))
    return float(np.sqrt((distance(s, p, q) ** 2).sum()))


# -- linking minimax on the torus -----------------------------------------

DEFAULT_GRID = {2: 24, 3: 24, 4: 10}
MAX_FAMILY = 200_000
CHUNK = 512


@dataclass
class LinkingFamily:
    latitudes: np.ndarray
    grid: int
    configs: np.ndarray  # (M**N, N, 2)

    @classmethod
    def canonical(cls, surface, n, grid, latitudes=None):
        if latitudes is None:
            latitudes = (np.arange(n) + 0.5) / n
        lat = np.asarray(latitudes, dtype=float)
        if lat.shape != (n,) or not (np.all(np.diff(lat) > 0) and lat[0] > 0 and lat[-1] < 1):
            raise InvalidInputError("latitudes must satisfy 0 < t_1 < .. < t_N < 1")
        axes = np.meshgrid(*([np.arange(grid) / grid] * n), indexing="ij")
        s = np.stack([a.reshape(-1) for a in axes], axis=-1)  # (M^N, N)
        frac = np.stack([s, np.broadcast_to(lat, s.shape)], axis=-1)
        return cls(lat, int(grid), frac @ surface.lattice)

    def parameters(self):
        n = self.latitudes.size
        axes = np.meshgrid(*([np.arange(self.grid)] * n), indexing="ij")
        return np.stack([a.reshape(-1) for a in axes], axis=-1)


def winding_matrix(surface, family, resolved=0.25):
    """Degree data of the first-coordinate projection of the family.

    For every parameter axis ``j`` and every grid loop in that direction the
    wrapped increments of the first fractional coordinate of each ``p_i``
    are summed.  A loop counts as resolved when no increment exceeds
    ``resolved``; winding numbers are homotopy invariant, so every resolved
    loop must give the same column ``W[:, j]``.

    Returns ``(W, agreement, resolved_fraction)`` with ``W`` the most common
    winding matrix column by column.  The undeformed family gives the
    identity with full agreement.
    """
    n = family.latitudes.size
    M = family.grid
    s1 = surface.frac(family.configs)[..., 0].reshape((M,) * n + (n,))
    W = np.zeros((n, n))
    agree, frac = [], []
    for j in range(n):
        inc = np.roll(s1, -1, axis=j) - s1
        inc = inc - np.round(inc)
        ok = (np.abs(inc) <= resolved).all(axis=j).all(axis=-1).reshape(-1)
        tot = np.round(inc.sum(axis=j)).astype(np.int64).reshape(-1, n)
        frac.append(ok.mean())
        if not ok.any():
            agree.append(0.0)
            W[:, j] = np.nan
            continue
        cols, counts = np.unique(tot[ok], axis=0, return_counts=True)
        W[:, j] = cols[np.argmax(counts)]
        agree.append(counts.max() / counts.sum())
    return W, float(min(agree)), float(min(frac))


@dataclass
class MinimaxResult:
    c_star_lower: float
    witness: np.ndarray
    report: object
    termination: str
    family_trace: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "c_star_lower": self.c_star_lower,
            "witness": np.asarray(self.witness).tolist(),
            "termination": self.termination,
            "report": self.report.to_dict() if self.report is not None else None,
            "family_trace": self.family_trace,
        }


def _argmin_tie(h, tol=1e-9):
    m = np.min(h)
    return int(np.flatnonzero(h <= m + tol)[0])


def linking_minimax(surface, gammas, psi=None, grid=None, latitudes=None, flow=None,
                    steps_per_sweep=10, max_sweeps=400, min_sweeps=5, level_gap=0.5, gate=1e-2, grad_tol=1e-8,
                    threads=1, log=None):
    """Deform the linking family by the ascent flow and extract a witness.

    After each sweep (``steps_per_sweep`` ascent steps for every active grid
    configuration) the minimum of H over the family is logged as
    ``c_star_lower``.  A configuration rests during a sweep once its value
    exceeds the family minimum by ``level_gap``.  From sweep ``min_sweeps`` on, once the minimising grid point has ``|grad H| < gate``
    it is handed to :func:`newton_refine`; the run ends ``Converged`` when
    the refined point satisfies ``|grad H| < grad_tol`` both with the
    default and with the tighter Green-function truncation.

    Refuses with :class:`ConditionFailure` for resonant strengths.
    """
    if not surface.is_torus:
        raise InvalidInputError("the linking construction needs a torus")
    psi = psi or PsiSpec.kirchhoff_routh()
    sys = VortexSystem(surface, gammas, psi)
    n = sys.n
    chk = gamma_condition(sys.gammas)
    if not chk.passed:
        raise ConditionFailure(
            f"strengths are resonant on subset {set(chk.worst_subset)}: S = {chk.worst_value:g}",
            chk.worst_subset,
            chk.worst_value,
        )
    if n > 4:
        raise CapacityError("the grid family supports N <= 4")
    M = int(grid or DEFAULT_GRID[n])
    if M < 2 or M ** n > MAX_FAMILY:
        raise CapacityError(f"grid {M}^{n} exceeds the family size limit {MAX_FAMILY}")
    opts = flow or FlowOptions()
    fam = LinkingFamily.canonical(surface, n, M, latitudes)
    asc = _Ascent(sys, fam.configs, opts)
    B = asc.x.shape[0]
    chunks = [np.arange(i, min(i + CHUNK, B)) for i in range(0, B, CHUNK)]
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None

    def run_chunk(idx, ceiling):
        for _ in range(steps_per_sweep):
            live = idx[(asc.status[idx] == 0) & (asc.h[idx] < ceiling)]
            if live.size == 0:
                break
            asc.step(live)

    history = []
    attempts = []
    report = None
    term = "MaxSweeps"
    witness = None
    try:
        for sweep in range(1, max_sweeps + 1):
            # stopping time: a configuration rests once it is level_gap above
            # the current family minimum, so the family stays resolved
            ceiling = float(asc.h.min()) + level_gap
            if pool is None:
                for c in chunks:
                    run_chunk(c, ceiling)
            else:
                list(pool.map(run_chunk, chunks, [ceiling] * len(chunks)))
            fam.configs = asc.x
            c_low = float(asc.h.min())
            k = _argmin_tie(asc.h)
            W, agree, resolved = winding_matrix(surface, fam)
            rec = {
                "sweep": sweep,
                "c_star_lower": c_low,
                "argmin": int(k),
                "argmin_grad_norm": float(asc.gn[k]),
                "active": int((asc.status == 0).sum()),
                "collided": int((asc.status == 2).sum()),
                "degree": None if np.isnan(W).any() else int(round(np.linalg.det(W))),
                "winding_agreement": agree,
                "winding_resolved": resolved,
            }
            history.append(rec)
            if sweep >= min_sweeps and asc.gn[k] < gate and k not in attempts:
                attempts.append(k)
                rep = newton_refine(sys, asc.x[k], tol=min(1e-10, grad_tol))
                tight = grad_norm(sys, rep.point, tight=True)
                rec["newton"] = {"converged": rep.converged, "grad_norm": rep.grad_norm,
                                 "tight_grad_norm": float(tight)}
                if rep.converged and rep.grad_norm < grad_tol and tight < grad_tol:
                    report, witness, term = rep, rep.point, "Converged"
            if log is not None:
                log(dict(rec))
            if term == "Converged":
                break
            if not np.any(asc.status == 0):
                break
    finally:
        if pool is not None:
            pool.shutdown()
    if witness is None:
        k = _argmin_tie(asc.h)
        witness = asc.x[k]
    lows = [r["c_star_lower"] for r in history]
    trace = {
        "grid": M,
        "latitudes": fam.latitudes.tolist(),
        "sweeps": len(history),
        "steps_per_sweep": steps_per_sweep,
        "c_star_lower_history": lows,
        "monotone": bool(np.all(np.diff(lows) >= -1e-12)) if lows else True,
        "degree_history": [r["degree"] for r in history],
        "newton_attempts": len(attempts),
        "collided": int((asc.status == 2).sum()),
    }
    return MinimaxResult(
        c_star_lower=lows[-1] if lows else float(asc.h.min()),
        witness=np.asarray(witness),
        report=report,
        termination=term,
        family_trace=trace,
    )


def stability_probe(sys, witness, eps=1e-3, tol=1e-10):
    """Re-solve after perturbing ``Psi`` by a smooth field of C^1 size ``eps``.

    The perturbation is ``eps * f / |f|_C1`` with
    ``f(p) = sum_i sin(2 pi s1_i) cos(2 pi s2_i)`` in the fractional
    coordinates of the lattice (torus) or ``sum_i z_i x_i`` on the sphere.
    Returns ``(report, distance)`` where the distance is measured modulo the
    symmetries of the unperturbed problem.
    """
    s = sys.surface
    base = sys.psi
    if s.is_torus:
        Linv = s.inv_lattice
        dual = Linv.T
        # |f|_C1 per vortex: max |f| = 1 and max |grad f| = 2 pi max|dual|
        scale = eps / max(1.0, 2.0 * np.pi * float(np.linalg.norm(dual, 2)))

        def f(x):
            t = np.asarray(x) @ Linv
            return scale * (np.sin(2 * np.pi * t[..., 0]) * np.cos(2 * np.pi * t[..., 1])).sum(-1)

        def df(x):
            t = np.asarray(x) @ Linv
            a = 2 * np.pi * np.cos(2 * np.pi * t[..., 0]) * np.cos(2 * np.pi * t[..., 1])
            b = -2 * np.pi * np.sin(2 * np.pi * t[..., 0]) * np.sin(2 * np.pi * t[..., 1])
            return scale * (a[..., None] * dual[0] + b[..., None] * dual[1])
    else:
        R = s.radius
        scale = eps / max(1.0, 1.0 / R)

        def f(x):
            x = np.asarray(x)
            return scale * (x[..., 2] * x[..., 0]).sum(-1)

        def df(x):
            x = np.asarray(x)
            g = np.stack([x[..., 2], np.zeros_like(x[..., 0]), x[..., 0]], axis=-1) / R
            return scale * (g - np.einsum("...i,...i->...", g, x)[..., None] * x)

    def total(x):
        return eval_Psi(base, s, x, sys.gammas) + f(x)

    from .hamiltonian import _psi_differential

    def total_grad(x):
        return _psi_differential(base, s, np.asarray(x, float), sys.gammas) + df(x)

    pert = sys.with_psi(PsiSpec.custom(total, total_grad, invariant=False))
    rep = newton_refine(pert, witness, tol=tol, drop=0)
    return rep, distance_mod_symmetry(sys, witness, rep.point)
