"""Point-vortex motion ``p' = X_H(p)``.

With the symplectic form ``omega = sum_i G_i pi_i^* Omega`` the Hamiltonian
vector field satisfies ``omega(., X_H) = dH``, which gives per vortex

    v_i = J grad_i H / G_i

with ``J`` the quarter turn of the oriented tangent plane: ``(a, b) -> (-b, a)``
in the torus chart and ``v -> p x v`` on the sphere (outward normal).  With
this orientation a positive vortex carries its neighbours clockwise in the
chart.  Flipping every strength reverses the motion, since H is quadratic in
the strengths.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularityError
from .geometry import canonical, rotate_tangent
from .hamiltonian import _config, eval_H, grad_H, min_pair_distance

__all__ = ["Termination", "Trajectory", "vortex_velocity", "integrate"]


class Termination(str, enum.Enum):
    COMPLETED = "Completed"
    COLLISION = "CollisionApproach"


@dataclass
class Trajectory:
    times: np.ndarray
    configs: np.ndarray
    h_values: np.ndarray
    min_pair_dist: np.ndarray
    termination: Termination
    max_fixed_point_iterations: int = 0

    @property
    def h_drift(self):
        return float(np.abs(self.h_values - self.h_values[0]).max())

    def to_dict(self):
        return {
            "times": self.times.tolist(),
            "h_values": self.h_values.tolist(),
            "min_pair_dist": self.min_pair_dist.tolist(),
            "termination": self.termination.value,
            "h_drift": self.h_drift,
            "final": self.configs[-1].tolist(),
        }


def vortex_velocity(sys, p):
    """Velocity of every vortex, same shape as ``p`` (physical units)."""
    x = _config(sys, p)
    g = grad_H(sys, x)
    return rotate_tangent(sys.surface, x, g) / sys.gammas[:, None]


def _field(sys, y):
    """Ambient vector field used by the integrator.

    On the sphere the rate of change of the unit position is ``v / R`` and is
    evaluated as ``y x grad / (G R)`` at the raw (not normalised) argument, so
    that ``y . f(y) = 0`` and the implicit midpoint rule keeps ``|y|`` fixed.
    """
    s = sys.surface
    if s.is_torus:
        return vortex_velocity(sys, canonical(s, y))
    yn = y / np.linalg.norm(y, axis=-1, keepdims=True)
    g = grad_H(sys, yn)
    return np.cross(y, g) / (sys.gammas[:, None] * s.radius)


def integrate(sys, p0, T, dt, collision_dist=1e-3, record_every=1, fp_tol=1e-14, fp_max=100):
    """Fixed-step implicit midpoint integration up to time ``T``.

    Each step solves ``y1 = y0 + dt f((y0 + y1) / 2)`` by fixed-point
    iteration; torus positions are integrated unwrapped and reduced when
    recorded, sphere positions are renormalised after every step.  Stops
    early with ``CollisionApproach`` when two vortices come closer than
    ``collision_dist``.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if not T >= 0:
        raise InvalidInputError("T must be nonnegative")
    s = sys.surface
    y = canonical(s, _config(sys, p0)).copy()
    if y.ndim != 2:
        raise InvalidInputError("integrate takes a single configuration")
    if min_pair_distance(sys, y) < 1e-12:
        raise InvalidInputError("initial configuration has coincident vortices")
    nsteps = int(round(T / dt))
    times, confs, hs, dms = [0.0], [y.copy()], [eval_H(sys, y)], [min_pair_distance(sys, y)]
    term = Termination.COMPLETED
    worst = 0
    fm = None
    for n in range(1, nsteps + 1):
        # previous midpoint velocity is a first-order predictor
        if fm is None:
            fm = _field(sys, y)
        y1 = y + dt * fm
        for k in range(fp_max):
            try:
                fm = _field(sys, 0.5 * (y + y1))
                y2 = y + dt * fm
            except SingularityError:
                term = Termination.COLLISION
                break
            done = np.abs(y2 - y1).max() <= fp_tol * max(1.0, np.abs(y2).max())
            y1 = y2
            if done:
                break
        worst = max(worst, k + 1)
        if term is Termination.COLLISION:
            break
        y = y1 if s.is_torus else y1 / np.linalg.norm(y1, axis=-1, keepdims=True)
        dmin = float(min_pair_distance(sys, canonical(s, y)))
        last = n == nsteps
        if n % record_every == 0 or last or dmin < collision_dist:
            c = canonical(s, y)
            times.append(n * dt)
            confs.append(c)
            hs.append(eval_H(sys, c))
            dms.append(dmin)
        if dmin < collision_dist:
            term = Termination.COLLISION
            break
    return Trajectory(np.array(times), np.array(confs), np.array(hs), np.array(dms), term, worst)
