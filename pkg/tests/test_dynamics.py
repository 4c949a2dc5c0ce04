import numpy as np
import pytest

from vortexeq import (
    InvalidInputError,
    Termination,
    VortexSystem,
    classify_sphere_triple,
    differential,
    distance,
    eval_H,
    flat_torus,
    integrate,
    min_image,
    random_point,
    vortex_velocity,
)


def test_rest_at_equilibrium(torus):
    sys = VortexSystem(torus, [1, 1])
    v = vortex_velocity(sys, [[0.1, 0.2], [0.6, 0.7]])
    assert np.abs(v).max() < 1e-12


def test_energy_rate_vanishes(surface):
    sys = VortexSystem(surface, [1.0, -2.0, 0.7])
    for seed in range(5):
        x = random_point(surface, seed, 3)
        rate = np.sum(differential(sys, x) * vortex_velocity(sys, x))
        assert abs(rate) < 1e-10


def test_velocity_tangent_on_sphere(sphere):
    sys = VortexSystem(sphere, [1.0, -2.0, 0.7])
    x = random_point(sphere, 1, 3)
    v = vortex_velocity(sys, x)
    np.testing.assert_allclose(np.einsum("ni,ni->n", v, x), 0, atol=1e-14)


def test_orientation_clockwise(torus):
    # a weak tracer to the right of a positive vortex moves down
    sys = VortexSystem(torus, [1, 1e-3])
    v = vortex_velocity(sys, [[0.5, 0.5], [0.6, 0.5]])
    assert v[1, 1] < 0 and abs(v[1, 0]) < 1e-12


def test_strength_flip_reverses(surface):
    sys = VortexSystem(surface, [1.0, -2.0, 0.7])
    x = random_point(surface, 2, 3)
    np.testing.assert_allclose(vortex_velocity(sys.with_gammas(-sys.gammas), x),
                               -vortex_velocity(sys, x), atol=1e-15)


def test_sphere_pair_corotation(sphere):
    sys = VortexSystem(sphere, [1, 1])
    th = 0.8
    x = np.array([[np.sin(th / 2), 0, np.cos(th / 2)], [-np.sin(th / 2), 0, np.cos(th / 2)]])
    tr = integrate(sys, x, 0.01, 1e-4)
    y = tr.configs[-1]
    omega = np.arctan2(y[0, 1], y[0, 0]) / 0.01
    # closed form from the sphere Green gradient at fixed separation
    want = np.cos(th / 2) / (2 * np.pi * np.sin(th / 2) ** 2)
    assert abs(abs(omega) - want) < 1e-4
    assert omega < 0
    np.testing.assert_allclose(y[:, 2], x[:, 2], atol=1e-12)


def test_sphere_norm_preserved(sphere):
    sys = VortexSystem(sphere, [1.0, -2.0, 0.7])
    tr = integrate(sys, random_point(sphere, 3, 3), 1.0, 1e-2)
    np.testing.assert_allclose(np.linalg.norm(tr.configs, axis=-1), 1.0, atol=1e-14)


def test_dipole_translates(torus):
    sys = VortexSystem(torus, [1, -1])
    x = np.array([[0.3, 0.4], [0.4, 0.4]])
    tr = integrate(sys, x, 10.0, 1e-2)
    sep = np.array([distance(torus, c[0], c[1]) for c in tr.configs])
    assert np.abs(sep - 0.1).max() < 1e-6
    assert tr.h_drift < 1e-6
    assert tr.termination is Termination.COMPLETED
    # the pair moved
    assert distance(torus, tr.configs[-1][0], x[0]) > 0.05


def test_equilibrium_stays_put(torus, sphere):
    sys = VortexSystem(torus, [1, 1])
    x = np.array([[0.1, 0.2], [0.6, 0.7]])
    tr = integrate(sys, x, 10.0, 1e-2)
    assert np.abs(tr.configs[-1] - x).max() < 1e-8
    sol = classify_sphere_triple([-3, 1, -3]).solutions[0]
    sys = VortexSystem(sphere, [-3, 1, -3])
    tr = integrate(sys, sol.points, 10.0, 1e-2)
    assert np.abs(tr.configs - sol.points).max() < 1e-8


def test_time_reversal(surface):
    sys = VortexSystem(surface, [1.0, -2.0, 0.7])
    x = random_point(surface, 4, 3)
    fwd = integrate(sys, x, 1.0, 1e-3, record_every=100)
    back = integrate(sys.with_gammas(-sys.gammas), fwd.configs[-1], 1.0, 1e-3, record_every=100)
    d = [distance(surface, a, b) for a, b in zip(back.configs[-1], x)]
    assert max(d) < 1e-6


def test_collision_guard(torus):
    sys = VortexSystem(torus, [1, -1])
    tr = integrate(sys, [[0.3, 0.4], [0.31, 0.4]], 1.0, 1e-3, collision_dist=0.02)
    assert tr.termination is Termination.COLLISION
    assert len(tr.times) == 2


def test_integrate_validation(torus):
    sys = VortexSystem(torus, [1, -1])
    with pytest.raises(InvalidInputError):
        integrate(sys, [[0.3, 0.4], [0.31, 0.4]], 1.0, 0.0)
    with pytest.raises(InvalidInputError):
        integrate(sys, [[0.3, 0.4], [0.3, 0.4]], 1.0, 1e-2)


def test_recording(torus):
    sys = VortexSystem(torus, [1, 2, -1])
    tr = integrate(sys, random_point(torus, 5, 3), 0.1, 1e-3, record_every=10)
    assert len(tr.times) == 11
    np.testing.assert_allclose(tr.times, np.linspace(0, 0.1, 11))
    f = torus.frac(tr.configs)
    assert np.all((f >= 0) & (f < 1))
    np.testing.assert_allclose(tr.h_values, [eval_H(sys, c) for c in tr.configs])


def test_unwrapped_integration_matches_wrapped():
    s = flat_torus([[1, 0], [0.2, 1.1]])
    sys = VortexSystem(s, [1, -1])
    x = np.array([[0.95, 0.5], [0.95, 0.58]])
    tr = integrate(sys, x, 2.0, 1e-2)
    d = min_image(s, tr.configs[:, 0] - tr.configs[:, 1])
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 0.08, atol=1e-10)
