import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from vortexeq import (
    FunctionField,
    InvalidInputError,
    PreconditionError,
    PsiSpec,
    SingularityError,
    VortexSystem,
    build_report,
    classify_sphere_triple,
    eval_H,
    eval_Psi,
    flat_torus,
    grad_H,
    grad_norm,
    green_value,
    hess_H,
    hessian_eigen,
    min_pair_distance,
    morse_check,
    random_point,
    random_rotation,
    retract,
    robin,
    tangent_basis,
)
from vortexeq.fields import PeriodicField
from vortexeq.hamiltonian import differential

# 2 G(0, (1/2, 1/2)) from the Fourier-series oracle (|k| <= 256)
H_HALF_HALF_FOURIER = -0.1103174
# nonzero Hessian eigenvalues of 2 G(p1 - p2) at the offset (1/2, 0)
EIG_HALF_ZERO = (-2.37687923, 6.37687923)


def separated(surface, n, seed, dmin=0.1):
    while True:
        x = random_point(surface, seed, n)
        if min_pair_distance(VortexSystem(surface, np.ones(n)), x) > dmin:
            return x
        seed += 1000


def pair(offset, base=(0.1, 0.2)):
    b = np.array(base)
    return np.array([b, b + offset])


def fd_gradient(sys, x, h=1e-6):
    s = sys.surface
    e = tangent_basis(s, x)
    out = np.zeros_like(x)
    for i in range(sys.n):
        for k in range(2):
            xp, xm = x.copy(), x.copy()
            xp[i] = retract(s, x[i], h * e[i, k])
            xm[i] = retract(s, x[i], -h * e[i, k])
            out[i] += (eval_H(sys, xp) - eval_H(sys, xm)) / (2 * h) * e[i, k]
    return out


def test_two_vortex_zero_psi(surface):
    sys = VortexSystem(surface, [1.5, -0.7], PsiSpec.zero())
    x = separated(surface, 2, 1)
    assert eval_H(sys, x) == pytest.approx(2 * 1.5 * -0.7 * green_value(surface, x[0], x[1]), abs=1e-14)


def test_half_period_against_fourier_oracle(torus):
    sys = VortexSystem(torus, [1, 1], PsiSpec.zero())
    assert eval_H(sys, pair([0.5, 0.5])) == pytest.approx(H_HALF_HALF_FOURIER, abs=1e-6)


def test_psi_variants(torus):
    x = random_point(torus, 2, 3)
    g = np.array([1.0, 2.0, -1.0])
    assert eval_Psi(PsiSpec.zero(), torus, x, g) == 0
    one = PeriodicField(np.ones((8, 8)))
    a = eval_Psi(PsiSpec.log_k(one), torus, x, g)
    b = eval_Psi(PsiSpec.kirchhoff_routh(), torus, x, g)
    assert a == b
    assert eval_Psi(PsiSpec.kirchhoff_routh(+1.0), torus, x, g) == -b


def test_kirchhoff_routh_constant_on_flat_torus(torus):
    h = robin(torus, random_point(torus, 3, 20))
    assert np.ptp(h) < 1e-10
    sys = VortexSystem(torus, [1, 2, -1])
    vals = [eval_Psi(sys.psi, torus, random_point(torus, s, 3), sys.gammas) for s in range(10)]
    assert np.ptp(vals) < 1e-10


def test_psi_field_validation():
    with pytest.raises(InvalidInputError):
        PsiSpec.log_k(PeriodicField(-np.ones((8, 8))))
    with pytest.raises(InvalidInputError):
        PsiSpec("log_k")
    with pytest.raises(InvalidInputError):
        PsiSpec.kirchhoff_routh(2.0)


def test_system_validation(torus):
    with pytest.raises(InvalidInputError):
        VortexSystem(torus, [1.0])
    with pytest.raises(InvalidInputError):
        VortexSystem(torus, [1.0, 0.0])
    sys = VortexSystem(torus, [1, 1])
    with pytest.raises(SingularityError):
        eval_H(sys, [[0.2, 0.2], [0.2, 0.2]])
    with pytest.raises(InvalidInputError):
        eval_H(sys, [[0.2, 0.2, 0.1], [0.3, 0.2, 0.1]])


def test_permutation_invariance(surface):
    g = np.array([1.0, -2.0, 0.5, 3.0])
    x = separated(surface, 4, 4)
    h = eval_H(VortexSystem(surface, g), x)
    perm = [2, 0, 3, 1]
    assert eval_H(VortexSystem(surface, g[perm]), x[perm]) == pytest.approx(h, abs=1e-12)


def test_batch_matches_single(surface):
    sys = VortexSystem(surface, [1, 2, -1])
    xs = np.array([separated(surface, 3, s) for s in range(4)])
    np.testing.assert_allclose(eval_H(sys, xs), [eval_H(sys, x) for x in xs], atol=1e-14)


def test_half_period_is_critical(torus):
    sys = VortexSystem(torus, [1, 1])
    assert np.abs(grad_H(sys, pair([0.5, 0.5]))).max() < 1e-12


@pytest.mark.parametrize("variant", ["zero", "kirchhoff_routh", "plus", "log_k"])
def test_gradient_against_fd(surface, variant):
    if variant == "log_k":
        if not surface.is_torus:
            K = FunctionField(lambda x: 2 + x[..., 2], lambda x: np.array([0, 0, 1.0]) - x[..., 2:3] * x)
            psi = PsiSpec.log_k(K)
        else:
            K = PeriodicField.from_function(lambda a, b: 2 + np.sin(2 * np.pi * a) * np.cos(2 * np.pi * b), 32)
            psi = PsiSpec.log_k(K)
    elif variant == "plus":
        psi = PsiSpec.kirchhoff_routh(+1.0)
    else:
        psi = PsiSpec(variant)
    sys = VortexSystem(surface, [1.0, -2.0, 0.7], psi)
    for seed in range(3):
        x = separated(surface, 3, seed, dmin=0.05)
        fd = fd_gradient(sys, x)
        g = grad_H(sys, x)
        if surface.conformal_factor is not None:
            # grad_H is metric; fd_gradient is the chart differential
            g = g * np.exp(2 * surface.conformal_factor(x))[:, None]
        assert np.abs(g - fd).max() <= 1e-5 * max(1.0, np.abs(fd).max())


def test_gradient_norm_uses_metric(ctorus):
    sys = VortexSystem(ctorus, [1, 2])
    x = separated(ctorus, 2, 5)
    d = differential(sys, x)
    w = np.exp(-2 * ctorus.conformal_factor(x))
    assert grad_norm(sys, x) == pytest.approx(np.sqrt((w * (d ** 2).sum(-1)).sum()), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 5.0), st.integers(0, 1000))
def test_gamma_scaling(lam, seed):
    s = flat_torus()
    x = separated(s, 3, seed)
    sys = VortexSystem(s, [1.0, -2.0, 0.7], PsiSpec.zero())
    np.testing.assert_allclose(grad_H(sys.with_gammas(lam * sys.gammas), x), lam ** 2 * grad_H(sys, x),
                               rtol=1e-12, atol=1e-13)


def test_sphere_rotation_invariance(sphere):
    sys = VortexSystem(sphere, [1.0, -2.0, 0.7])
    x = separated(sphere, 3, 6)
    for seed in range(5):
        R = random_rotation(seed)
        assert eval_H(sys, x @ R.T) == pytest.approx(eval_H(sys, x), abs=1e-10)


def test_torus_translation_invariance(torus):
    sys = VortexSystem(torus, [1.0, -2.0, 0.7])
    x = separated(torus, 3, 7)
    for a in np.random.default_rng(0).random((5, 2)):
        assert eval_H(sys, x + a) == pytest.approx(eval_H(sys, x), abs=1e-10)


def test_same_sign_pair_blows_up(torus):
    sys = VortexSystem(torus, [1, 2])
    far = eval_H(sys, pair([0.1, 0.0]))
    near = eval_H(sys, pair([1e-4, 0.0]))
    assert near - far > 1


def test_hessian_symmetry_defect(surface):
    sys = VortexSystem(surface, [1.0, -2.0, 0.7])
    A, defect = hess_H(sys, separated(surface, 3, 8), return_defect=True)
    assert defect < 1e-6
    np.testing.assert_array_equal(A, A.T)


def test_hessian_against_second_differences(torus):
    sys = VortexSystem(torus, [1.0, -2.0, 0.7])
    x = separated(torus, 3, 9, dmin=0.2)
    A = hess_H(sys, x)
    h = 1e-4
    B = np.zeros_like(A)
    E = np.eye(6).reshape(6, 3, 2)
    for a in range(6):
        for b in range(6):
            f = lambda sa, sb: eval_H(sys, x + sa * h * E[a] + sb * h * E[b])
            B[a, b] = (f(1, 1) - f(1, -1) - f(-1, 1) + f(-1, -1)) / (4 * h * h)
    assert np.abs(A - B).max() < 1e-3 * np.abs(B).max()


def test_half_period_spectra(torus):
    sys = VortexSystem(torus, [1, 1])
    lam = hessian_eigen(hess_H(sys, pair([0.5, 0.5])))[0]
    np.testing.assert_allclose(lam, [0, 0, 2, 2], atol=1e-6)
    lam = hessian_eigen(hess_H(sys, pair([0.5, 0.0])))[0]
    np.testing.assert_allclose(lam[[0, 3]], EIG_HALF_ZERO, atol=1e-6)
    # away from the pole lap G = 1, so the nonzero eigenvalues sum to 4 G1 G2
    assert lam.sum() == pytest.approx(4.0, abs=1e-6)


def test_half_zero_curvature_against_theta_oracle():
    gxx, gyy = oracles.theta_green_curvature(0.5 + 0j, 1j)
    assert sorted([4 * gxx, 4 * gyy]) == pytest.approx(EIG_HALF_ZERO, abs=1e-8)


def test_morse_check_half_period(torus):
    rep = morse_check(VortexSystem(torus, [1, 1]), pair([0.5, 0.5]))
    assert rep.zero_modes == 2 and rep.nondegenerate
    assert rep.morse_index == 0 and rep.positive_count == 2
    rep = morse_check(VortexSystem(torus, [1, 1]), pair([0.5, 0.0]))
    assert (rep.morse_index, rep.zero_modes, rep.positive_count) == (1, 2, 1)


def test_morse_check_sphere_triple(sphere):
    sol = classify_sphere_triple([-3, 1, -3]).solutions[0]
    sys = VortexSystem(sphere, [-3, 1, -3])
    rep = morse_check(sys, sol.points)
    assert rep.zero_modes == 3
    assert rep.morse_index + rep.zero_modes + rep.positive_count == 6
    for seed in range(3):
        R = random_rotation(seed)
        assert eval_H(sys, sol.points @ R.T) == pytest.approx(rep.h_value, abs=1e-10)


def test_morse_check_precondition(torus):
    with pytest.raises(PreconditionError):
        morse_check(VortexSystem(torus, [1, 1]), pair([0.3, 0.1]))


def test_report_partition(surface):
    sys = VortexSystem(surface, [1.0, -2.0, 0.7])
    rep = build_report(sys, separated(surface, 3, 10), converged=False)
    assert rep.morse_index + rep.zero_modes + rep.positive_count == 2 * sys.n
    d = rep.to_dict()
    assert len(d["hessian_eigenvalues"]) == 6
