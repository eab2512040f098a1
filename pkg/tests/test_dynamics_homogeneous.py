import numpy as np
import pytest

from qbingham.closure import PhysicalityError
from qbingham.dynamics import (
    HomState, ModelParams, default_hom_dt, homogeneous_rhs, shear_kappa,
    step_homogeneous,
)
from qbingham.equilibrium import phase_constants, uniaxial_field
from qbingham.linear_ops import DirectorContext, apply_hn, apply_j, in_space_basis, out_space_basis
from qbingham.tensors import eig_sym3, from_matrix, qnorm, to_matrix
from conftest import haar_rotations, random_qvec

P = ModelParams(alpha=7.0, epsilon=0.05, de=1.0, re=1.0, gamma=0.5,
                L1=1.0, L2=0.5, delta=0.1)
PC = phase_constants(7.0, 1.0, 0.5)
N0 = np.array([0.0, 0.0, 1.0])


def test_model_params_validation():
    with pytest.raises(ValueError, match="gamma"):
        ModelParams(7.0, 0.1, 1.0, 1.0, 1.2, 1.0, 0.0, 0.1)
    with pytest.raises(ValueError, match="L1 [+] 2 L2"):
        ModelParams(7.0, 0.1, 1.0, 1.0, 0.5, 1.0, -0.6, 0.1)
    with pytest.raises(ValueError, match="De"):
        ModelParams(7.0, 0.1, -1.0, 1.0, 0.5, 1.0, 0.0, 0.1)
    with pytest.raises(ValueError, match="delta"):
        ModelParams(7.0, 0.1, 1.0, 1.0, 0.5, 1.0, 0.0, 0.5)


def test_shear_kappa_tracefree():
    k = shear_kappa(2.5)
    assert k[0, 1] == 2.5
    assert np.trace(k) == 0.0
    with pytest.raises(ValueError):
        HomState(q5=np.zeros(5), kappa=np.eye(3))


def test_equilibrium_is_stationary():
    q0 = uniaxial_field(PC.S2, N0)
    rhs, _ = homogeneous_rhs(q0, np.zeros((3, 3)), P)
    assert qnorm(rhs) < 1e-12


def test_equilibrium_fixed_point_over_many_steps():
    q0 = uniaxial_field(PC.S2, N0)
    state = HomState(q5=q0, kappa=np.zeros((3, 3)))
    dt = 0.1 * P.de
    for _ in range(1000):
        state = step_homogeneous(state, dt, P, tol=1e-12)
    assert qnorm(state.q5 - q0) < 1e-12


def test_isotropic_response_to_shear():
    # at Q = 0 the closure reduces to the isotropic fourth moment and
    # dQ/dt = 2 M_0(D) = (2/5) D
    kap = shear_kappa(1.0)
    d = 0.5 * (kap + kap.T)
    rhs, _ = homogeneous_rhs(np.zeros(5), kap, P)
    assert np.abs(to_matrix(rhs) - 0.4 * d).max() < 1e-11


def test_linearized_rhs_matches_operators(rng):
    # small perturbation: dQ/dt ~ -(4/De) J(H(dQ)) + O(h^2)
    ctx = DirectorContext.build(N0, PC)
    q0 = uniaxial_field(PC.S2, N0)
    e = random_qvec(rng, scale=1.0)
    e = e / qnorm(e)
    errs = []
    for h in (1e-3, 5e-4):
        rhs, _ = homogeneous_rhs(q0 + h * e, np.zeros((3, 3)), P, tol=1e-13)
        lin = -(4.0 / P.de) * apply_j(ctx, apply_hn(ctx, h * to_matrix(e)))
        errs.append(np.abs(to_matrix(rhs) - lin).max() / h)
    # second-order residual halves with h
    assert errs[1] < 0.6 * errs[0] + 1e-10
    assert errs[0] < 0.05


def test_frame_indifference(rng):
    rot = haar_rotations(rng, 1)[0]
    q = uniaxial_field(0.4, np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0))
    kap = shear_kappa(0.7)
    rhs, _ = homogeneous_rhs(q, kap, P)
    q_r = from_matrix(rot @ to_matrix(q) @ rot.T)
    rhs_r, _ = homogeneous_rhs(q_r, rot @ kap @ rot.T, P)
    assert np.abs(to_matrix(rhs_r) - rot @ to_matrix(rhs) @ rot.T).max() < 1e-10


def test_rk4_self_convergence_order():
    # shear startup from equilibrium; Richardson with dt halvings
    kap = shear_kappa(1.0)
    q0 = uniaxial_field(PC.S2, N0)
    t_final = 0.4

    def run(dt):
        st = HomState(q5=q0, kappa=kap)
        for _ in range(int(round(t_final / dt))):
            st = step_homogeneous(st, dt, P, tol=1e-13)
        return st.q5

    ref = run(0.0025)
    errs = [qnorm(run(dt) - ref) for dt in (0.04, 0.02, 0.01)]
    orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert all(o > 3.5 for o in orders), (errs, orders)


def test_physicality_retry_with_large_step():
    # a huge step would overshoot; the halving retry must still land inside
    kap = shear_kappa(4.0)
    q0 = uniaxial_field(PC.S2, N0)
    st = HomState(q5=q0, kappa=kap)
    out = step_homogeneous(st, 2.0, P)
    w, _ = eig_sym3(to_matrix(out.q5))
    assert min(w[0] + 1.0 / 3.0, 2.0 / 3.0 - w[2]) >= P.delta / 2.0
    assert out.t == pytest.approx(2.0)


def test_default_dt_resolves_stiffness():
    dt = default_hom_dt(P, PC)
    from qbingham.linear_ops import relaxation_rates
    lam = relaxation_rates(DirectorContext.build(N0, PC))[-1]
    assert dt * lam / P.de <= 2.0 + 1e-12
    assert dt <= 0.1 * P.de + 1e-15
