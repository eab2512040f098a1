import numpy as np
import pytest

from qbingham.dynamics import ModelParams, shear_kappa
from qbingham.equilibrium import phase_constants, uniaxial_field
from qbingham.leslie import (
    DirectorState, angle_between, director_rhs, extract_director,
    leslie_angle, shear_angle_rate, small_de_experiment, step_director,
)
from qbingham.tensors import from_matrix, qnorm
from conftest import random_qvec

PC = phase_constants(7.0, 1.0, 0.5)  # zeta = 1.0816 > 1, flow aligning


def test_rhs_orthogonal_to_director(rng):
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        kap = rng.normal(size=(3, 3))
        kap -= np.eye(3) * np.trace(kap) / 3.0
        dn = director_rhs(n, kap, PC)
        assert abs(dn @ n) < 1e-14


def test_zero_gradient_is_stationary():
    n = np.array([0.3, -0.4, np.sqrt(1 - 0.25)])
    assert np.abs(director_rhs(n, np.zeros((3, 3)), PC)).max() == 0.0


def test_pure_rotation():
    om = np.zeros((3, 3))
    om[0, 1], om[1, 0] = 1.0, -1.0  # antisymmetric kappa: D = 0
    n = np.array([1.0, 0.0, 0.0])
    dn = director_rhs(n, om, PC)
    np.testing.assert_allclose(dn, 0.5 * (om - om.T) @ n, atol=1e-15)
    st = DirectorState(n)
    for _ in range(100):
        st = step_director(st, om, PC, 0.01)
    assert abs(np.linalg.norm(st.n) - 1.0) < 1e-15


def test_shear_plane_angle_rate(rng):
    rate = 1.3
    kap = shear_kappa(rate)
    for theta in rng.uniform(-np.pi, np.pi, 10):
        n = np.array([np.cos(theta), np.sin(theta), 0.0])
        e_theta = np.array([-np.sin(theta), np.cos(theta), 0.0])
        got = director_rhs(n, kap, PC) @ e_theta
        assert abs(got - shear_angle_rate(theta, PC.zeta, rate)) < 1e-13


def test_torque_balance_form(rng):
    # the explicit form satisfies n x (gamma1 N + gamma2 D.n) = 0
    kap = shear_kappa(1.0)
    st = DirectorState(np.array([np.cos(1.0), np.sin(1.0), 0.0]))
    for _ in range(50):
        st = step_director(st, kap, PC, 0.02)
        n = st.n
        dn = director_rhs(n, kap, PC)
        omega = 0.5 * (kap - kap.T)
        d = 0.5 * (kap + kap.T)
        cap_n = dn - omega @ n
        torque = np.cross(n, PC.gamma1 * cap_n + PC.gamma2 * d @ n)
        assert np.abs(torque).max() < 1e-8


def test_leslie_angle_limits():
    assert leslie_angle(1e12).theta == pytest.approx(np.pi / 4, abs=1e-6)
    al = leslie_angle(1.0)
    assert al.theta == 0.0
    assert al.tumbling
    assert leslie_angle(0.5).theta is None
    assert leslie_angle(0.5).tumbling
    with pytest.raises(ValueError):
        leslie_angle(-1.0)


def test_leslie_angle_is_stable_fixed_point():
    al = leslie_angle(PC.zeta)
    assert not al.tumbling
    assert abs(shear_angle_rate(al.theta, PC.zeta)) < 1e-12
    kap = shear_kappa(1.0)
    n_leslie = np.array([np.cos(al.theta), np.sin(al.theta), 0.0])
    for th0 in (al.theta + 0.4, al.theta - 0.4):
        st = DirectorState(np.array([np.cos(th0), np.sin(th0), 0.0]))
        for _ in range(int(70 / 0.02)):
            st = step_director(st, kap, PC, 0.02)
        assert angle_between(st.n, n_leslie) < 1e-6


def test_extract_director(rng):
    n = rng.normal(size=3)
    n /= np.linalg.norm(n)
    d, flag = extract_director(uniaxial_field(0.5, n))
    assert abs(abs(d @ n) - 1.0) < 1e-12
    assert not flag
    # sign continuity
    d2, _ = extract_director(uniaxial_field(0.5, -n), prev=d)
    assert d2 @ d > 0.99
    # small biaxial perturbation moves the director at first order only
    pert = random_qvec(rng, scale=1.0)
    eps = 1e-4
    d3, _ = extract_director(uniaxial_field(0.5, n) + eps * pert)
    assert angle_between(d3, n) < 10 * eps
    # argmax eigenvector on a random physical tensor
    q = random_qvec(rng, scale=0.2)
    dv, _ = extract_director(q)
    w, r = np.linalg.eigh(__import__("qbingham.tensors", fromlist=["to_matrix"]).to_matrix(q))
    assert abs(abs(dv @ r[:, 2]) - 1.0) < 1e-10


def test_extract_director_flags_degenerate():
    # oblate tensor: the two largest eigenvalues coincide
    _, flag = extract_director(uniaxial_field(-0.3, np.array([0.0, 0.0, 1.0])))
    assert flag


def test_small_de_smoke():
    params = ModelParams(alpha=7.0, epsilon=0.05, de=1.0, re=1.0, gamma=0.5,
                         L1=1.0, L2=0.5, delta=0.1)
    table = small_de_experiment(params, [0.2, 0.1], shear_kappa(1.0), 2.0,
                                constants=PC)
    rows = table.rows
    assert len(rows) == 2
    assert rows[0].error is None and rows[1].error is None
    assert rows[1].sup_angle_err < rows[0].sup_angle_err
    assert 0.4 < table.fitted_slope < 1.6
    assert table.zeta == pytest.approx(PC.zeta)
    with pytest.raises(ValueError):
        small_de_experiment(params, [0.1, 0.2], shear_kappa(1.0), 1.0)
