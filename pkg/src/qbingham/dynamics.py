"""Time integration of the closed Q-tensor flow system.

Two settings share the same right-hand sides:

* spatially homogeneous states under an imposed velocity gradient,
  integrated with RK4;
* 2D periodic (Q, v) fields with full 3D tensor components, integrated
  pseudo-spectrally with a stabilized two-step IMEX scheme (SBDF2 with a
  constant-coefficient implicit shield), Leray projection for the
  pressure, and 2/3 dealiasing on the nonlinear terms.

Index conventions, fixed once for the whole package: the velocity-gradient
matrix is kappa_ij = dv_i/dx_j (it advects material vectors), the closure
operator receives its transpose, and the fluid spin is (kappa - kappa^T)/2.
The discrete energy ledger of energy_report validates this choice.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .closure import (
    DEFAULT_TOL, PhysicalityError, bingham_map_batch, m4_contract_frame,
    mq_apply_frame,
)
from .linear_ops import DirectorContext, relaxation_rates
from .equilibrium import phase_constants
from .spectral import Grid2D, elastic_symbols
from .tensors import (
    eig_sym3, from_basis_coeffs, from_matrix, qdot, to_basis_coeffs, to_matrix,
)

__all__ = [
    "ModelParams", "HomState", "FieldState", "EnergyReport", "FieldSolver",
    "homogeneous_rhs", "step_homogeneous", "default_hom_dt",
    "elastic_operator", "elastic_energy", "distortion_stress",
    "mu_field", "energy_report", "smooth_random_state", "step_field",
]


@dataclass(frozen=True)
class ModelParams:
    """Dimensionless groups of the coupled system."""

    alpha: float
    epsilon: float
    de: float
    re: float
    gamma: float
    L1: float
    L2: float
    delta: float

    def __post_init__(self):
        errs = []
        if not 0.0 < self.gamma < 1.0:
            errs.append("gamma must lie in (0,1)")
        if self.L1 <= 0.0:
            errs.append("L1 must be positive")
        if self.L1 + 2.0 * self.L2 <= 0.0:
            errs.append("L1 + 2 L2 must be positive")
        if self.de <= 0.0:
            errs.append("De must be positive")
        if self.re <= 0.0:
            errs.append("Re must be positive")
        if self.epsilon < 0.0:
            errs.append("epsilon must be nonnegative")
        if not 0.0 < self.delta < 1.0 / 3.0:
            errs.append("delta must lie in (0, 1/3)")
        if self.alpha <= 0.0:
            errs.append("alpha must be positive")
        if errs:
            raise ValueError("; ".join(errs))


def shear_kappa(rate=1.0):
    """kappa for simple shear v = (rate * y, 0, 0)."""
    k = np.zeros((3, 3))
    k[0, 1] = float(rate)
    return k


# ---------------------------------------------------------------------------
# homogeneous dynamics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HomState:
    """A single Q under an imposed, trace-free velocity gradient."""

    q5: np.ndarray
    kappa: np.ndarray
    t: float = 0.0
    b5: np.ndarray | None = None  # closure warm start

    def __post_init__(self):
        if abs(np.trace(self.kappa)) > 1e-12:
            raise ValueError("imposed velocity gradient must be trace-free")


def homogeneous_rhs(q5, kappa, params, b_warm5=None, tol=DEFAULT_TOL):
    """dQ/dt for the homogeneous system; returns (rhs qvec, B qvec).

    The elastic contribution vanishes identically without gradients, so
    mu = B - alpha Q. The velocity gradient enters through its transpose.
    """
    q5 = np.asarray(q5, dtype=float)
    res = bingham_map_batch(q5[None, :], delta=0.0, tol=tol,
                            b_warm5=None if b_warm5 is None else b_warm5[None, :])
    qmat = to_matrix(q5)
    mu = to_matrix(res.B5[0] - params.alpha * q5)
    m_mu = mq_apply_frame(qmat[None], res.rotation, res.pair, mu[None])[0]
    g = np.asarray(kappa, dtype=float).T
    m_g = mq_apply_frame(qmat[None], res.rotation, res.pair, g[None])[0]
    rhs = (-(2.0 / params.de) * (m_mu + m_mu.T) + (m_g + m_g.T))
    return from_matrix(rhs), res.B5[0]


def default_hom_dt(params, constants=None):
    """Step size resolving the stiff bulk relaxation for explicit RK4."""
    if constants is None:
        constants = phase_constants(params.alpha, params.L1, params.L2)
    ctx = DirectorContext.build(np.array([0.0, 0.0, 1.0]), constants)
    lam = float(relaxation_rates(ctx)[-1])
    return min(0.1 * params.de, 2.0 * params.de / max(lam, 1e-12))


def step_homogeneous(state: HomState, dt, params, tol=DEFAULT_TOL, _depth=0):
    """One RK4 step; rejects and halves dt (up to 10 times) if the update,
    or any internal stage, leaves the physical set with margin delta/2."""
    q0, b5 = state.q5, state.b5
    try:
        k1, b5 = homogeneous_rhs(q0, state.kappa, params, b5, tol)
        k2, b5 = homogeneous_rhs(q0 + 0.5 * dt * k1, state.kappa, params, b5, tol)
        k3, b5 = homogeneous_rhs(q0 + 0.5 * dt * k2, state.kappa, params, b5, tol)
        k4, b5 = homogeneous_rhs(q0 + dt * k3, state.kappa, params, b5, tol)
        q1 = q0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        w, _ = eig_sym3(to_matrix(q1))
        margin = min(w[0] + 1.0 / 3.0, 2.0 / 3.0 - w[2])
        failed = margin < params.delta / 2.0
        reason = f"margin {margin:.3e}"
    except (PhysicalityError, RuntimeError) as exc:
        # a stage left the invertible set; treat like a failed step
        failed = True
        reason = str(exc)
    if failed:
        if _depth >= 10:
            raise PhysicalityError(
                f"homogeneous step keeps violating the delta/2 margin after "
                f"10 halvings at t={state.t:.4g} ({reason})")
        mid = step_homogeneous(state, dt / 2.0, params, tol, _depth + 1)
        return step_homogeneous(mid, dt / 2.0, params, tol, _depth + 1)
    return HomState(q1, state.kappa, state.t + dt, b5)


# ---------------------------------------------------------------------------
# spectral field operators
# ---------------------------------------------------------------------------

def elastic_operator(q5_field, grid, L1, L2):
    """L(Q) = -(L1 Lap Q + L2 (Q_ik,jk + Q_jk,ik)), deviatoric, per point.

    Evaluated mode-by-mode through the symmetric symbol in the Q basis,
    the same matrices the implicit time-step solves use.
    """
    lam, vec = elastic_symbols(grid, L1, L2)
    ch = grid.fft(to_basis_coeffs(q5_field))
    ch = np.einsum("xyab,xyb->xya", vec, lam * np.einsum("xyba,xyb->xya", vec, ch))
    return from_basis_coeffs(grid.ifft(ch))


def _grad_q(q5_field, grid):
    """dQ stack (n, n, 2, 3, 3): derivative axis (x, y) of the full matrix."""
    qmat = to_matrix(q5_field)
    return np.stack([grid.deriv_x(qmat), grid.deriv_y(qmat)], axis=-3)


def elastic_energy(q5_field, grid, L1, L2, epsilon):
    """F_e = (eps/2) int L1 |grad Q|^2 + L2 (|div Q|^2 + Q_jk,i Q_ik,j)."""
    dq = _grad_q(q5_field, grid)
    t_l1 = np.einsum("...akl,...akl->...", dq, dq)
    divq = dq[..., 0, :, 0] + dq[..., 1, :, 1]
    t_div = np.einsum("...k,...k->...", divq, divq)
    cross = np.einsum("...akb,...bka->...", dq[..., :, :, :2], dq[..., :, :, :2])
    dens = 0.5 * epsilon * (L1 * t_l1 + L2 * (t_div + cross))
    return grid.mean_integral(dens)


def distortion_stress(q5_a, q5_b, grid, L1, L2):
    """sigma^d(Q, Qt) with layout sigma[..., j, i]; force_i = d_j sigma[j, i].

    sigma_ji = -(L1 Q_kl,j Qt_kl,i + L2 Q_km,m Qt_kj,i + L2 Q_kj,l Qt_kl,i).
    """
    dq = _grad_q(q5_a, grid)
    dqt = _grad_q(q5_b, grid)
    n = grid.n
    sig = np.zeros((n, n, 3, 3))
    t1 = np.einsum("...akl,...bkl->...ab", dq, dqt)
    sig[..., :2, :2] -= L1 * t1
    divq = dq[..., 0, :, 0] + dq[..., 1, :, 1]
    sig[..., :, :2] -= L2 * np.einsum("...k,...bkj->...jb", divq, dqt)
    sig[..., :, :2] -= L2 * np.einsum("...akj,...bka->...jb", dq, dqt[..., :, :, :2])
    return sig


def _div_stress(sig, grid):
    """force_i = d_j sigma[..., j, i] (planar derivatives only)."""
    return grid.deriv_x(sig[..., 0, :]) + grid.deriv_y(sig[..., 1, :])


def _kappa_field(v, grid):
    """kappa_ij = dv_i/dx_j as an (n, n, 3, 3) field."""
    dvx = grid.deriv_x(v)
    dvy = grid.deriv_y(v)
    kap = np.zeros(v.shape[:-1] + (3, 3))
    kap[..., :, 0] = dvx
    kap[..., :, 1] = dvy
    return kap


def mu_field(q5_field, grid, params, b5=None, tol=DEFAULT_TOL):
    """Molecular field mu = (B - alpha Q) + eps L(Q) and the closure batch."""
    n = grid.n
    res = bingham_map_batch(
        q5_field.reshape(-1, 5), delta=params.delta / 2.0, tol=tol,
        b_warm5=None if b5 is None else b5.reshape(-1, 5))
    b5_field = res.B5.reshape(n, n, 5)
    mu5 = b5_field - params.alpha * q5_field
    if params.epsilon != 0.0:
        mu5 = mu5 + params.epsilon * elastic_operator(q5_field, grid, params.L1, params.L2)
    return mu5, res


# ---------------------------------------------------------------------------
# field state and the IMEX stepper
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _History:
    q5: np.ndarray
    v: np.ndarray
    fq: np.ndarray
    fv: np.ndarray
    dt: float
    b5: np.ndarray | None = None


@dataclass(frozen=True)
class FieldState:
    """Periodic (Q, v) fields plus solver memory (closure warm starts and
    the previous step for the two-step scheme)."""

    grid: Grid2D
    q5: np.ndarray
    v: np.ndarray
    t: float = 0.0
    b5: np.ndarray | None = None
    hist: _History | None = None


@dataclass(frozen=True)
class EnergyReport:
    """Energy ledger of one field state."""

    t: float
    kinetic: float
    bulk: float
    elastic: float
    total: float
    d_viscous: float
    d_closure: float
    d_rotational: float

    @property
    def dissipation(self):
        return self.d_viscous + self.d_closure + self.d_rotational


class FieldSolver:
    """Pseudo-spectral IMEX integrator for the coupled field system.

    Implicit (per Fourier mode): the viscous Laplacian and a frozen
    constant-coefficient bound of the stiff closure-elastic product,
    c_bar = (2/15)(1 + 3 max|Q|), plus a scalar shield for the bulk
    relaxation sized from the linearized rates at equilibrium. Everything
    else, including the full closure nonlinearity, is explicit; the shield
    enters only through a second-difference bracket so the scheme stays
    second order regardless of the shield values.
    """

    def __init__(self, grid, params, closure_tol=DEFAULT_TOL, forcing=None,
                 bulk_shield=None):
        self.grid = grid
        self.params = params
        self.closure_tol = float(closure_tol)
        self.forcing = forcing
        self.lam, self.vec = elastic_symbols(grid, params.L1, params.L2)
        self._mu_cache = None
        if bulk_shield is None:
            constants = phase_constants(params.alpha, params.L1, params.L2)
            ctx = DirectorContext.build(np.array([0.0, 0.0, 1.0]), constants)
            bulk_shield = float(relaxation_rates(ctx)[-1]) / 4.0
        self.bulk_shield = float(bulk_shield)

    def _mu(self, q5, b5):
        """mu_field with a same-state cache (one closure per time level)."""
        c = self._mu_cache
        if c is not None and c[0] is q5:
            return c[1], c[2]
        mu5, res = mu_field(q5, self.grid, self.params, b5, self.closure_tol)
        self._mu_cache = (q5, mu5, res)
        return mu5, res

    @staticmethod
    def _warm_start(state):
        """Closure warm start: linear extrapolation of B across the step."""
        if state.b5 is None:
            return None
        if state.hist is not None and state.hist.b5 is not None:
            return 2.0 * state.b5 - state.hist.b5
        return state.b5

    # -- right-hand sides -------------------------------------------------
    def _assemble(self, q5, v, t, b5=None):
        """Raw RHS before dealiasing and pressure projection."""
        grid, p = self.grid, self.params
        mu5, res = self._mu(q5, b5)
        n = grid.n
        rot = res.rotation.reshape(n, n, 3, 3)
        pair = res.pair.reshape(n, n, 3, 3)
        qmat = to_matrix(q5)
        mumat = to_matrix(mu5)
        m_mu = mq_apply_frame(qmat, rot, pair, mumat)

        kap = _kappa_field(v, grid)
        g = np.swapaxes(kap, -1, -2)
        m_g = mq_apply_frame(qmat, rot, pair, g)

        fq_mat = (-(2.0 / p.de) * (m_mu + np.swapaxes(m_mu, -1, -2))
                  + m_g + np.swapaxes(m_g, -1, -2))
        fq5 = from_matrix(fq_mat)
        fq5 -= v[..., 0:1] * grid.deriv_x(q5) + v[..., 1:2] * grid.deriv_y(q5)

        dmat = 0.5 * (kap + np.swapaxes(kap, -1, -2))
        sig = ((1.0 - p.gamma) / (2.0 * p.re)) * m4_contract_frame(rot, pair, dmat)
        sig = sig + ((1.0 - p.gamma) / (p.de * p.re)) * (
            2.0 * m_mu + p.epsilon * distortion_stress(q5, q5, grid, p.L1, p.L2))
        fv = _div_stress(sig, grid)
        fv -= v[..., 0:1] * grid.deriv_x(v) + v[..., 1:2] * grid.deriv_y(v)
        fv += (p.gamma / p.re) * grid.laplacian(v)
        if self.forcing is not None:
            f_q, f_v = self.forcing(t)
            fq5 = fq5 + f_q
            fv = fv + f_v
        return fq5, fv, res

    def rhs(self, q5, v, t, b5=None):
        """Explicit RHS (fq5, fv), dealiased, with fv pressure-projected."""
        grid = self.grid
        fq5, fv, res = self._assemble(q5, v, t, b5)
        fq5 = grid.dealias(fq5)
        fv = grid.ifft(grid.leray_hat(grid.dealias_hat(grid.fft(fv))))
        return fq5, fv, res

    # -- implicit solves ---------------------------------------------------
    def _q_shield_symbols(self, cbar, a, b):
        """(a + b * shield_symbol)^-1 diagonalized: returns (lam_inv, vec)."""
        p = self.params
        s = (4.0 / p.de) * (self.bulk_shield + p.epsilon * cbar * self.lam)
        return 1.0 / (a + b * s), self.vec

    def _solve_q(self, rhs5, cbar, a):
        """(a + A_Q) q = rhs with A_Q = (4/De)(c_b + eps c_bar L)."""
        inv, vec = self._q_shield_symbols(cbar, a, 1.0)
        ch = self.grid.fft(to_basis_coeffs(rhs5))
        ch = np.einsum("xyab,xyb->xya", vec, inv * np.einsum("xyba,xyb->xya", vec, ch))
        ch = self.grid.dealias_hat(ch)
        return from_basis_coeffs(self.grid.ifft(ch))

    def _apply_q_shield(self, q5, cbar):
        """A_Q q pointwise (spectral), used in the stabilizing bracket."""
        p = self.params
        s = (4.0 / p.de) * (self.bulk_shield + p.epsilon * cbar * self.lam)
        ch = self.grid.fft(to_basis_coeffs(q5))
        ch = np.einsum("xyab,xyb->xya", self.vec, s * np.einsum("xyba,xyb->xya", self.vec, ch))
        return from_basis_coeffs(self.grid.ifft(ch))

    def _solve_v(self, rhs, a):
        """(a - (gamma/Re) Lap) v = rhs, then Leray projection."""
        vh = self.grid.fft(rhs)
        vh /= (a + (self.params.gamma / self.params.re) * self.grid.ksq)[..., None]
        vh = self.grid.leray_hat(self.grid.dealias_hat(vh))
        return self.grid.ifft(vh)

    # -- stepping ----------------------------------------------------------
    def step(self, state: FieldState, dt):
        """Advance one step (bootstrap Euler if no history, else SBDF2)."""
        grid, p = self.grid, self.params
        cbar = (2.0 / 15.0) * (1.0 + 3.0 * float(np.sqrt(qdot(state.q5, state.q5)).max()))
        fq, fv, res = self.rhs(state.q5, state.v, state.t, self._warm_start(state))
        b5_new = res.B5.reshape(grid.n, grid.n, 5)

        hist = state.hist
        if hist is not None and abs(hist.dt - dt) > 1e-14 * max(dt, hist.dt):
            hist = None  # step size changed, restart the multistep history
        if hist is None:
            # stabilized semi-implicit Euler: (1/dt + A) x1 = x0 (1/dt + A) + f0
            a = 1.0 / dt
            sq = self._apply_q_shield(state.q5, cbar)
            q1 = self._solve_q(a * state.q5 + fq + sq, cbar, a)
            # viscous part of fv telescopes to backward Euler
            v1 = self._solve_v(a * state.v + fv - (p.gamma / p.re) * grid.laplacian(state.v), a)
        else:
            a = 1.5 / dt
            rq = ((4.0 * state.q5 - hist.q5) / (2.0 * dt) + 2.0 * fq - hist.fq
                  + self._apply_q_shield(2.0 * state.q5 - hist.q5, cbar))
            q1 = self._solve_q(rq, cbar, a)
            rv = ((4.0 * state.v - hist.v) / (2.0 * dt) + 2.0 * fv - hist.fv
                  - (p.gamma / p.re) * grid.laplacian(2.0 * state.v - hist.v))
            v1 = self._solve_v(rv, a)

        div_res = grid.divergence_residual(v1)
        assert div_res <= 1e-10, f"divergence residual {div_res:.2e} after projection"

        w, _ = eig_sym3(to_matrix(q1.reshape(-1, 5)))
        margin = float(np.minimum(w[:, 0] + 1.0 / 3.0, 2.0 / 3.0 - w[:, 2]).min())
        if margin < p.delta / 2.0:
            raise PhysicalityError(
                f"field left the delta/2 physical margin at t={state.t + dt:.5g} "
                f"(worst margin {margin:.3e})")

        return FieldState(
            grid=grid, q5=q1, v=v1, t=state.t + dt, b5=b5_new,
            hist=_History(state.q5, state.v, fq, fv, dt, state.b5))

    def run(self, state: FieldState, dt, n_steps, callback=None, max_halvings=10):
        """Advance n_steps, halving dt (and restarting the multistep
        history) when a step loses physicality."""
        halvings = 0
        k = 0
        while k < n_steps:
            try:
                state = self.step(state, dt)
            except PhysicalityError:
                halvings += 1
                if halvings > max_halvings:
                    raise
                dt *= 0.5
                state = replace(state, hist=None)
                continue
            k += 1
            if callback is not None:
                callback(k, state)
        return state

    def default_dt(self, state):
        """dt = min(0.25 dx / |v|_max, 0.1 De)."""
        vmax = float(np.abs(state.v).max())
        adv = 0.25 * self.grid.dx / max(vmax, 1e-12)
        return min(adv, 0.1 * self.params.de)

    def energy_report(self, state: FieldState):
        pre = self._mu(state.q5, self._warm_start(state))
        return energy_report(state, self.params, self.closure_tol, _mu_res=pre)

    def pressure(self, state: FieldState):
        """Recover p from the divergence of the unprojected acceleration:
        Lap p = div(raw momentum RHS), zero-mean."""
        grid = self.grid
        _, fv_raw, _ = self._assemble(state.q5, state.v, state.t, state.b5)
        fh = grid.fft(fv_raw)
        div_h = 1j * (grid.kx * fh[..., 0] + grid.ky * fh[..., 1])
        ksq = np.where(grid.ksq == 0.0, 1.0, grid.ksq)
        ph = -div_h / ksq
        ph[0, 0] = 0.0
        return grid.ifft(ph)


def step_field(solver: FieldSolver, state: FieldState, dt):
    """Functional wrapper around FieldSolver.step."""
    return solver.step(state, dt)


def energy_report(state: FieldState, params, closure_tol=DEFAULT_TOL, _mu_res=None):
    """Energy ledger: E = 1/2 int |v|^2 + (1-gamma)/(Re De) (F_b + F_e) and
    the three dissipation components of the balance law."""
    grid, p = state.grid, params
    n = grid.n
    if _mu_res is None:
        mu5, res = mu_field(state.q5, grid, p, state.b5, closure_tol)
    else:
        mu5, res = _mu_res
    rot = res.rotation.reshape(n, n, 3, 3)
    pair = res.pair.reshape(n, n, 3, 3)
    lnz = res.log_z.reshape(n, n)
    b5 = res.B5.reshape(n, n, 5)

    kinetic = 0.5 * grid.mean_integral((state.v**2).sum(axis=-1))
    f_bulk = grid.mean_integral(
        -lnz + qdot(state.q5, b5) - 0.5 * p.alpha * qdot(state.q5, state.q5))
    f_el = elastic_energy(state.q5, grid, p.L1, p.L2, p.epsilon)
    total = kinetic + (1.0 - p.gamma) / (p.re * p.de) * (f_bulk + f_el)

    kap = _kappa_field(state.v, grid)
    grad_v_sq = np.einsum("...ij,...ij->...", kap, kap)
    dmat = 0.5 * (kap + np.swapaxes(kap, -1, -2))
    d_m4_d = np.einsum("...ij,...ij->...", dmat, m4_contract_frame(rot, pair, dmat))
    mumat = to_matrix(mu5)
    qmat = to_matrix(state.q5)
    mu_m_mu = np.einsum("...ij,...ij->...", mumat,
                        mq_apply_frame(qmat, rot, pair, mumat))

    d_visc = (p.gamma / p.re) * grid.mean_integral(grad_v_sq)
    d_clos = (1.0 - p.gamma) / (2.0 * p.re) * grid.mean_integral(d_m4_d)
    d_rot = 4.0 * (1.0 - p.gamma) / (p.re * p.de**2) * grid.mean_integral(mu_m_mu)
    return EnergyReport(state.t, kinetic, f_bulk, f_el, total, d_visc, d_clos, d_rot)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def _band_limited(rng, grid, n_modes, n_comp):
    """Random real field with modes |kx|, |ky| <= n_modes, unit RMS-ish."""
    n = grid.n
    out = np.zeros((n, n, n_comp))
    for kx in range(-n_modes, n_modes + 1):
        for ky in range(-n_modes, n_modes + 1):
            if kx == 0 and ky == 0:
                continue
            amp = rng.normal(size=n_comp)
            ph = rng.uniform(0.0, 2.0 * np.pi, size=n_comp)
            wave = (2.0 * np.pi / grid.length) * (kx * grid.x + ky * grid.y)
            out += amp * np.cos(wave[..., None] + ph)
    return out / max(1, n_modes)


def smooth_random_state(grid, params, seed, q_amplitude=0.5, v_amplitude=0.1,
                        n_modes=2, margin=None):
    """Seeded band-limited initial data with Q inside the margin-delta
    physical set and a divergence-free velocity."""
    rng = np.random.default_rng(seed)
    margin = params.delta if margin is None else margin
    constants = phase_constants(params.alpha, params.L1, params.L2)
    n0 = np.array([0.0, 0.0, 1.0])
    s_base = min(constants.S2, 0.75 * (2.0 - 3.0 * margin) / 2.0)
    base = from_matrix(s_base * (np.outer(n0, n0) - np.eye(3) / 3.0))
    pert = _band_limited(rng, grid, n_modes, 5)
    amp = q_amplitude
    for _ in range(60):
        q5 = base + amp * pert
        w, _ = eig_sym3(to_matrix(q5.reshape(-1, 5)))
        worst = float(np.minimum(w[:, 0] + 1.0 / 3.0, 2.0 / 3.0 - w[:, 2]).min())
        if worst >= margin:
            break
        amp *= 0.8
    else:
        raise RuntimeError("could not fit initial data inside the margin")

    psi_w = _band_limited(rng, grid, n_modes, 2)
    v = np.stack([grid.deriv_y(psi_w[..., 0]), -grid.deriv_x(psi_w[..., 0]),
                  psi_w[..., 1]], axis=-1)
    v = grid.leray(v)
    vmax = np.abs(v).max()
    if vmax > 0:
        v *= v_amplitude / vmax
    return FieldState(grid=grid, q5=q5, v=v, t=0.0)
