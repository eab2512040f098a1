"""Homogeneous Ericksen-Leslie director dynamics and the small-Deborah
convergence experiment.

With no spatial gradients the director obeys

    dn/dt = W n + zeta (D n - (n.D n) n),    W = (kappa - kappa^T)/2,

the explicit form of the torque balance n x (gamma1 N + gamma2 D n) = 0.
For zeta > 1 a simple shear aligns n at the Leslie angle
theta_L = arccos(1/zeta)/2; for zeta <= 1 the director tumbles.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import HomState, default_hom_dt, step_homogeneous
from .equilibrium import PhaseConstants, phase_constants
from .tensors import biaxiality, eig_sym3, to_matrix, uniaxial

__all__ = [
    "DirectorState", "LeslieAlignment", "director_rhs", "step_director",
    "leslie_angle", "extract_director", "shear_angle_rate",
    "SmallDeRow", "ConvergenceTable", "small_de_experiment",
]


@dataclass(frozen=True)
class DirectorState:
    n: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class LeslieAlignment:
    """Steady shear alignment: the angle when it exists, else tumbling."""

    theta: float | None
    tumbling: bool


def director_rhs(n, kappa, constants: PhaseConstants):
    """dn/dt for the homogeneous director equation; orthogonal to n."""
    n = np.asarray(n, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    omega = 0.5 * (kappa - kappa.T)
    d = 0.5 * (kappa + kappa.T)
    dn = omega @ n + constants.zeta * (d @ n - (n @ d @ n) * n)
    return dn - (dn @ n) * n


def step_director(state: DirectorState, kappa, constants, dt):
    """RK4 step with renormalization (keeps |n| = 1 exactly)."""
    n = state.n

    def f(m):
        return director_rhs(m, kappa, constants)

    k1 = f(n)
    k2 = f(n + 0.5 * dt * k1)
    k3 = f(n + 0.5 * dt * k2)
    k4 = f(n + dt * k3)
    n1 = n + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    n1 /= np.linalg.norm(n1)
    return DirectorState(n1, state.t + dt)


def leslie_angle(zeta):
    """Shear alignment angle arccos(1/zeta)/2 for zeta >= 1, else tumbling."""
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    if zeta < 1.0:
        return LeslieAlignment(None, True)
    theta = 0.5 * np.arccos(1.0 / zeta)
    return LeslieAlignment(float(theta), zeta <= 1.0)


def shear_angle_rate(theta, zeta, rate=1.0):
    """In-plane angle velocity under simple shear: (zeta cos 2t - 1) rate/2."""
    return 0.5 * rate * (zeta * np.cos(2.0 * theta) - 1.0)


def extract_director(q5, prev=None, gap_tol=1e-8):
    """Principal eigenvector of Q, sign-aligned with prev when given.

    Returns (n, degenerate_flag); the flag marks a top eigenvalue gap below
    gap_tol relative to the eigenvalue scale.
    """
    w, r = eig_sym3(to_matrix(np.asarray(q5, dtype=float)))
    n = r[:, 2]
    scale = np.abs(w).max() + 1e-300
    flag = (w[2] - w[1]) / scale < gap_tol
    if prev is not None and float(n @ prev) < 0.0:
        n = -n
    return n, bool(flag)


def angle_between(a, b):
    """Director distance arccos(|a.b|), quotienting the n -> -n symmetry."""
    return float(np.arccos(min(1.0, abs(float(np.dot(a, b))))))


# ---------------------------------------------------------------------------
# small-Deborah convergence experiment
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SmallDeRow:
    de: float
    sup_angle_err: float
    sup_biaxiality: float
    running_slope: float | None
    error: str | None = None


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple
    fitted_slope: float | None
    alpha: float
    zeta: float
    theta_leslie: float | None

    def as_records(self):
        return [
            {
                "De": r.de,
                "sup_angle_err": r.sup_angle_err,
                "sup_biaxiality": r.sup_biaxiality,
                "fitted_slope_running": r.running_slope,
                "error": r.error or "",
            }
            for r in self.rows
        ]


def small_de_experiment(params, de_list, kappa, t_final, n0=None,
                        constants=None, steps_per_de=None):
    """Compare the Q-tensor trajectory against the director ODE per De.

    Both start from the same director (Q on the uniaxial slow manifold at
    the equilibrium order parameter) under the same imposed gradient; per
    De the sup over time of the director angle error and of the biaxiality
    is recorded, and the log-log slope of the error is fitted.
    """
    de_list = list(de_list)
    if any(b >= a for a, b in zip(de_list, de_list[1:])):
        raise ValueError("de_list must be strictly decreasing")
    if constants is None:
        constants = phase_constants(params.alpha, params.L1, params.L2)
    if n0 is None:
        theta0 = 1.0
        n0 = np.array([np.cos(theta0), np.sin(theta0), 0.0])
    n0 = np.asarray(n0, dtype=float) / np.linalg.norm(n0)

    rows = []
    errs = {}
    from dataclasses import replace as _replace

    for de in de_list:
        p = _replace(params, de=float(de))
        try:
            dt = default_hom_dt(p, constants)
            n_steps = int(np.ceil(t_final / dt)) if steps_per_de is None else steps_per_de
            dt = t_final / n_steps
            q0 = uniaxial(constants.S2, n0)
            hom = HomState(q5=q0, kappa=np.asarray(kappa, dtype=float))
            dstate = DirectorState(n0)
            prev = n0
            sup_err = 0.0
            sup_biax = 0.0
            for _ in range(n_steps):
                hom = step_homogeneous(hom, dt, p)
                dstate = step_director(dstate, kappa, constants, dt)
                ndir, _flag = extract_director(hom.q5, prev)
                prev = ndir
                sup_err = max(sup_err, angle_between(ndir, dstate.n))
                sup_biax = max(sup_biax, float(biaxiality(hom.q5)))
            errs[de] = sup_err
            slope = None
            done = [r for r in rows if r.error is None]
            if done:
                prev_row = done[-1]
                slope = float(np.log(prev_row.sup_angle_err / sup_err)
                              / np.log(prev_row.de / de))
            rows.append(SmallDeRow(de, sup_err, sup_biax, slope))
        except Exception as exc:  # row-level failure, table still emitted
            rows.append(SmallDeRow(de, np.nan, np.nan, None, f"{type(exc).__name__}: {exc}"))

    good = [r for r in rows if r.error is None]
    slope = None
    if len(good) >= 2:
        x = np.log([r.de for r in good])
        y = np.log([r.sup_angle_err for r in good])
        slope = float(np.polyfit(x, y, 1)[0])
    align = leslie_angle(constants.zeta)
    return ConvergenceTable(tuple(rows), slope, params.alpha, constants.zeta,
                            align.theta)
