"""Linearized operators around the uniaxial equilibrium Q0 = S2 (nn - I/3).

The moment-map linearization at the equilibrium acts on Q by three scalar
coefficients xi_i; its inverse uses psi_i. The bulk-force linearization
H_n = (inverse) - alpha annihilates in-plane director rotations (the slow
manifold) and is coercive on the 3-dimensional complement. J and U are the
linearizations of the closure friction operator and of the fourth moment.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .equilibrium import PhaseConstants, phase_constants
from .sphere import BinghamMoments
from .tensors import Tensor4Sym, Tensor6Sym, from_matrix, to_matrix

__all__ = [
    "DirectorContext", "equilibrium_m4", "apply_qn", "apply_qn_inverse",
    "apply_hn", "project_in", "project_out", "apply_j", "apply_u",
    "out_space_basis", "in_space_basis", "coercivity_constant",
    "relaxation_rates",
]

_I3 = np.eye(3)


def equilibrium_m4(constants: PhaseConstants, n):
    """Closed-form fourth moment of the equilibrium Bingham density."""
    n = np.asarray(n, dtype=float)
    s2, s4 = constants.S2, constants.S4
    nn = np.outer(n, n)
    n4 = np.einsum("i,j,k,l->ijkl", n, n, n, n)
    nd = (np.einsum("ij,kl->ijkl", nn, _I3) + np.einsum("ik,jl->ijkl", nn, _I3)
          + np.einsum("il,jk->ijkl", nn, _I3) + np.einsum("jk,il->ijkl", nn, _I3)
          + np.einsum("jl,ik->ijkl", nn, _I3) + np.einsum("kl,ij->ijkl", nn, _I3))
    dd = (np.einsum("ij,kl->ijkl", _I3, _I3) + np.einsum("ik,jl->ijkl", _I3, _I3)
          + np.einsum("il,jk->ijkl", _I3, _I3))
    dense = s4 * n4 + (s2 - s4) / 7.0 * nd + (s4 / 35.0 - 2.0 * s2 / 21.0 + 1.0 / 15.0) * dd
    return Tensor4Sym.from_dense(dense, check=False)


@dataclass(frozen=True)
class DirectorContext:
    """Equilibrium data around one director n."""

    n: np.ndarray
    constants: PhaseConstants
    M4: Tensor4Sym

    @classmethod
    def build(cls, n, constants=None, alpha=None, L1=1.0, L2=0.0):
        n = np.asarray(n, dtype=float)
        nrm = np.linalg.norm(n)
        if abs(nrm - 1.0) > 1e-12:
            raise ValueError("director must be a unit vector")
        if constants is None:
            if alpha is None:
                raise ValueError("give either constants or alpha")
            constants = phase_constants(alpha, L1, L2)
        return cls(n / nrm, constants, equilibrium_m4(constants, n / nrm))

    @property
    def q0_matrix(self):
        return self.constants.S2 * (np.outer(self.n, self.n) - _I3 / 3.0)

    @property
    def b0_matrix(self):
        return self.constants.eta * (np.outer(self.n, self.n) - _I3 / 3.0)


def _as_mat(q):
    q = np.asarray(q, dtype=float)
    if q.shape[-1] == 5 and q.ndim >= 1 and q.shape[-1] != 3:
        return to_matrix(q)
    return q


def _coeff_apply(n, c_nn, c_mix, c_id, qmat):
    """c_nn (nn - I/3)(nn:Q) + c_mix (nn.Q + Q.nn - 2/3 I (nn:Q)) + c_id Q."""
    nn = np.outer(n, n)
    nnq = np.einsum("ij,...ij->...", nn, qmat)
    mix = np.einsum("ik,...kj->...ij", nn, qmat) + np.einsum("...ik,kj->...ij", qmat, nn)
    return (c_nn * (nn - _I3 / 3.0) * nnq[..., None, None]
            + c_mix * (mix - (2.0 / 3.0) * _I3 * nnq[..., None, None])
            + c_id * qmat)


def apply_qn(ctx: DirectorContext, q):
    """Moment-map linearization at the equilibrium, in closed form."""
    c = ctx.constants
    return _coeff_apply(ctx.n, c.xi1, c.xi2, c.xi3, _as_mat(q))


def apply_qn_inverse(ctx: DirectorContext, q):
    """Inverse of apply_qn on Q, in closed form."""
    c = ctx.constants
    return _coeff_apply(ctx.n, c.psi1, c.psi2, c.psi3, _as_mat(q))


def apply_hn(ctx: DirectorContext, q):
    """Linearized bulk force: apply_qn_inverse(Q) - alpha Q."""
    c = ctx.constants
    qm = _as_mat(q)
    nn = np.outer(ctx.n, ctx.n)
    nnq = np.einsum("ij,...ij->...", nn, qm)
    mix = np.einsum("ik,...kj->...ij", nn, qm) + np.einsum("...ik,kj->...ij", qm, nn)
    return (c.psi1 * (nn - _I3 / 3.0) * nnq[..., None, None]
            + c.psi2 * (-qm + mix - (2.0 / 3.0) * _I3 * nnq[..., None, None]))


def project_in(n, q):
    """Projection onto the director-rotation plane: nn.Q + Q.nn - 2(Q:nn)nn."""
    n = np.asarray(n, dtype=float)
    qm = _as_mat(q)
    nn = np.outer(n, n)
    nnq = np.einsum("ij,...ij->...", nn, qm)
    mix = np.einsum("ik,...kj->...ij", nn, qm) + np.einsum("...ik,kj->...ij", qm, nn)
    return mix - 2.0 * nnq[..., None, None] * nn


def project_out(n, q):
    """Complementary projection Q - project_in(n, Q)."""
    return _as_mat(q) - project_in(n, q)


def _moments_pair(obj):
    """(Q0 matrix, M4) from a BinghamMoments or a DirectorContext."""
    if isinstance(obj, DirectorContext):
        return obj.q0_matrix, obj.M4
    if isinstance(obj, BinghamMoments):
        return to_matrix(obj.q_of_b), obj.M4
    raise TypeError("expected BinghamMoments or DirectorContext")


def apply_j(obj, a):
    """Symmetrized closure operator J(A) = (M(A) + M(A)^T) / 2."""
    q0, m4 = _moments_pair(obj)
    a = np.asarray(a, dtype=float)
    at = np.swapaxes(a, -1, -2)
    sym = 0.5 * (a + at)
    return sym / 3.0 + 0.5 * (at @ q0 + q0 @ a) - m4.contract2(sym)


def apply_u(moments: BinghamMoments, b):
    """Fourth-moment linearization U(B) = M6 : B - (Q:B) M4."""
    bmat = _as_mat(b)
    qb = float(np.einsum("ij,ij->", to_matrix(moments.q_of_b), bmat))
    m6b = moments.M6.contract2(bmat)
    return Tensor4Sym(m6b.components - qb * moments.M4.components)


# ---------------------------------------------------------------------------
# explicit bases and spectral diagnostics
# ---------------------------------------------------------------------------

def _frame(n):
    """Two unit vectors completing n to an orthonormal right-handed triple."""
    n = np.asarray(n, dtype=float)
    a = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, a)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    return e1, e2


def in_space_basis(n):
    """Orthonormal basis of the rotation plane {n p + p n : p . n = 0}."""
    e1, e2 = _frame(n)
    n = np.asarray(n, dtype=float)
    b1 = (np.outer(n, e1) + np.outer(e1, n)) / np.sqrt(2.0)
    b2 = (np.outer(n, e2) + np.outer(e2, n)) / np.sqrt(2.0)
    return np.stack([b1, b2])


def out_space_basis(n):
    """Orthonormal basis of the complement of the rotation plane in Q."""
    e1, e2 = _frame(n)
    n = np.asarray(n, dtype=float)
    b0 = np.sqrt(1.5) * (np.outer(n, n) - _I3 / 3.0)
    b1 = (np.outer(e1, e1) - np.outer(e2, e2)) / np.sqrt(2.0)
    b2 = (np.outer(e1, e2) + np.outer(e2, e1)) / np.sqrt(2.0)
    return np.stack([b0, b1, b2])


def _matrix_on_basis(op, basis):
    return np.array([[np.tensordot(basis[a], op(basis[b])) for b in range(len(basis))]
                     for a in range(len(basis))])


def coercivity_constant(ctx: DirectorContext):
    """Measured Rayleigh minimum of H_n on the out space (positive)."""
    basis = out_space_basis(ctx.n)
    h = _matrix_on_basis(lambda q: apply_hn(ctx, q), basis)
    return float(np.linalg.eigvalsh(0.5 * (h + h.T))[0])


def relaxation_rates(ctx: DirectorContext):
    """Eigenvalues of 4 J H on the out space (the stiff bulk rates)."""
    basis = out_space_basis(ctx.n)
    h = _matrix_on_basis(lambda q: apply_hn(ctx, q), basis)
    j = _matrix_on_basis(lambda q: apply_j(ctx, q), basis)
    rates = np.linalg.eigvals(4.0 * j @ h)
    return np.sort(rates.real)
