"""Inversion of the Bingham moment map Q = Q(B) and the closure operator.

Every physical Q (eigenvalues strictly inside (-1/3, 2/3)) has exactly one
Lagrange tensor B whose Bingham density reproduces it. B shares the
eigenframe of Q, so the 5-dimensional inversion reduces to a damped Newton
ascent in the two independent eigenvalues of B; the lab-frame tensor is
recovered by rotation. The ascent objective B:Q - ln Z(B) is strictly
concave, which makes the damped iteration globally convergent.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad as _quad1d

from . import _kernels
from .sphere import SphereQuadrature, BinghamMoments, build_quadrature
from .tensors import (
    QTensor, QBASIS, eig_sym3, from_matrix, is_physical, to_matrix, qnorm,
)

__all__ = [
    "ClosureSolveReport", "ClosureJacobian", "PhysicalityError", "bingham_map",
    "bingham_map_batch", "BatchClosureResult", "closure_jacobian", "apply_mq",
    "spread_bound", "m4_contract_frame", "mq_apply_frame", "EigenMemo",
]

DEFAULT_TOL = 1e-11
MAX_ITER = 50
ALPHA_REF = 5.0  # initial guess B = ALPHA_REF * Q, exact at nematic equilibria


class PhysicalityError(ValueError):
    """Q left the admissible eigenvalue range for the requested margin."""


@dataclass(frozen=True)
class ClosureSolveReport:
    """Result of one moment-map inversion."""

    B: np.ndarray            # qvec of the Lagrange tensor
    residual: float          # |Q(B) - Q_target|_F
    iterations: int
    used_damping: bool
    b_eigenvalues: np.ndarray  # (3,) in the frame of Q (ascending Q order)
    q_eigenvalues: np.ndarray  # (3,) ascending
    spread: float              # b_max - b_min

    @property
    def tensor(self):
        return QTensor(self.B)


@dataclass(frozen=True)
class ClosureJacobian:
    """grad_B Q(B) as a 5x5 matrix in the orthonormal basis of Q."""

    matrix: np.ndarray  # (5, 5)

    def smallest_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))[0])


class EigenMemo:
    """Optional warm-start cache keyed by quantized eigenvalue pairs.

    Stores converged diagonal solutions on a 1e-6 eigenvalue grid and hands
    them out as Newton initial guesses. Results are always polished to the
    requested tolerance, so the cache can only change iteration counts,
    never the answer beyond it. Plain dict writes keep this safe under the
    GIL with last-writer-wins semantics.
    """

    def __init__(self, quantum=1e-6, max_entries=200_000):
        self.quantum = float(quantum)
        self.max_entries = int(max_entries)
        self._store = {}

    def key(self, q_eigs):
        g = self.quantum
        return (int(round(q_eigs[0] / g)), int(round(q_eigs[1] / g)))

    def get(self, q_eigs):
        return self._store.get(self.key(q_eigs))

    def put(self, q_eigs, b_diag):
        if len(self._store) >= self.max_entries:
            self._store.clear()
        self._store[self.key(q_eigs)] = np.array(b_diag, dtype=float)


_NODE_CACHE = {}


def _nodes(n_x, n_phi):
    key = (int(n_x), int(n_phi))
    got = _NODE_CACHE.get(key)
    if got is None:
        got = _kernels.reduced_nodes(*key)
        _NODE_CACHE[key] = got
    return got


def _nodes_for(quad, spread_estimate):
    """Reduced-frame node counts: at least the rule resolution, more if the
    exponent range demands it."""
    n_x, n_phi = _kernels.nodes_for_spread(spread_estimate)
    if quad is not None:
        n_x = max(n_x, quad.n_polar)
        n_phi = max(n_phi, quad.n_azimuthal // 2)
    return _nodes(n_x, n_phi)


@dataclass(frozen=True)
class BatchClosureResult:
    """Vectorized closure solves for a batch of Q tensors."""

    b_diag: np.ndarray     # (N, 3) eigenvalues of B in the frame of Q
    rotation: np.ndarray   # (N, 3, 3) eigenvector columns shared by Q and B
    q_eigs: np.ndarray     # (N, 3) eigenvalues of Q, ascending
    log_z: np.ndarray      # (N,)
    second: np.ndarray     # (N, 3) <m_i^2> in the eigenframe
    pair: np.ndarray       # (N, 3, 3) <m_i^2 m_j^2> in the eigenframe
    residual: np.ndarray   # (N,)
    iterations: np.ndarray
    used_damping: np.ndarray

    @property
    def B5(self):
        """Lab-frame qvecs of B."""
        bmat = np.einsum("nik,nk,njk->nij", self.rotation, self.b_diag, self.rotation)
        return from_matrix(bmat)

    @property
    def spread(self):
        return self.b_diag.max(axis=1) - self.b_diag.min(axis=1)


def bingham_map_batch(q5, delta=0.0, tol=DEFAULT_TOL, quad=None, b_warm5=None,
                      maxit=MAX_ITER, check_physical=True):
    """Invert the moment map for a batch of qvecs (N, 5).

    b_warm5 may carry lab-frame warm starts (N, 5) from a previous solve;
    they are rotated into the current eigenframe of each Q.
    """
    q5 = np.asarray(q5, dtype=float).reshape(-1, 5)
    w, rot = eig_sym3(to_matrix(q5))
    margin = np.minimum(w[:, 0] + 1.0 / 3.0, 2.0 / 3.0 - w[:, 2])
    if check_physical and np.any(margin < delta):
        k = int(np.argmin(margin))
        raise PhysicalityError(
            f"non-physical Q in batch (worst margin {margin[k]:.3e} < "
            f"delta={delta:.3e} at index {k}); eigenvalues must stay in "
            f"[-1/3 + delta, 2/3 - delta]")

    if b_warm5 is not None:
        bmat = to_matrix(np.asarray(b_warm5, dtype=float).reshape(-1, 5))
        b0 = np.einsum("nki,nkl,nlj->nij", rot, bmat, rot)
        b0 = np.stack([b0[:, 0, 0], b0[:, 1, 1], b0[:, 2, 2]], axis=1)
    else:
        b0 = ALPHA_REF * w
    b0 = b0 - b0.mean(axis=1, keepdims=True)

    # spread estimate for the node policy: current guess plus slack, re-run
    # once with upgraded nodes if the converged solution leaves the range
    est = max(8.0, 1.3 * float((b0.max(1) - b0.min(1)).max()) + 6.0)
    for _attempt in range(3):
        nodes = _nodes_for(quad, est)
        b, res, iters, damped, lnz, second, pair = _kernels.newton_batch(
            w, b0, nodes, tol=tol, maxit=maxit)
        spread = float((b.max(1) - b.min(1)).max()) if b.size else 0.0
        if spread <= est or not np.all(np.isfinite(res)):
            break
        est = 1.3 * spread
        b0 = b
    if not np.all(res <= tol):
        k = int(np.argmax(res))
        raise RuntimeError(
            f"closure Newton failed to converge: worst residual {res[k]:.3e} "
            f"after {int(iters[k])} iterations (tol {tol:.1e}); "
            f"q eigenvalues {w[k]}")
    return BatchClosureResult(b, rot, w, lnz, second, pair, res, iters, damped)


def bingham_map(Q, delta=0.0, tol=DEFAULT_TOL, quad=None, memo=None,
                maxit=MAX_ITER):
    """Compute the unique B with Q(B) = Q for one physical tensor.

    Raises ValueError for non-physical input and RuntimeError on
    non-convergence (with the last residual in the message).
    """
    q5 = Q.q if isinstance(Q, QTensor) else np.asarray(Q, dtype=float).reshape(5)
    if tol < 1e-13:
        raise ValueError("tol below 1e-13 is not resolvable by the quadrature")
    if not is_physical(q5, delta):
        raise PhysicalityError(
            "Q is outside the physical set with the requested margin: "
            f"eigenvalues must lie in [-1/3 + {delta:.3g}, 2/3 - {delta:.3g}]")

    warm5 = None
    if memo is not None:
        w, rot = eig_sym3(to_matrix(q5))
        b_diag = memo.get(w[:2])
        if b_diag is not None:
            warm5 = from_matrix(np.einsum("ik,k,jk->ij", rot, b_diag, rot))[None, :]

    res = bingham_map_batch(q5[None, :], delta=delta, tol=tol, quad=quad,
                            b_warm5=warm5, maxit=maxit)
    if memo is not None:
        memo.put(res.q_eigs[0, :2], res.b_diag[0])
    b5 = res.B5[0]
    return ClosureSolveReport(
        B=b5,
        residual=float(res.residual[0]),
        iterations=int(res.iterations[0]),
        used_damping=bool(res.used_damping[0]),
        b_eigenvalues=res.b_diag[0].copy(),
        q_eigenvalues=res.q_eigs[0].copy(),
        spread=float(res.spread[0]),
    )


# ---------------------------------------------------------------------------
# closure operator and Jacobian
# ---------------------------------------------------------------------------

def apply_mq(moments: BinghamMoments, A):
    """M_Q(A) = (1/3) A + Q . A - A : M4 for an arbitrary 3x3 matrix A."""
    A = np.asarray(A, dtype=float)
    Qm = to_matrix(moments.q_of_b)
    return A / 3.0 + Qm @ A - moments.M4.contract2(0.5 * (A + np.swapaxes(A, -1, -2)))


def closure_jacobian(B, quad: SphereQuadrature):
    """grad_B Q(B) in the orthonormal basis of Q, entry (a,b) = <dQ E_b, E_a>.

    Uses the covariance form: <dQ(B) E, E'> = <(mm:E)(mm:E')>_f - (Q:E)(Q:E').
    """
    q5 = B.q if isinstance(B, QTensor) else np.asarray(B, dtype=float).reshape(5)
    Bmat = to_matrix(q5)
    m = quad.nodes
    qf = np.einsum("ni,ij,nj->n", m, Bmat, m)
    shift = qf.max()
    ew = quad.weights * np.exp(qf - shift)
    f = ew / ew.sum()
    proj = np.einsum("ni,aij,nj->na", m, QBASIS, m)   # mm : E_a per node
    cov = np.einsum("n,na,nb->ab", f, proj, proj)
    mean = np.einsum("n,na->a", f, proj)
    return ClosureJacobian(cov - np.outer(mean, mean))


# ---------------------------------------------------------------------------
# eigenframe contraction helpers (shared with the field solver)
# ---------------------------------------------------------------------------

def m4_contract_frame(rotation, pair, A):
    """(M4 : A) in the lab frame from eigenframe pair moments.

    rotation: (..., 3, 3), pair: (..., 3, 3) with pair[i, j] = <m_i^2 m_j^2>,
    A: (..., 3, 3) arbitrary (only its symmetric part contributes).
    """
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    rt = np.swapaxes(rotation, -1, -2)
    at = rt @ A @ rotation
    out = 2.0 * pair * at
    diag = np.einsum("...kk->...k", at)
    d = (pair @ diag[..., None])[..., 0]
    out[..., 0, 0] = d[..., 0]
    out[..., 1, 1] = d[..., 1]
    out[..., 2, 2] = d[..., 2]
    return rotation @ out @ rt


def mq_apply_frame(q_mat, rotation, pair, A):
    """M_Q(A) batched from eigenframe moments: A/3 + Q.A - A:M4."""
    return A / 3.0 + q_mat @ A - m4_contract_frame(rotation, pair, A)


# ---------------------------------------------------------------------------
# a priori bound on the eigenvalue spread of B
# ---------------------------------------------------------------------------

def spread_bound(delta):
    """Spread bound Lambda(delta) = (4/delta) ln(2 meas(V) / (delta meas(U))).

    V is the polar-cap pair {m3^2 > delta/2}; U is the equatorial patch
    {m3^2 < delta/8, m2^2 < delta/4}. Both eigenvalue orderings in the
    underlying argument lead to congruent patches, so a single formula
    covers them.
    """
    if not 0.0 < delta < 1.0 / 3.0:
        raise ValueError("delta must lie in (0, 1/3)")
    a = np.sqrt(delta / 8.0)       # |m3| extent of U
    b = np.sqrt(delta / 4.0)       # |m2| extent of U
    meas_v = 4.0 * np.pi * (1.0 - np.sqrt(delta / 2.0))

    def arc(x):
        return 4.0 * np.arcsin(min(1.0, b / np.sqrt(1.0 - x * x)))

    meas_u, _ = _quad1d(arc, -a, a, epsabs=1e-13, epsrel=1e-12)
    return float(4.0 / delta * np.log(2.0 * meas_v / (delta * meas_u)))
