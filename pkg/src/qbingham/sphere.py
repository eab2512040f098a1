"""Quadrature on the unit sphere and moments of Bingham densities.

The density is f_B(m) = exp(B : mm) / Z on S^2. This module evaluates the
partition function, the traceless second moment, and the full fourth and
sixth moment tensors with a tensor-product rule: Gauss-Legendre in
cos(theta) times a uniform (trapezoid) rule in the azimuth, which is
spectrally accurate for these smooth periodic integrands.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss

from .tensors import (
    QTensor, Tensor4Sym, Tensor6Sym, eig_sym3, from_matrix, to_matrix,
)
from ._kernels import EXPONENT_BUDGET

__all__ = [
    "SphereQuadrature", "BinghamMoments", "build_quadrature",
    "bingham_moments", "log_partition", "a_integral", "a_integrals",
]


@dataclass(frozen=True)
class SphereQuadrature:
    """Nodes and weights integrating over S^2 (weights sum to 4 pi)."""

    nodes: np.ndarray    # (M, 3) unit vectors
    weights: np.ndarray  # (M,)
    n_polar: int
    n_azimuthal: int
    exact_degree: int    # spherical polynomials up to this degree are exact


def build_quadrature(n_polar=64, n_azimuthal=128):
    """Product Gauss-Legendre x trapezoid rule on the sphere."""
    if n_polar < 8 or n_azimuthal < 16:
        raise ValueError("quadrature needs n_polar >= 8, n_azimuthal >= 16")
    x, wx = leggauss(int(n_polar))
    phi = 2.0 * np.pi * np.arange(int(n_azimuthal)) / int(n_azimuthal)
    st = np.sqrt(1.0 - x**2)
    mx = np.outer(st, np.cos(phi))
    my = np.outer(st, np.sin(phi))
    mz = np.outer(x, np.ones_like(phi))
    nodes = np.stack([mx.ravel(), my.ravel(), mz.ravel()], axis=1)
    weights = np.outer(wx * (2.0 * np.pi / int(n_azimuthal)), np.ones_like(phi)).ravel()
    degree = int(min(2 * n_polar - 1, n_azimuthal - 1))
    return SphereQuadrature(nodes, weights, int(n_polar), int(n_azimuthal), degree)


@dataclass(frozen=True)
class BinghamMoments:
    """Partition function and moment tensors of one Bingham density."""

    Z: float
    q_of_b: np.ndarray      # qvec of int (mm - I/3) f dm
    M4: Tensor4Sym
    M6: Tensor6Sym
    B: np.ndarray           # the qvec of B that generated the density

    @property
    def log_Z(self):
        return float(np.log(self.Z))


def _as_qvec(B):
    if isinstance(B, QTensor):
        return B.q
    B = np.asarray(B, dtype=float)
    if B.shape == (3, 3):
        return from_matrix(B)
    return B


def _check_budget(Bmat):
    w, _ = eig_sym3(Bmat)
    spread = float(w[..., 2] - w[..., 0])
    if spread > EXPONENT_BUDGET:
        raise OverflowError(
            f"eigenvalue spread of B is {spread:.1f}, beyond the exponent "
            f"budget {EXPONENT_BUDGET:.0f}")
    return spread


def log_partition(B, quad):
    """ln Z(B) = ln int exp(B:mm) dm, overflow-stabilized."""
    Bmat = to_matrix(_as_qvec(B))
    _check_budget(Bmat)
    qf = np.einsum("ni,ij,nj->n", quad.nodes, Bmat, quad.nodes)
    shift = qf.max()
    return float(np.log(np.sum(quad.weights * np.exp(qf - shift))) + shift)


def bingham_moments(B, quad):
    """Z, traceless second moment, and M4, M6 of the Bingham density of B."""
    q5 = _as_qvec(B)
    Bmat = to_matrix(q5)
    _check_budget(Bmat)
    m = quad.nodes
    qf = np.einsum("ni,ij,nj->n", m, Bmat, m)
    shift = qf.max()
    ew = quad.weights * np.exp(qf - shift)
    z0 = ew.sum()
    f = ew / z0
    second = np.einsum("n,ni,nj->ij", f, m, m)
    q_of_b = from_matrix(second - np.eye(3) / 3.0)
    m4 = np.einsum("n,ni,nj,nk,nl->ijkl", f, m, m, m, m, optimize=True)
    m6 = np.einsum("n,ni,nj,nk,nl,np,nq->ijklpq", f, m, m, m, m, m, m, optimize=True)
    Z = float(z0 * np.exp(shift))
    return BinghamMoments(Z, q_of_b, Tensor4Sym.from_dense(m4, check=False),
                          Tensor6Sym.from_dense(m6, check=False), q5.copy())


# ---------------------------------------------------------------------------
# axisymmetric 1D integrals A_k = int_{-1}^{1} x^k exp(eta x^2) dx
# ---------------------------------------------------------------------------

_GL200 = leggauss(200)


def a_integral(eta, k):
    """A_k(eta) by 200-point Gauss-Legendre with max-shift stabilization."""
    if k < 0 or k % 2 != 0 or k > 6:
        raise ValueError("k must be one of 0, 2, 4, 6")
    eta = float(eta)
    if abs(eta) > EXPONENT_BUDGET:
        raise OverflowError(f"|eta| = {abs(eta):.1f} beyond exponent budget")
    x, w = _GL200
    shift = max(eta, 0.0)
    val = np.sum(w * x**k * np.exp(eta * x**2 - shift))
    return float(val * np.exp(shift))


def a_integrals(eta):
    """(A_0, A_2, A_4, A_6) in one pass."""
    eta = float(eta)
    if abs(eta) > EXPONENT_BUDGET:
        raise OverflowError(f"|eta| = {abs(eta):.1f} beyond exponent budget")
    x, w = _GL200
    shift = max(eta, 0.0)
    e = w * np.exp(eta * x**2 - shift)
    x2 = x * x
    vals = [e.sum(), (e * x2).sum(), (e * x2 * x2).sum(), (e * x2 * x2 * x2).sum()]
    return tuple(float(v * np.exp(shift)) for v in vals)
