import numpy as np
import pytest

from qbingham.tensors import from_matrix, sym_traceless


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_qvec(rng, n=None, scale=0.3):
    """Random elements of Q, batched when n is given."""
    shape = (3, 3) if n is None else (n, 3, 3)
    return from_matrix(sym_traceless(rng.normal(size=shape) * scale))


def random_physical(rng, n, margin):
    """Random physical Q with the given eigenvalue margin, as (n, 5)."""
    eigs = np.empty((n, 2))
    k = 0
    while k < n:
        cand = rng.uniform(-1 / 3 + margin, 2 / 3 - margin, size=(2 * n, 2))
        q3 = -cand.sum(axis=1)
        good = cand[(q3 >= -1 / 3 + margin) & (q3 <= 2 / 3 - margin)]
        take = min(n - k, len(good))
        eigs[k:k + take] = good[:take]
        k += take
    full = np.concatenate([eigs, -eigs.sum(axis=1, keepdims=True)], axis=1)
    rots = haar_rotations(rng, n)
    mats = np.einsum("nik,nk,njk->nij", rots, full, rots)
    return from_matrix(mats)


def haar_rotations(rng, n):
    a = rng.normal(size=(n, 3, 3))
    q, r = np.linalg.qr(a)
    sgn = np.sign(np.einsum("nii->ni", r))
    sgn[sgn == 0] = 1.0
    q = q * sgn[:, None, :]
    det = np.linalg.det(q)
    q[det < 0, :, 2] *= -1.0
    return q
