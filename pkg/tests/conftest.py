import math

import numpy as np
import pytest

from hoqri.sparse_tensor import SparseTensor


def random_sparse(rng, dims, nnz):
    """Random tensor with up to ``nnz`` entries (duplicates get summed)."""
    idx = np.stack([rng.integers(0, d, size=nnz) for d in dims], axis=1)
    return SparseTensor(idx, rng.standard_normal(nnz), dims)


def random_orthonormal(rng, rows, cols):
    q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
    return q


def random_instance(rng, dims, ranks, nnz):
    X = random_sparse(rng, dims, nnz)
    return X, [random_orthonormal(rng, d, k) for d, k in zip(dims, ranks)]


# Dense oracles: plain tensordot on the densified tensor, no shared code
# with the sparse kernels.

def dense_multi_mode(T, mats, skip=None):
    """``T x_v mats[v]^T`` over all modes except ``skip``."""
    out = T
    for v, U in enumerate(mats):
        if v == skip:
            continue
        out = np.moveaxis(np.tensordot(out, U, axes=([v], [0])), -1, v)
    return out


def dense_unfold(T, n):
    return np.moveaxis(T, n, 0).reshape(T.shape[n], -1)


def dense_core(X, factors):
    return dense_multi_mode(X.todense(), factors)


def dense_Y(X, factors, n):
    return dense_unfold(dense_multi_mode(X.todense(), factors, skip=n), n)


def dense_A(X, factors, n):
    G = dense_core(X, factors)
    return dense_Y(X, factors, n) @ dense_unfold(G, n).T


def reconstruct(core, factors):
    out = core
    for n, U in enumerate(factors):
        out = np.moveaxis(np.tensordot(out, U, axes=([n], [1])), -1, n)
    return out


def svd_subspace_distance(U, V):
    s = np.linalg.svd(U.T @ V, compute_uv=False)
    return 2 * U.shape[1] - 2 * s.sum()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
