"""Small dense linear algebra used by the solvers.

Everything here operates on plain ``numpy`` arrays: matrices are 2-D
arrays, core tensors are N-D arrays in C order (last mode varying fastest)
and a factor set is a list of 2-D arrays with orthonormal columns.

Modes are 0-based throughout the Python API.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .errors import ContractError, ShapeError

ORTHONORMAL_TOL = 1e-10
RANK_RTOL = 1e-12
COMPLETION_SEED = 0x5EED


def householder_qr(A, pivoting: bool = False):
    """Thin QR factorization by Householder reflections.

    Returns ``(Q, R, perm)`` with ``A[:, perm] = Q @ R``, ``Q`` of shape
    ``(m, k)`` with orthonormal columns and ``R`` upper triangular with a
    nonnegative diagonal. With ``pivoting`` the column of largest remaining
    norm is moved forward at each step, so ``|diag(R)|`` is nonincreasing.
    """
    R = np.array(A, dtype=np.float64, copy=True)
    if R.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {R.shape}")
    m, k = R.shape
    if m < k:
        raise ShapeError(f"need rows >= cols, got {m}x{k}")
    perm = np.arange(k)
    reflectors = []
    for j in range(k):
        if pivoting:
            norms = np.einsum("ij,ij->j", R[j:, j:], R[j:, j:])
            p = j + int(np.argmax(norms))
            if p != j:
                R[:, [j, p]] = R[:, [p, j]]
                perm[[j, p]] = perm[[p, j]]
        x = R[j:, j]
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            reflectors.append(None)
            continue
        v = x.copy()
        v[0] += alpha if x[0] >= 0 else -alpha
        v /= np.linalg.norm(v)
        R[j:, j:] -= 2.0 * np.outer(v, v @ R[j:, j:])
        reflectors.append(v)

    Q = np.eye(m, k)
    for j in range(k - 1, -1, -1):
        v = reflectors[j]
        if v is not None:
            Q[j:, :] -= 2.0 * np.outer(v, v @ Q[j:, :])
    R = np.triu(R[:k, :])
    signs = np.where(np.diag(R) < 0, -1.0, 1.0)
    return Q * signs, R * signs[:, None], perm


def _orthonormal_completion(basis, total: int, rng) -> np.ndarray:
    m = basis.shape[0]
    cols = [basis[:, j] for j in range(basis.shape[1])]
    while len(cols) < total:
        v = rng.standard_normal(m)
        for _ in range(2):
            for c in cols:
                v -= (c @ v) * c
        nv = np.linalg.norm(v)
        if nv > 1e-8:
            cols.append(v / nv)
    return np.column_stack(cols) if cols else np.zeros((m, 0))


def qr_orthonormal(A, seed: int = COMPLETION_SEED) -> np.ndarray:
    """Orthonormal basis of the column space of ``A`` (``I x K``, ``I >= K``).

    Full-rank input goes through unpivoted Householder QR with a
    nonnegative ``R`` diagonal. If some ``|R_kk|`` falls below
    ``1e-12 * ||A||`` the factorization is redone with column pivoting; the
    leading ``rank`` columns then span ``col(A)`` and the rest are filled
    with seeded random directions orthogonalized against them.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {A.shape}")
    m, k = A.shape
    if m < k:
        raise ShapeError(f"need rows >= cols for an orthonormal basis, got {m}x{k}")
    scale = np.linalg.norm(A)
    Q, R, _ = householder_qr(A)
    if scale > 0 and np.all(np.abs(np.diag(R)) > RANK_RTOL * scale):
        return Q
    Q, R, _ = householder_qr(A, pivoting=True)
    rank = int(np.count_nonzero(np.abs(np.diag(R)) > RANK_RTOL * scale)) if scale > 0 else 0
    rng = np.random.default_rng(seed)
    return _orthonormal_completion(Q[:, :rank], k, rng)


def jacobi_eigh(M, max_sweeps: int = 60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns ``(w, V)`` with eigenvalues in descending order and matching
    orthonormal eigenvectors in the columns of ``V``.
    """
    A = np.array(M, dtype=np.float64, copy=True)
    n = A.shape[0]
    if A.shape != (n, n):
        raise ShapeError(f"expected a square matrix, got shape {A.shape}")
    V = np.eye(n)
    total = np.linalg.norm(A)
    eps = np.finfo(np.float64).eps
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= eps * total:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if tau >= 0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                cp = A[:, p].copy()
                A[:, p] = c * cp - s * A[:, q]
                A[:, q] = s * cp + c * A[:, q]
                rp = A[p, :].copy()
                A[p, :] = c * rp - s * A[q, :]
                A[q, :] = s * rp + c * A[q, :]
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    w = np.diag(A).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], V[:, order]


def _check_symmetric(M, tol: float = 1e-10) -> np.ndarray:
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ShapeError(f"expected a square matrix, got shape {M.shape}")
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    if M.size and np.max(np.abs(M - M.T)) > tol * scale:
        raise ContractError("matrix is not symmetric")
    return M


def gram_eigvals_desc(M, tol: float = 1e-10) -> np.ndarray:
    """Descending eigenvalues of a symmetric positive semidefinite matrix.

    Tiny negative eigenvalues from roundoff are clamped to zero; anything
    below ``-tol`` (relative to the largest entry) is rejected.
    """
    M = _check_symmetric(M, tol)
    if M.size == 0:
        return np.zeros(0)
    w, _ = jacobi_eigh(0.5 * (M + M.T))
    floor = tol * max(1.0, float(np.max(np.abs(M))))
    if w[-1] < -floor:
        raise ContractError(f"matrix is not positive semidefinite (eigenvalue {w[-1]:.3e})")
    return np.maximum(w, 0.0)


def singular_values(A) -> np.ndarray:
    """Descending singular values, from the eigenvalues of the smaller Gram matrix."""
    A = np.asarray(A, dtype=np.float64)
    gram = A.T @ A if A.shape[0] >= A.shape[1] else A @ A.T
    return np.sqrt(gram_eigvals_desc(gram))


def svd_leading(Y, K: int) -> np.ndarray:
    """The ``K`` leading left singular vectors of ``Y``."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {Y.shape}")
    m, p = Y.shape
    if not 1 <= K <= min(m, p):
        raise ShapeError(f"K={K} must lie in [1, min({m}, {p})]")
    if m <= p:
        _, V = jacobi_eigh(Y @ Y.T)
        return qr_orthonormal(V[:, :K])
    _, V = jacobi_eigh(Y.T @ Y)
    return qr_orthonormal(Y @ V[:, :K])


def nuclear_norm(M) -> float:
    """Sum of singular values."""
    return float(np.sum(singular_values(M)))


def unfold_core(G, n: int) -> np.ndarray:
    """Mode-``n`` unfolding: row ``k`` is the slice ``G[..., k, ...]`` flattened
    with the remaining modes in lexicographic order (last fastest)."""
    G = np.asarray(G)
    if not 0 <= n < G.ndim:
        raise IndexError(f"mode {n} out of range for an order-{G.ndim} core")
    return np.moveaxis(G, n, 0).reshape(G.shape[n], -1)


def refold_core(M, n: int, ranks: Sequence[int]) -> np.ndarray:
    """Inverse of :func:`unfold_core`."""
    ranks = tuple(ranks)
    if not 0 <= n < len(ranks):
        raise IndexError(f"mode {n} out of range for an order-{len(ranks)} core")
    rest = ranks[:n] + ranks[n + 1 :]
    return np.moveaxis(np.asarray(M).reshape((ranks[n],) + rest), 0, n)


def orthonormality_error(U) -> float:
    U = np.asarray(U)
    return float(np.max(np.abs(U.T @ U - np.eye(U.shape[1])))) if U.size else 0.0


def check_factor_set(factors, dims: Optional[Sequence[int]] = None, tol: float = ORTHONORMAL_TOL):
    """Validate shapes and orthonormality of a factor set."""
    if dims is not None and len(factors) != len(dims):
        raise ShapeError(f"{len(factors)} factors for an order-{len(dims)} tensor")
    for n, U in enumerate(factors):
        if U.ndim != 2:
            raise ShapeError(f"factor {n} is not a matrix")
        if dims is not None and U.shape[0] != dims[n]:
            raise ShapeError(f"factor {n} has {U.shape[0]} rows, mode extent is {dims[n]}")
        err = orthonormality_error(U)
        if err > tol:
            raise ContractError(f"factor {n} is not orthonormal (max |UtU - I| = {err:.2e})")
    return factors
