"""Sparse tensor kernels: TTMc to a dense core and the TTMcTC product.

``ttmctc_*`` compute ``A = Y_(n) G_(n)^T`` where ``Y = X x_{-n} {U^T}``,
without ever forming ``Y``. ``ttmc_unfold_dense`` does form ``Y_(n)`` and is
kept for the HOOI baseline and as a test oracle at desk scale.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dense_core import unfold_core, refold_core
from .errors import CapacityError, ShapeError
from .sparse_tensor import DEFAULT_DENSE_CAP, SparseTensor

# Minimum entries per chunk for the matrix variant's sparse mode product;
# the default chunk grows to I_n * K_n so transients stay O(I_n * K_n).
MATRIX_CHUNK = 1 << 16
# Upper bound on values in one Kronecker-row block of the element-wise path.
ROW_BLOCK_VALUES = 1 << 21


def _check_factors(X: SparseTensor, factors) -> list:
    if len(factors) != X.order:
        raise ShapeError(f"{len(factors)} factors for an order-{X.order} tensor")
    out = []
    for n, U in enumerate(factors):
        U = np.asarray(U, dtype=np.float64)
        if U.ndim != 2 or U.shape[0] != X.shape[n]:
            raise ShapeError(
                f"factor {n} has shape {U.shape}, expected ({X.shape[n]}, K)"
            )
        out.append(U)
    return out


def _check_mode(X: SparseTensor, n: int) -> None:
    if not 0 <= n < X.order:
        raise IndexError(f"mode {n} out of range for an order-{X.order} tensor")


def _kron_rows(rows: Sequence[np.ndarray], count: int) -> np.ndarray:
    """Row-wise Kronecker product, last factor varying fastest."""
    W = np.ones((count, 1))
    for R in rows:
        W = (W[:, :, None] * R[:, None, :]).reshape(count, -1)
    return W


def _block_size(width: int) -> int:
    return max(1, ROW_BLOCK_VALUES // max(width, 1))


def _scatter_rows(out: np.ndarray, rows: np.ndarray, contrib: np.ndarray) -> None:
    # rows must be sorted; entries of one bucket are contiguous
    if rows.size == 0:
        return
    starts = np.flatnonzero(np.r_[True, rows[1:] != rows[:-1]])
    out[rows[starts]] += np.add.reduceat(contrib, starts, axis=0)


def ttmc_core(X: SparseTensor, factors) -> np.ndarray:
    """Core tensor ``G = X x {U^T}`` as a dense ``K_1 x ... x K_N`` array.

    Accumulates over the nonzeros only; cost ``O(nnz * prod K)``.
    """
    factors = _check_factors(X, factors)
    ranks = tuple(U.shape[1] for U in factors)
    # Unfold along the widest mode so the per-entry Kronecker rows stay short.
    m = int(np.argmax(ranks))
    others = [v for v in range(X.order) if v != m]
    width = math.prod(ranks) // ranks[m]
    Gm = np.zeros((ranks[m], width))
    step = _block_size(width)
    idx, vals = X._indices, X.values
    for s in range(0, X.nnz, step):
        e = min(s + step, X.nnz)
        W = _kron_rows([factors[v][idx[s:e, v]] for v in others], e - s)
        lead = factors[m][idx[s:e, m]] * vals[s:e, None]
        Gm += lead.T @ W
    return refold_core(Gm, m, ranks)


def ttmctc_elementwise(
    X: SparseTensor, factors, n: int, core: Optional[np.ndarray] = None
) -> np.ndarray:
    """TTMcTC, accumulating ``A(i_n, :)`` bucket by bucket.

    Computes the core first (unless ``core`` is supplied for the same
    factors), then for every nonzero in the mode-``n`` bucket of ``i_n``
    adds ``x * (kron_{v != n} U^(v)(i_v, :)) @ G_(n)^T`` to row ``i_n``.
    Cost ``O(nnz * prod K)``; the only transient is a bounded block of
    Kronecker rows.
    """
    factors = _check_factors(X, factors)
    _check_mode(X, n)
    ranks = tuple(U.shape[1] for U in factors)
    G = ttmc_core(X, factors) if core is None else np.asarray(core)
    if G.shape != ranks:
        raise ShapeError(f"core has shape {G.shape}, factors imply {ranks}")
    GnT = unfold_core(G, n).T
    others = [v for v in range(X.order) if v != n]
    A = np.zeros((X.shape[n], ranks[n]))
    order = X.mode_buckets[n].order
    idx, vals = X._indices, X.values
    step = _block_size(GnT.shape[0])
    for s in range(0, X.nnz, step):
        pos = order[s : s + step]
        W = _kron_rows([factors[v][idx[pos, v]] for v in others], pos.size)
        contrib = (W @ GnT) * vals[pos, None]
        _scatter_rows(A, idx[pos, n], contrib)
    return A


@dataclass
class KernelWorkspace:
    """Scratch for the matrix variant: one ``I_n`` column and the ``I_n x K_n``
    accumulator. Nothing else of size proportional to ``I_n`` is held."""

    scratch: np.ndarray
    accumulator: np.ndarray
    calls: int = field(default=0)

    @classmethod
    def allocate(cls, rows: int, rank: int) -> "KernelWorkspace":
        # Column-major accumulator: the rank-one updates touch whole columns.
        return cls(np.zeros(rows), np.zeros((rank, rows)).T)

    def fits(self, rows: int, rank: int) -> bool:
        return self.scratch.shape == (rows,) and self.accumulator.shape == (rows, rank)

    @property
    def size(self) -> int:
        return self.scratch.size + self.accumulator.size


def ttmctc_matrix(
    X: SparseTensor,
    factors,
    n: int,
    workspace: Optional[KernelWorkspace] = None,
    chunk: Optional[int] = None,
) -> np.ndarray:
    """TTMcTC as a sum of rank-one updates ``A += y (y^T U^(n))``.

    ``y`` is one column of ``Y_(n)``, produced by a sparse mode product with
    the selected factor columns; columns ``k_{-n}`` are visited in
    lexicographic order (last mode fastest). Entries are processed in chunks
    of ``chunk`` (default ``max(MATRIX_CHUNK, I_n * K_n)``), holding two
    chunk-sized buffers. The returned array is the workspace accumulator
    when a workspace is given.
    """
    factors = _check_factors(X, factors)
    _check_mode(X, n)
    rows, rank = X.shape[n], factors[n].shape[1]
    if workspace is None:
        workspace = KernelWorkspace.allocate(rows, rank)
    elif not workspace.fits(rows, rank):
        raise ShapeError("workspace does not match the target mode")
    if chunk is None:
        chunk = max(MATRIX_CHUNK, rows * rank)
    y, A = workspace.scratch, workspace.accumulator
    A.fill(0.0)
    workspace.calls += 1
    Un = factors[n]
    others = [v for v in range(X.order) if v != n]
    idx, vals = X._indices, X.values
    target = idx[:, n]
    lead, last = others[:-1], others[-1]
    last_cols = [factors[last][:, k] for k in range(factors[last].shape[1])]
    lead_cols = [[factors[v][:, k] for k in range(factors[v].shape[1])] for v in lead]
    single = X.nnz <= chunk
    buf = np.empty(min(chunk, X.nnz))
    prefix = np.empty_like(buf)
    for head in itertools.product(*(range(factors[v].shape[1]) for v in lead)):
        if single:
            # One chunk: the product over the leading modes is shared by every
            # column with this ``head``.
            _weights(vals, idx, lead, lead_cols, head, 0, X.nnz, prefix, buf)
        for k_last, col in enumerate(last_cols):
            y.fill(0.0)
            for s in range(0, X.nnz, chunk):
                e = min(s + chunk, X.nnz)
                w = prefix[: e - s]
                if not single:
                    _weights(vals, idx, lead, lead_cols, head, s, e, w, buf)
                b = buf[: e - s]
                col.take(idx[s:e, last], out=b, mode="clip")
                b *= w
                y += np.bincount(target[s:e], weights=b, minlength=rows)
            z = y @ Un
            for k in range(rank):
                A[:, k] += z[k] * y
    return A


def _weights(vals, idx, modes, cols, ks, s, e, out, tmp) -> None:
    # Product of values and leading-mode factor entries, written to ``out``.
    w = out[: e - s]
    t = tmp[: e - s]
    np.copyto(w, vals[s:e])
    for v, col, k in zip(modes, cols, ks):
        col[k].take(idx[s:e, v], out=t, mode="clip")
        w *= t


def ttmc_unfold_dense(
    X: SparseTensor, factors, n: int, cap: int = DEFAULT_DENSE_CAP
) -> np.ndarray:
    """Dense mode-``n`` unfolding of ``X x_{-n} {U^T}``, shape ``I_n x prod_{v != n} K_v``.

    Raises :class:`CapacityError` when the result would exceed ``cap`` entries.
    """
    factors = _check_factors(X, factors)
    _check_mode(X, n)
    width = math.prod(U.shape[1] for v, U in enumerate(factors) if v != n)
    size = X.shape[n] * width
    if size > cap:
        raise CapacityError(
            f"dense Y_({n}) needs {size} entries, above the cap of {cap}; "
            "this path is meant for desk-scale problems"
        )
    others = [v for v in range(X.order) if v != n]
    Y = np.zeros((X.shape[n], width))
    order = X.mode_buckets[n].order
    idx, vals = X._indices, X.values
    step = _block_size(width)
    for s in range(0, X.nnz, step):
        pos = order[s : s + step]
        W = _kron_rows([factors[v][idx[pos, v]] for v in others], pos.size)
        _scatter_rows(Y, idx[pos, n], W * vals[pos, None])
    return Y


def ttmctc(X: SparseTensor, factors, n: int, variant: str = "elementwise", core=None):
    """Dispatch to one of the two TTMcTC implementations."""
    if variant == "elementwise":
        return ttmctc_elementwise(X, factors, n, core=core)
    if variant == "matrix":
        return ttmctc_matrix(X, factors, n)
    raise ValueError(f"unknown kernel variant {variant!r}")
