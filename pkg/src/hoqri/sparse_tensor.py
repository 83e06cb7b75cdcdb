"""Coordinate-format sparse tensors, ``.tns`` I/O and per-mode index buckets."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass
from typing import IO, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import (
    CapacityError,
    IndexRangeError,
    NonFiniteValueError,
    ParseError,
    ShapeError,
)

DEFAULT_DENSE_CAP = 2**31


@dataclass(frozen=True)
class ModeBuckets:
    """Entry positions grouped by their index in one mode.

    ``order`` lists entry positions sorted by the mode index (stable, so
    within a bucket positions stay in lexicographic entry order) and
    ``offsets[i]:offsets[i + 1]`` delimits the bucket of index ``i``.
    """

    order: np.ndarray
    offsets: np.ndarray

    def __getitem__(self, i: int) -> np.ndarray:
        return self.order[self.offsets[i] : self.offsets[i + 1]]

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def nonempty(self) -> np.ndarray:
        return np.flatnonzero(self.sizes())


class SparseTensor:
    """Order-N real tensor stored as a sorted list of unique coordinates.

    Parameters
    ----------
    indices:
        Integer array of shape ``(nnz, N)`` holding 0-based coordinates.
    values:
        Array of ``nnz`` finite values.
    shape:
        Per-mode extents. Defaults to the per-mode maximum index plus one.

    Duplicate coordinates are summed and entries are sorted
    lexicographically, so two tensors with the same entry set compare equal
    regardless of input order. Instances are treated as immutable.
    """

    def __init__(self, indices, values, shape: Optional[Sequence[int]] = None):
        indices = np.asarray(indices, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if indices.ndim == 1 and indices.size == 0:
            if shape is None:
                raise ShapeError("cannot infer the order of an empty tensor without a shape")
            indices = indices.reshape(0, len(shape))
        if indices.ndim != 2:
            raise ShapeError(f"indices must be 2-D, got shape {indices.shape}")
        if indices.shape[0] != values.shape[0]:
            raise ShapeError(
                f"{indices.shape[0]} coordinates but {values.shape[0]} values"
            )
        if not np.all(np.isfinite(values)):
            raise NonFiniteValueError("tensor values must be finite")
        order = indices.shape[1]
        if order < 1:
            raise ShapeError("tensor order must be at least 1")
        if np.any(indices < 0):
            raise IndexRangeError("negative coordinate")
        if shape is None:
            if indices.shape[0] == 0:
                raise ShapeError("cannot infer dims of an empty tensor")
            shape = tuple(int(m) + 1 for m in indices.max(axis=0))
        shape = tuple(int(s) for s in shape)
        if len(shape) != order:
            raise ShapeError(f"shape has {len(shape)} modes, coordinates have {order}")
        if any(s < 1 for s in shape):
            raise ShapeError(f"dims must be positive, got {shape}")
        if indices.shape[0] and np.any(indices.max(axis=0) >= np.asarray(shape)):
            raise IndexRangeError(f"coordinate outside dims {shape}")

        if indices.shape[0]:
            perm = np.lexsort(indices.T[::-1])
            indices = indices[perm]
            values = values[perm]
            new = np.ones(indices.shape[0], dtype=bool)
            new[1:] = np.any(indices[1:] != indices[:-1], axis=1)
            if not new.all():
                starts = np.flatnonzero(new)
                values = np.add.reduceat(values, starts)
                indices = indices[starts]

        self.shape = shape
        # Column-major so each mode's index column is contiguous. The kernels
        # read the private writeable array: numpy copies read-only index
        # arrays inside take/bincount, which would add O(nnz) transients.
        self._indices = np.array(indices, order="F")
        self.indices = self._indices.view()
        self.values = np.ascontiguousarray(values)
        self.indices.flags.writeable = False
        self.values.flags.writeable = False
        self._buckets: Optional[list] = None

    @property
    def order(self) -> int:
        return len(self.shape)

    @property
    def nnz(self) -> int:
        return self.values.shape[0]

    @property
    def mode_buckets(self) -> list:
        if self._buckets is None:
            build_mode_buckets(self)
        return self._buckets

    def __repr__(self) -> str:
        return f"SparseTensor(shape={self.shape}, nnz={self.nnz})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparseTensor):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.indices, other.indices)
            and np.array_equal(self.values, other.values)
        )

    def scaled(self, factor: float) -> "SparseTensor":
        return SparseTensor(self.indices, self.values * factor, self.shape)

    def todense(self, cap: int = DEFAULT_DENSE_CAP) -> np.ndarray:
        size = math.prod(self.shape)
        if size > cap:
            raise CapacityError(f"dense tensor of {size} entries exceeds cap {cap}")
        out = np.zeros(self.shape)
        out[tuple(self.indices.T)] = self.values
        return out

    @classmethod
    def from_dense(cls, array, tol: float = 0.0) -> "SparseTensor":
        """Keep every entry with ``|value| > tol`` (``tol < 0`` keeps all)."""
        array = np.asarray(array, dtype=np.float64)
        mask = np.abs(array) > tol
        idx = np.argwhere(mask)
        return cls(idx, array[mask], array.shape)


def build_mode_buckets(X: SparseTensor) -> SparseTensor:
    """Populate ``X.mode_buckets`` for every mode and return ``X``."""
    if X._buckets is not None:
        return X
    buckets = []
    for n, dim in enumerate(X.shape):
        col = X.indices[:, n]
        order = np.argsort(col, kind="stable")
        counts = np.bincount(col, minlength=dim)
        offsets = np.zeros(dim + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        order.flags.writeable = False
        offsets.flags.writeable = False
        buckets.append(ModeBuckets(order, offsets))
    X._buckets = buckets
    return X


def norm_sq(X: SparseTensor) -> float:
    """Squared Frobenius norm."""
    return float(np.dot(X.values, X.values))


Source = Union[str, os.PathLike, IO]


def _lines(source: Source) -> Iterable[str]:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            for raw in fh:
                yield raw.decode()
        return
    for raw in source:
        yield raw.decode() if isinstance(raw, bytes) else raw


def load_tns(source: Source, dims: Optional[Sequence[int]] = None) -> SparseTensor:
    """Read a ``.tns`` file: one ``i_1 ... i_N value`` line per nonzero.

    Indices on disk are 1-based. Lines starting with ``#`` are comments; the
    first other line may be a header ``dims: I_1 ... I_N``. ``dims`` passed
    here overrides both the header and the observed maxima.
    """
    header_dims = None
    order = None
    coords: list = []
    vals: list = []
    seen_data = False
    for lineno, line in enumerate(_lines(source), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        if not seen_data and header_dims is None and text.lower().startswith("dims"):
            _, _, rest = text.partition(":")
            try:
                header_dims = tuple(int(t) for t in rest.split())
            except ValueError:
                raise ParseError(f"bad dims header {text!r}", lineno) from None
            if not header_dims or any(d < 1 for d in header_dims):
                raise ParseError(f"bad dims header {text!r}", lineno)
            order = len(header_dims)
            continue
        seen_data = True
        tokens = text.split()
        if order is None:
            if len(tokens) < 2:
                raise ParseError(f"expected at least 2 tokens, got {len(tokens)}", lineno)
            order = len(tokens) - 1
        if len(tokens) != order + 1:
            raise ParseError(f"expected {order + 1} tokens, got {len(tokens)}", lineno)
        try:
            coord = [int(t) for t in tokens[:-1]]
            value = float(tokens[-1])
        except ValueError:
            raise ParseError(f"non-numeric token in {text!r}", lineno) from None
        if min(coord) < 1:
            raise IndexRangeError(f"indices are 1-based, got {min(coord)}", lineno)
        if header_dims is not None and any(c > d for c, d in zip(coord, header_dims)):
            raise IndexRangeError(f"coordinate {coord} exceeds dims {header_dims}", lineno)
        if not math.isfinite(value):
            raise NonFiniteValueError(f"non-finite value {tokens[-1]!r}", lineno)
        coords.append(coord)
        vals.append(value)

    shape = tuple(dims) if dims is not None else header_dims
    if order is None:
        if shape is None:
            raise ParseError("no data lines and no dims to fix the tensor order")
        order = len(shape)
    if shape is not None and len(shape) != order:
        raise ShapeError(f"dims {tuple(shape)} do not match tensor order {order}")
    indices = np.asarray(coords, dtype=np.int64).reshape(-1, order) - 1
    if shape is not None and indices.shape[0]:
        too_big = indices.max(axis=0) >= np.asarray(shape)
        if np.any(too_big):
            raise IndexRangeError(f"coordinates exceed dims {tuple(shape)}")
    return SparseTensor(indices, np.asarray(vals, dtype=np.float64), shape)


def write_tns(X: SparseTensor, dest: Source, header: bool = True) -> None:
    """Write ``X`` in ``.tns`` format with full round-trip precision."""
    buf = io.StringIO()
    if header:
        buf.write("dims: " + " ".join(str(d) for d in X.shape) + "\n")
    rows = X.indices + 1
    for coord, value in zip(rows.tolist(), X.values.tolist()):
        buf.write(" ".join(map(str, coord)) + f" {value!r}\n")
    text = buf.getvalue()
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w") as fh:
            fh.write(text)
    else:
        try:
            dest.write(text)
        except TypeError:
            dest.write(text.encode())
