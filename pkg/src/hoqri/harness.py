"""Synthetic data, experiment orchestration, trace files and kernel benchmarks."""

from __future__ import annotations

import csv
import json
import logging
import math
import platform
import statistics
import time
import tracemalloc
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from . import __version__
from .errors import HoqriError, InfeasibleError
from .kernels import ttmctc_elementwise, ttmctc_matrix
from .solvers import IterationTrace, SolverConfig, hooi, hoqri
from .sparse_tensor import SparseTensor, build_mode_buckets, load_tns

log = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1

# Reference real-world datasets: dims and nnz.
DATASETS = {
    "last": ((2100, 18744, 12647), 186479),
    "delicious": ((108035, 107253, 52955), 437593),
    "facebook": ((46952, 46951, 1592), 738079),
    "movielens": ((610, 49961, 8215), 84159),
    "10m-movielens": ((162541, 49994, 9083), 20503478),
}


def gen_synthetic(dims: Sequence[int], nnz: int, seed: int = 0) -> SparseTensor:
    """Random sparse tensor with ``nnz`` distinct uniform coordinates and
    standard normal values."""
    dims = tuple(int(d) for d in dims)
    total = math.prod(dims)
    if nnz > total:
        raise InfeasibleError(f"cannot place {nnz} distinct entries in a tensor of {total} cells")
    rng = np.random.default_rng(seed)
    if nnz == 0:
        return SparseTensor(np.zeros((0, len(dims)), dtype=np.int64), np.zeros(0), dims)
    if 2 * nnz > total:
        # Dense regime: sampling without replacement beats rejection.
        lin = rng.choice(total, size=nnz, replace=False)
        coords = np.stack(np.unravel_index(lin, dims), axis=1)
    else:
        coords = np.zeros((0, len(dims)), dtype=np.int64)
        while coords.shape[0] < nnz:
            need = nnz - coords.shape[0]
            draw = np.stack([rng.integers(0, d, size=need + need // 4 + 8) for d in dims], axis=1)
            merged = np.concatenate([coords, draw])
            _, first = np.unique(merged, axis=0, return_index=True)
            coords = merged[np.sort(first)][:nnz]
    values = rng.standard_normal(nnz)
    return SparseTensor(coords, values, dims)


def planted_tensor(dims, ranks, seed: int = 0) -> tuple:
    """Dense ``G x {U}`` with random orthonormal factors, stored in COO form.

    Returns ``(X, factors, core)``.
    """
    from .dense_core import qr_orthonormal

    rng = np.random.default_rng(seed)
    core = rng.standard_normal(tuple(ranks))
    factors = [qr_orthonormal(rng.standard_normal((d, k))) for d, k in zip(dims, ranks)]
    dense = core
    for n, U in enumerate(factors):
        dense = np.moveaxis(np.tensordot(U, dense, axes=(1, n)), 0, n)
    return SparseTensor.from_dense(dense, tol=-1.0), factors, core


@dataclass
class SyntheticSource:
    dims: Sequence[int]
    nnz: int
    seed: int = 0

    def __post_init__(self):
        self.dims = tuple(int(d) for d in self.dims)
        if self.nnz > math.prod(self.dims):
            raise InfeasibleError("nnz exceeds the number of tensor cells")


@dataclass
class ExperimentSpec:
    source: Union[str, Path, SyntheticSource]
    config: SolverConfig
    solver: str = "hoqri"
    repetitions: int = 1
    out_dir: Union[str, Path] = "runs"
    dims: Optional[Sequence[int]] = None
    parallel_reps: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be at least 1")
        if self.solver not in ("hoqri", "hooi", "both"):
            raise ValueError("solver must be hoqri, hooi or both")

    @property
    def solvers(self) -> List[str]:
        return ["hoqri", "hooi"] if self.solver == "both" else [self.solver]

    def load(self) -> SparseTensor:
        if isinstance(self.source, SyntheticSource):
            return gen_synthetic(self.source.dims, self.source.nnz, self.source.seed)
        return load_tns(self.source, dims=self.dims)

    def echo(self) -> dict:
        src = self.source
        return {
            "source": asdict(src) if isinstance(src, SyntheticSource) else str(src),
            "config": asdict(self.config),
            "solver": self.solver,
            "repetitions": self.repetitions,
            "dims": list(self.dims) if self.dims else None,
        }


ROW_FIELDS = ("sweep", "elapsed_s", "objective", "fit", "grad_norm_sq")


@dataclass
class TraceFile:
    """Serializable per-sweep trace with a versioned header."""

    header: dict
    rows: List[dict] = field(default_factory=list)

    @classmethod
    def from_trace(cls, trace: IterationTrace, spec_echo: Optional[dict] = None, **extra) -> "TraceFile":
        header = {
            "schema_version": TRACE_SCHEMA_VERSION,
            "solver": trace.solver,
            "data_norm_sq": trace.data_norm_sq,
            "initial_objective": trace.initial_objective,
            "initial_fit": trace.initial_fit,
            "stop_reason": trace.stop_reason,
            "spec": spec_echo,
            "versions": {
                "hoqri": __version__,
                "numpy": np.__version__,
                "python": platform.python_version(),
            },
            "timestamp": datetime.now(timezone.utc).isoformat(),
        }
        header.update(extra)
        rows = []
        for r in trace.sweeps:
            row = {
                "sweep": r.sweep,
                "elapsed_s": r.elapsed_s,
                "objective": r.objective,
                "fit": r.fit,
                "grad_norm_sq": r.grad_norm_sq,
            }
            for n, d in enumerate(r.drift, start=1):
                row[f"drift_{n}"] = d
            rows.append(row)
        return cls(header, rows)

    @property
    def columns(self) -> List[str]:
        order = max((len(r) for r in self.rows), default=len(ROW_FIELDS)) - len(ROW_FIELDS)
        return list(ROW_FIELDS) + [f"drift_{n}" for n in range(1, order + 1)]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            fh.write("# " + json.dumps(self.header, sort_keys=True) + "\n")
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in self.columns])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        rows = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in self.rows]
        with open(path, "w") as fh:
            json.dump({"header": self.header, "rows": rows}, fh, indent=1, sort_keys=True)
        return path

    @classmethod
    def read_csv(cls, path) -> "TraceFile":
        with open(path, newline="") as fh:
            first = fh.readline()
            if not first.startswith("# "):
                raise ValueError(f"{path}: missing trace header line")
            header = json.loads(first[2:])
            rows = []
            for rec in csv.DictReader(fh):
                rows.append({k: int(v) if k == "sweep" else float(v) for k, v in rec.items()})
        return cls(header, rows)

    @classmethod
    def read_json(cls, path) -> "TraceFile":
        with open(path) as fh:
            obj = json.load(fh)
        rows = [
            {k: (math.nan if v is None else v) for k, v in r.items()} for r in obj["rows"]
        ]
        return cls(obj["header"], rows)


def _run_one(X, spec: ExperimentSpec, solver: str, rep: int):
    config = replace(spec.config, seed=spec.config.seed + rep)
    fn = hoqri if solver == "hoqri" else hooi
    try:
        return fn(X, config)
    except HoqriError as exc:
        exc.args = (f"[{solver} rep {rep}] {exc.args[0] if exc.args else exc}",) + exc.args[1:]
        raise


def run_experiment(spec: ExperimentSpec) -> List[Path]:
    """Run every selected solver for every repetition and write the traces.

    Each run produces ``<solver>_rep<k>.json`` and a ``.csv`` twin in
    ``spec.out_dir``; ``summary.json`` collects final fits and mean per-sweep
    times. Returns the JSON trace paths.
    """
    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    X = spec.load()
    build_mode_buckets(X)
    jobs = [(solver, rep) for rep in range(spec.repetitions) for solver in spec.solvers]
    if spec.parallel_reps and len(jobs) > 1:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda j: _run_one(X, spec, *j), jobs))
    else:
        results = [_run_one(X, spec, *j) for j in jobs]

    echo = spec.echo()
    paths = []
    summary = {"schema_version": TRACE_SCHEMA_VERSION, "shape": list(X.shape), "nnz": X.nnz,
               "data_norm_sq": None, "runs": []}
    for (solver, rep), (model, trace) in zip(jobs, results):
        tf = TraceFile.from_trace(trace, echo, repetition=rep)
        stem = out / f"{solver}_rep{rep}"
        tf.write_csv(stem.with_suffix(".csv"))
        paths.append(tf.write_json(stem.with_suffix(".json")))
        summary["data_norm_sq"] = trace.data_norm_sq
        summary["runs"].append({
            "solver": solver,
            "repetition": rep,
            "sweeps": len(trace.sweeps),
            "initial_fit": trace.initial_fit,
            "final_fit": trace.final.fit,
            "final_objective": trace.final.objective,
            "mean_sweep_s": trace.mean_sweep_seconds(),
            "stop_reason": trace.stop_reason,
        })
    for solver in spec.solvers:
        times = [r["mean_sweep_s"] for r in summary["runs"] if r["solver"] == solver]
        summary[f"{solver}_mean_sweep_s"] = float(np.mean(times))
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return paths


@dataclass
class BenchResult:
    variant: str
    mode: int
    repetitions: int
    median_s: float
    min_s: float
    max_s: float
    peak_bytes: int
    rows: int
    rank: int

    @property
    def peak_values(self) -> float:
        return self.peak_bytes / 8.0

    @property
    def peak_over_ik(self) -> float:
        return self.peak_values / (self.rows * self.rank)


def bench_kernel(X: SparseTensor, factors, n: int, variant: str = "matrix", repetitions: int = 5) -> BenchResult:
    """Time one TTMcTC variant and measure its peak transient allocation.

    Timing runs are separate from the single ``tracemalloc``-instrumented
    call, so the tracing overhead does not leak into the timings.
    """
    build_mode_buckets(X)
    kernel = {"matrix": ttmctc_matrix, "elementwise": ttmctc_elementwise}[variant]
    kernel(X, factors, n)
    times = []
    for _ in range(max(1, repetitions)):
        t = time.perf_counter()
        kernel(X, factors, n)
        times.append(time.perf_counter() - t)
    was_tracing = tracemalloc.is_tracing()
    if not was_tracing:
        tracemalloc.start()
    tracemalloc.reset_peak()
    base = tracemalloc.get_traced_memory()[0]
    kernel(X, factors, n)
    peak = tracemalloc.get_traced_memory()[1] - base
    if not was_tracing:
        tracemalloc.stop()
    return BenchResult(
        variant, n, len(times), statistics.median(times), min(times), max(times),
        int(peak), X.shape[n], np.asarray(factors[n]).shape[1],
    )
