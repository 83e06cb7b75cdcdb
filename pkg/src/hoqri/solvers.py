"""HOQRI and the HOOI baseline for sparse Tucker approximation.

Both solvers maximize ``||X x {U^T}||^2`` over orthonormal factors by cyclic
block updates, one mode at a time in ascending order. A *sweep* is one pass
over all N modes; an *update* is a single mode's step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional, Sequence

import numpy as np

from .dense_core import (
    check_factor_set,
    qr_orthonormal,
    svd_leading,
    unfold_core,
)
from .errors import CapacityError, ContractError, DegenerateStateError, ShapeError
from .kernels import (
    KernelWorkspace,
    ttmc_core,
    ttmc_unfold_dense,
    ttmctc_elementwise,
    ttmctc_matrix,
)
from .manifold import (
    GradientReport,
    grad_norm_sq,
    interlacing_check,
    subspace_distance,
)
from .sparse_tensor import DEFAULT_DENSE_CAP, SparseTensor, build_mode_buckets, norm_sq

log = logging.getLogger(__name__)

KERNEL_VARIANTS = ("elementwise", "matrix")
INIT_MODES = ("random", "hosvd")


@dataclass
class SolverConfig:
    ranks: Sequence[int]
    max_sweeps: int = 100
    tol_fit_change: float = 1e-12
    seed: int = 0
    init_mode: str = "random"
    trace_gradients: bool = True
    kernel_variant: str = "matrix"
    stop_on: str = "fit"
    grad_tol: float = 1e-6
    dense_cap: int = DEFAULT_DENSE_CAP

    def __post_init__(self):
        self.ranks = tuple(int(k) for k in self.ranks)
        if not self.ranks or any(k < 1 for k in self.ranks):
            raise ValueError(f"ranks must be positive, got {self.ranks}")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be at least 1")
        if self.tol_fit_change < 0 or self.grad_tol < 0:
            raise ValueError("tolerances must be nonnegative")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.kernel_variant not in KERNEL_VARIANTS:
            raise ValueError(f"kernel_variant must be one of {KERNEL_VARIANTS}")
        if self.stop_on not in ("fit", "gradient"):
            raise ValueError("stop_on must be 'fit' or 'gradient'")
        if self.stop_on == "gradient" and not self.trace_gradients:
            raise ValueError("gradient stopping needs trace_gradients")

    def check_dims(self, dims: Sequence[int]) -> None:
        if len(self.ranks) != len(dims):
            raise ShapeError(f"{len(self.ranks)} ranks for an order-{len(dims)} tensor")
        for n, (k, d) in enumerate(zip(self.ranks, dims)):
            if k > d:
                raise ShapeError(f"rank {k} exceeds extent {d} in mode {n}")


@dataclass
class TuckerModel:
    factors: List[np.ndarray]
    core: np.ndarray
    data_norm_sq: float

    @property
    def objective(self) -> float:
        return float(np.sum(self.core * self.core))

    @property
    def ranks(self):
        return self.core.shape

    def to_dense(self) -> np.ndarray:
        out = self.core
        for n, U in enumerate(self.factors):
            out = np.moveaxis(np.tensordot(U, out, axes=(1, n)), 0, n)
        return out


@dataclass
class SweepRecord:
    sweep: int
    elapsed_s: float
    sweep_s: float
    objective: float
    fit: float
    grad_norm_sq: float
    per_mode_grad_sq: List[float]
    drift: List[float]


@dataclass
class UpdateRecord:
    """One mode update. ``objective_before``/``after`` bracket the update."""

    sweep: int
    mode: int
    objective_before: float
    objective_after: float = math.nan
    grad_norm_sq: float = math.nan
    interlacing_margin: float = math.nan
    drift: float = math.nan


@dataclass
class IterationTrace:
    solver: str
    data_norm_sq: float
    initial_objective: float
    initial_fit: float
    sweeps: List[SweepRecord] = field(default_factory=list)
    updates: List[UpdateRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def objectives(self) -> np.ndarray:
        return np.array([r.objective for r in self.sweeps])

    @property
    def fits(self) -> np.ndarray:
        return np.array([r.fit for r in self.sweeps])

    @property
    def grad_norms(self) -> np.ndarray:
        return np.array([r.grad_norm_sq for r in self.sweeps])

    @property
    def final(self) -> SweepRecord:
        return self.sweeps[-1]

    def mean_sweep_seconds(self) -> float:
        return float(np.mean([r.sweep_s for r in self.sweeps])) if self.sweeps else math.nan

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class UpdateState:
    """What a callback sees just before mode ``mode`` is updated."""

    sweep: int
    mode: int
    factors: List[np.ndarray]
    A: np.ndarray
    core: Optional[np.ndarray]


def _dense_unfolding(X: SparseTensor, n: int, cap: int) -> np.ndarray:
    rest = [v for v in range(X.order) if v != n]
    width = math.prod(X.shape[v] for v in rest)
    if X.shape[n] * width > cap:
        raise CapacityError(
            f"HOSVD needs a dense {X.shape[n]}x{width} unfolding, above the cap of {cap}; "
            "use random initialization for tensors of this size"
        )
    cols = (
        np.ravel_multi_index(tuple(X.indices[:, v] for v in rest), [X.shape[v] for v in rest])
        if rest
        else np.zeros(X.nnz, dtype=np.int64)
    )
    Xn = np.zeros((X.shape[n], width))
    np.add.at(Xn, (X.indices[:, n], cols), X.values)
    return Xn


def init_factors(dims, ranks, config: SolverConfig, X: Optional[SparseTensor] = None):
    """Initial orthonormal factors: seeded Gaussian + QR, or truncated HOSVD."""
    dims = tuple(dims)
    ranks = tuple(ranks)
    if config.init_mode == "random":
        rng = np.random.default_rng(config.seed)
        return [qr_orthonormal(rng.standard_normal((d, k))) for d, k in zip(dims, ranks)]
    if X is None:
        raise ValueError("HOSVD initialization needs the data tensor")
    return [
        svd_leading(_dense_unfolding(X, n, config.dense_cap), k) for n, k in enumerate(ranks)
    ]


def _prepare(X: SparseTensor, config: SolverConfig, factors):
    build_mode_buckets(X)
    config.check_dims(X.shape)
    if factors is None:
        factors = init_factors(X.shape, config.ranks, config, X)
    else:
        factors = [np.array(U, dtype=np.float64) for U in factors]
        check_factor_set(factors, X.shape)
        if tuple(U.shape[1] for U in factors) != config.ranks:
            raise ShapeError("initial factors do not match the configured ranks")
    return factors


def _clamped_fit(data_norm_sq: float, objective: float) -> float:
    fit = data_norm_sq - objective
    return 0.0 if fit < 1e-10 * max(data_norm_sq, 1.0) else fit


def _run(X, config, factors, solver, step, callback):
    """Shared sweep loop.

    ``step(n, U, core)`` returns ``(A, Gn, new_factor, core, f_before)``: the
    TTMcTC matrix and core unfolding at the current state (``Gn`` may be
    ``None`` when gradients are not traced), the updated factor, the core if
    one was formed, and the objective before the update if known.
    """
    data = norm_sq(X)
    U = list(factors)
    core = ttmc_core(X, U)
    f0 = float(np.sum(core * core))
    trace = IterationTrace(solver, data, f0, _clamped_fit(data, f0))
    prev_fit = trace.initial_fit
    start = time.perf_counter()
    for sweep in range(1, config.max_sweeps + 1):
        t_sweep = time.perf_counter()
        pending: List[UpdateRecord] = []
        grads, drifts = [], []
        for n in range(X.order):
            A, Gn, U_new, core, f_before = step(n, U, core)
            if not np.any(A):
                raise DegenerateStateError(
                    f"TTMcTC result for mode {n} is identically zero in sweep {sweep}; "
                    "the data is orthogonal to the current subspaces (check ranks/data)",
                    mode=n,
                )
            rec = UpdateRecord(sweep, n, f_before if f_before is not None else math.nan)
            if pending:
                pending[-1].objective_after = rec.objective_before
            if config.trace_gradients:
                rec.grad_norm_sq = grad_norm_sq(A, Gn)
                rec.interlacing_margin = interlacing_check(A, Gn).margin
                grads.append(rec.grad_norm_sq)
            if callback is not None:
                callback(UpdateState(sweep, n, list(U), A, core))
            rec.drift = subspace_distance(U_new, U[n])
            drifts.append(rec.drift)
            U[n] = U_new
            core = None
            pending.append(rec)
        core = ttmc_core(X, U)
        f = float(np.sum(core * core))
        pending[-1].objective_after = f
        trace.updates.extend(pending)
        now = time.perf_counter()
        fit = _clamped_fit(data, f)
        total = float(sum(grads)) if config.trace_gradients else math.nan
        trace.sweeps.append(
            SweepRecord(sweep, now - start, now - t_sweep, f, fit, total, grads, drifts)
        )
        log.debug("%s sweep %d: f=%.12e fit=%.6e grad=%.3e", solver, sweep, f, fit, total)
        if config.stop_on == "fit" and abs(prev_fit - fit) < config.tol_fit_change:
            trace.stop_reason = "fit_change"
            break
        if config.stop_on == "gradient" and total <= config.grad_tol * max(f, 1e-300):
            trace.stop_reason = "gradient"
            break
        prev_fit = fit
    else:
        trace.stop_reason = "max_sweeps"
    return TuckerModel(U, core, data), trace


def hoqri(
    X: SparseTensor,
    config: SolverConfig,
    factors=None,
    callback: Optional[Callable[[UpdateState], None]] = None,
):
    """Higher-order QR iteration.

    Each update computes ``A = TTMcTC(X, U, n)`` and replaces ``U^(n)`` by an
    orthonormal basis of ``A``. The core is formed once per sweep (and once
    per update when the element-wise kernel or gradient tracing needs it).
    Returns ``(TuckerModel, IterationTrace)``.
    """
    factors = _prepare(X, config, factors)
    elementwise = config.kernel_variant == "elementwise"
    workspaces = {}

    def step(n, U, core):
        need_core = elementwise or config.trace_gradients
        if need_core and core is None:
            core = ttmc_core(X, U)
        if elementwise:
            A = ttmctc_elementwise(X, U, n, core=core)
        else:
            ws = workspaces.get(n)
            if ws is None:
                ws = workspaces[n] = KernelWorkspace.allocate(X.shape[n], U[n].shape[1])
            A = ttmctc_matrix(X, U, n, workspace=ws)
        Gn = unfold_core(core, n) if need_core else None
        f_before = float(np.sum(core * core)) if need_core else None
        return A, Gn, qr_orthonormal(A), core, f_before

    return _run(X, config, factors, "hoqri", step, callback)


def hooi(
    X: SparseTensor,
    config: SolverConfig,
    factors=None,
    callback: Optional[Callable[[UpdateState], None]] = None,
):
    """Higher-order orthogonal iteration on the dense TTMc unfolding.

    Forms ``Y_(n)`` explicitly, so it is limited by ``config.dense_cap``.
    """
    factors = _prepare(X, config, factors)
    for n in range(X.order):
        width = math.prod(config.ranks) // config.ranks[n]
        if config.ranks[n] > width:
            raise ShapeError(
                f"rank {config.ranks[n]} in mode {n} exceeds the product of the other ranks ({width})"
            )

    def step(n, U, core):
        Y = ttmc_unfold_dense(X, U, n, cap=config.dense_cap)
        Gn = U[n].T @ Y
        A = Y @ Gn.T
        return A, Gn, svd_leading(Y, U[n].shape[1]), core, float(np.sum(Gn * Gn))

    return _run(X, config, factors, "hooi", step, callback)


def fit_error(X: SparseTensor, model: TuckerModel) -> float:
    """``||X - G x {U}||^2`` through the identity ``||X||^2 - ||G||^2``."""
    fit = model.data_norm_sq - model.objective
    scale = max(model.data_norm_sq, 1.0)
    if fit < -1e-10 * scale:
        raise ContractError(
            f"core norm exceeds data norm by {-fit:.3e}; core is inconsistent with the factors"
        )
    return max(fit, 0.0) if fit > 1e-10 * scale else 0.0


def gradient_report(X: SparseTensor, factors, variant: str = "matrix") -> GradientReport:
    """Per-mode Riemannian gradient norms and spectra at one fixed state."""
    build_mode_buckets(X)
    core = ttmc_core(X, factors)
    report = GradientReport()
    for n in range(X.order):
        if variant == "elementwise":
            A = ttmctc_elementwise(X, factors, n, core=core)
        else:
            A = ttmctc_matrix(X, factors, n)
        report.add(A, unfold_core(core, n))
    return report


@dataclass
class DescentReport:
    checked: int
    violations: List[tuple]

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def check_descent_inequality(trace: IterationTrace, data_norm_sq: float) -> DescentReport:
    """Check ``||grad_n||^2 <= 4 ||X||^2 (f_after - f_before) + 1e-8 ||X||^4`` per update.

    ``||X||^2`` stands in for the unknown supremum of the objective, which it
    bounds from above.
    """
    slack = 1e-8 * data_norm_sq**2
    checked = 0
    violations = []
    for rec in trace.updates:
        if math.isnan(rec.grad_norm_sq) or math.isnan(rec.objective_after):
            continue
        checked += 1
        rhs = 4.0 * data_norm_sq * (rec.objective_after - rec.objective_before) + slack
        if rec.grad_norm_sq > rhs:
            violations.append((rec.sweep, rec.mode, rec.grad_norm_sq, rhs))
    return DescentReport(checked, violations)
