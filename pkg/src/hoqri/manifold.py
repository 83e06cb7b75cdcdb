"""Stiefel-manifold quantities used to diagnose HOQRI iterates."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .dense_core import gram_eigvals_desc, nuclear_norm, singular_values
from .errors import DiagnosticError, ShapeError

ZERO_TOL = 1e-10
GRAD_NEG_TOL = 1e-8
INTERLACE_TOL = 1e-9


def _same_shape(U, A):
    U = np.asarray(U, dtype=np.float64)
    A = np.asarray(A, dtype=np.float64)
    if U.shape != A.shape or U.ndim != 2:
        raise ShapeError(f"shape mismatch: {U.shape} vs {A.shape}")
    return U, A


def project_tangent(U, A) -> np.ndarray:
    """Project ``A`` onto the tangent space of St(I, K) at ``U``."""
    U, A = _same_shape(U, A)
    UtA = U.T @ A
    return A - U @ (0.5 * (UtA + UtA.T))


def riemannian_grad(U, A, Gn) -> np.ndarray:
    """Riemannian gradient ``2A - 2 U G_(n) G_(n)^T`` of the Tucker objective."""
    U, A = _same_shape(U, A)
    Gn = np.asarray(Gn, dtype=np.float64)
    if Gn.shape[0] != U.shape[1]:
        raise ShapeError(f"core unfolding has {Gn.shape[0]} rows, factor has {U.shape[1]} columns")
    return 2.0 * A - 2.0 * U @ (Gn @ Gn.T)


def grad_norm_sq_raw(A, Gn) -> float:
    A = np.asarray(A, dtype=np.float64)
    Gn = np.asarray(Gn, dtype=np.float64)
    GG = Gn @ Gn.T
    return 4.0 * (float(np.sum(A * A)) - float(np.sum(GG * GG)))


def grad_norm_sq(A, Gn) -> float:
    """Squared Riemannian gradient norm for one mode, ``4(||A||^2 - ||G_(n) G_(n)^T||^2)``.

    Small negative values from cancellation are clamped to zero. A value
    below ``-1e-8`` (scaled by ``||A||^2`` when that exceeds one) cannot
    occur with orthonormal factors and raises :class:`DiagnosticError`.
    """
    raw = grad_norm_sq_raw(A, Gn)
    scale = max(1.0, 4.0 * float(np.sum(np.square(A))))
    if raw < -GRAD_NEG_TOL * scale:
        raise DiagnosticError(
            f"negative squared gradient norm {raw:.3e}; factors are likely not orthonormal"
        )
    return clamp_zero(raw)


def clamp_zero(value: float) -> float:
    """Report values within ``1e-10`` of zero (or tolerated negatives) as zero."""
    return 0.0 if value <= ZERO_TOL else value


def subspace_distance(U, V) -> float:
    """``min_Q ||U - V Q||^2`` over orthogonal ``Q``, i.e. ``2K - 2 ||U^T V||_*``."""
    U, V = _same_shape(U, V)
    d = 2.0 * U.shape[1] - 2.0 * nuclear_norm(U.T @ V)
    return max(d, 0.0)


@dataclass
class InterlacingReport:
    sigma: np.ndarray
    lam: np.ndarray

    @property
    def margin(self) -> float:
        """Smallest ``sigma_k - lambda_k``."""
        return float(np.min(self.sigma - self.lam)) if self.sigma.size else 0.0


def interlacing_check(A, Gn, tol: float = INTERLACE_TOL) -> InterlacingReport:
    """Check ``sigma_k(A) >= lambda_k(G_(n) G_(n)^T) - tol`` for every ``k``."""
    A = np.asarray(A, dtype=np.float64)
    Gn = np.asarray(Gn, dtype=np.float64)
    sigma = singular_values(A)[: A.shape[1]]
    lam = gram_eigvals_desc(Gn @ Gn.T)
    scale = max(1.0, float(lam[0])) if lam.size else 1.0
    bad = np.flatnonzero(sigma < lam - tol * scale)
    if bad.size:
        k = int(bad[0])
        raise DiagnosticError(
            f"interlacing violated at k={k}: sigma={sigma[k]:.12e} < lambda={lam[k]:.12e}"
        )
    return InterlacingReport(sigma, lam)


@dataclass
class GradientReport:
    """Per-mode gradient norms and the spectra used to bound them."""

    per_mode_norm_sq: List[float] = field(default_factory=list)
    sigma: List[np.ndarray] = field(default_factory=list)
    lam: List[np.ndarray] = field(default_factory=list)

    @property
    def total_norm_sq(self) -> float:
        return float(sum(self.per_mode_norm_sq))

    def add(self, A, Gn, check_interlacing: bool = True) -> float:
        g = grad_norm_sq(A, Gn)
        self.per_mode_norm_sq.append(g)
        if check_interlacing:
            rep = interlacing_check(A, Gn)
            self.sigma.append(rep.sigma)
            self.lam.append(rep.lam)
        return g
