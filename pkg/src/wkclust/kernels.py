"""Exponential kernels on distance matrices, jitter shifts, composition, centering.

A distance matrix D maps to the kernel exp(-gamma * D**2).  Wasserstein
distance matrices give kernels that need not be positive definite, so a
small diagonal shift (the jitter) restores definiteness without changing
k-medoids minimizers.  Kernels compose by elementwise product and by
nonnegative weighted sum, and are double-centered before eigenanalysis.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .multiref import DistanceMatrix

__all__ = [
    "KernelMatrix",
    "KernelParams",
    "exponential_kernel",
    "shift_kernel",
    "compose_product",
    "compose_sum",
    "center_kernel",
    "gamma_max_search",
]

DEFAULT_JITTER = 1e-3


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Symmetric kernel matrix; tracks centering and any direct diagonal shift."""

    values: np.ndarray
    centered: bool = False
    jitter: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("kernel matrix must be square")
        if not np.isfinite(values).all():
            raise ValueError("kernel matrix must be finite")
        scale = max(1.0, float(np.max(np.abs(values))))
        if np.max(np.abs(values - values.T)) > 1e-9 * scale:
            raise ValueError("kernel matrix must be symmetric")
        if self.jitter < 0.0:
            raise ValueError("jitter must be nonnegative")
        if self.centered:
            sums = values.sum(axis=0)
            if np.max(np.abs(sums)) > 1e-7 * scale * values.shape[0]:
                raise ValueError("centered kernel must have zero row and column sums")
        object.__setattr__(self, "values", values)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Positive kernel parameters with elementwise box bounds."""

    gammas: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        gammas = np.atleast_1d(np.asarray(self.gammas, dtype=np.float64))
        lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if not (gammas.shape == lower.shape == upper.shape):
            raise ValueError("gammas and bounds must share one shape")
        if np.any(lower <= 0.0):
            raise ValueError("lower bounds must be positive")
        if np.any(lower > upper):
            raise ValueError("lower bounds must not exceed upper bounds")
        if np.any(gammas < lower) or np.any(gammas > upper):
            raise ValueError("gammas must lie within the bounds")
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)


def exponential_kernel(distance: DistanceMatrix, gamma: float) -> KernelMatrix:
    """Entrywise exp(-gamma * D**2); unit diagonal by construction."""
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    values = np.exp(-gamma * distance.values**2)
    return KernelMatrix(values=values, centered=False, jitter=0.0)


def shift_kernel(kernel: KernelMatrix, jitter: float = DEFAULT_JITTER) -> KernelMatrix:
    """Add jitter to the diagonal, shifting every eigenvalue up by that amount."""
    if jitter <= 0.0:
        raise ValueError("jitter must be positive")
    if kernel.centered:
        raise ValueError("shift applies to uncentered kernels")
    values = kernel.values + jitter * np.eye(kernel.size)
    return KernelMatrix(values=values, centered=False, jitter=kernel.jitter + jitter)


def compose_product(k1: KernelMatrix, k2: KernelMatrix) -> KernelMatrix:
    """Elementwise product; positive definiteness is preserved (Schur product)."""
    _check_composable(k1, k2)
    return KernelMatrix(values=k1.values * k2.values, centered=False, jitter=0.0)


def compose_sum(k1: KernelMatrix, k2: KernelMatrix, alpha1: float = 1.0, alpha2: float = 1.0) -> KernelMatrix:
    """Nonnegative weighted sum of two kernels."""
    if alpha1 < 0.0 or alpha2 < 0.0:
        raise ValueError("combination weights must be nonnegative")
    _check_composable(k1, k2)
    return KernelMatrix(values=alpha1 * k1.values + alpha2 * k2.values, centered=False, jitter=0.0)


def _check_composable(k1, k2):
    if k1.values.shape != k2.values.shape:
        raise ValueError("kernels must share one shape")
    if k1.centered or k2.centered:
        raise ValueError("composition applies to uncentered kernels")


def center_kernel(kernel: KernelMatrix) -> KernelMatrix:
    """Double centering: subtract row and column means, add back the grand mean.

    Equal to H K H with H = I - (1/S) 11^T; the constant vector is
    annihilated, so row and column sums vanish.
    """
    k = kernel.values
    size = k.shape[0]
    row = k.mean(axis=1, keepdims=True)
    col = k.mean(axis=0, keepdims=True)
    grand = k.mean()
    centered = k - row - col + grand
    centered = (centered + centered.T) / 2.0
    return KernelMatrix(values=centered, centered=True, jitter=kernel.jitter)


def _offdiag(values):
    mask = ~np.eye(values.shape[0], dtype=bool)
    return values[mask]


def gamma_max_search(distance: DistanceMatrix) -> float:
    """The gamma maximizing the off-diagonal variance of exp(-gamma * D**2).

    Golden-section search over log gamma in [log(1e-6/m), log(1e6/m)] with
    m the mean off-diagonal squared distance, refined to 1e-3 relative
    tolerance.  A degenerate spectrum of off-diagonal values (all equal, so
    the variance is zero everywhere) falls back to 1/m by convention.
    """
    if distance.size < 2:
        raise ValueError("need at least two items")
    d2 = _offdiag(distance.values**2)
    m = float(d2.mean())
    if m <= 0.0:
        raise ValueError("all distances are zero; no scale to search")
    if float(np.ptp(d2)) == 0.0:
        warnings.warn("single off-diagonal value; variance is flat, returning 1/m")
        return 1.0 / m

    def variance(log_gamma):
        return float(np.var(np.exp(-np.exp(log_gamma) * d2)))

    lo = np.log(1e-6 / m)
    hi = np.log(1e6 / m)
    inv_phi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = variance(c), variance(d)
    while (b - a) > 1e-4:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = variance(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = variance(d)
    return float(np.exp((a + b) / 2.0))
