"""Feature maps from centered kernels: exact eigenmaps and Nystrom approximation.

The exact map scales eigenvector coordinates so that the Gram matrix of the
mapped points reproduces the centered kernel on the retained eigenspace.
The Nystrom route approximates eigenpairs from a column sample, rebuilds
approximate maps, re-orthogonalizes them by an uncentered PCA, and then
truncates; at full sampling it reduces to the exact map.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .kernels import KernelMatrix

__all__ = [
    "FeatureMap",
    "NystromFactors",
    "exact_feature_map",
    "nystrom_feature_map",
    "nystrom_factors",
]

_EIGENVALUE_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Mapped coordinates, one column per item, rows ordered by eigenvalue.

    Parameters
    ----------
    coords : ndarray of shape (U, S)
        Column j is the feature vector of item j.
    eigenvalues : ndarray of shape (U,)
        Positive, non-increasing; row u of coords has squared norm equal to
        eigenvalue u.
    method : str
        "exact" or "nystrom(M)".
    """

    coords: np.ndarray
    eigenvalues: np.ndarray
    method: str = "exact"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        eigenvalues = np.asarray(self.eigenvalues, dtype=np.float64)
        if coords.ndim != 2:
            raise ValueError("coords must be a 2-D array")
        if eigenvalues.ndim != 1 or eigenvalues.shape[0] != coords.shape[0]:
            raise ValueError("one eigenvalue per coordinate row is required")
        if np.any(eigenvalues <= 0.0):
            raise ValueError("retained eigenvalues must be positive")
        if np.any(np.diff(eigenvalues) > 1e-12 * eigenvalues[0]):
            raise ValueError("eigenvalues must be non-increasing")
        gram = coords @ coords.T
        norms = np.sqrt(np.diag(gram))
        off = np.abs(gram) - 1e-6 * np.outer(norms, norms)
        np.fill_diagonal(off, -np.inf)
        if np.max(off) > 0.0:
            raise ValueError("feature-map rows must be mutually orthogonal")
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "eigenvalues", eigenvalues)

    @property
    def n_components(self) -> int:
        return self.coords.shape[0]

    @property
    def n_items(self) -> int:
        return self.coords.shape[1]


@dataclass(frozen=True, eq=False)
class NystromFactors:
    """Approximate eigenpairs recovered from a column sample."""

    sampled_columns: tuple
    lambda_hat: np.ndarray
    v_hat: np.ndarray

    def __post_init__(self):
        sampled = tuple(int(i) for i in self.sampled_columns)
        if len(set(sampled)) != len(sampled):
            raise ValueError("sampled column indices must be distinct")
        lambda_hat = np.asarray(self.lambda_hat, dtype=np.float64)
        v_hat = np.asarray(self.v_hat, dtype=np.float64)
        if v_hat.ndim != 2 or lambda_hat.ndim != 1 or v_hat.shape[1] != lambda_hat.shape[0]:
            raise ValueError("one approximated eigenvalue per eigenvector column is required")
        if len(sampled) > v_hat.shape[0]:
            raise ValueError("cannot sample more columns than items")
        object.__setattr__(self, "sampled_columns", sampled)
        object.__setattr__(self, "lambda_hat", lambda_hat)
        object.__setattr__(self, "v_hat", v_hat)


def _sorted_eigh(matrix):
    """Symmetric eigendecomposition, descending order, sign-fixed eigenvectors."""
    lam, vec = np.linalg.eigh(matrix)
    order = np.argsort(lam, kind="stable")[::-1]
    lam = lam[order]
    vec = vec[:, order]
    flips = np.sign(vec[np.argmax(np.abs(vec), axis=0), np.arange(vec.shape[1])])
    flips[flips == 0.0] = 1.0
    return lam, vec * flips


def _select_components(eigenvalues, selection):
    """Indices retained under a selection rule, best eigenvalues first.

    Rules: "kaiser" keeps eigenvalues above 1; ("top_k", u) keeps the
    largest u; ("variance_fraction", f) keeps the smallest prefix reaching
    the fraction f of the total.  A rule that keeps nothing falls back to
    the single top component with a warning.
    """
    count = len(eigenvalues)
    if selection == "kaiser":
        kept = int(np.sum(eigenvalues > 1.0))
    elif isinstance(selection, tuple) and len(selection) == 2 and selection[0] == "top_k":
        requested = int(selection[1])
        if requested < 1:
            raise ValueError("top_k must request at least one component")
        kept = min(requested, count)
    elif isinstance(selection, tuple) and len(selection) == 2 and selection[0] == "variance_fraction":
        fraction = float(selection[1])
        if not 0.0 < fraction <= 1.0:
            raise ValueError("variance fraction must lie in (0, 1]")
        ratios = np.cumsum(eigenvalues) / np.sum(eigenvalues)
        kept = int(np.searchsorted(ratios, fraction - 1e-12) + 1)
    else:
        raise ValueError(f"unknown selection rule: {selection!r}")
    if kept == 0:
        warnings.warn("selection kept no components; retaining the top one")
        kept = 1
    return kept


def exact_feature_map(k_centered: KernelMatrix, selection="kaiser") -> FeatureMap:
    """Eigenmap of a centered kernel with spectral truncation.

    Coordinates are Lambda^{-1/2} V^T K for the retained eigenpairs, so the
    Gram matrix of the columns reproduces the kernel restricted to the
    retained eigenspace.  Eigenvalues below 1e-10 of the largest are always
    dropped before the selection rule is applied.
    """
    if not k_centered.centered:
        raise ValueError("feature maps require a centered kernel")
    lam, vec = _sorted_eigh(k_centered.values)
    floor = _EIGENVALUE_FLOOR * max(lam[0], 0.0)
    usable = int(np.sum(lam > floor))
    if usable == 0:
        raise ValueError("kernel has no positive eigenvalues to map")
    lam = lam[:usable]
    vec = vec[:, :usable]
    kept = _select_components(lam, selection)
    lam = lam[:kept]
    vec = vec[:, :kept]
    coords = (vec / np.sqrt(lam)).T @ k_centered.values
    return FeatureMap(coords=coords, eigenvalues=lam, method="exact")


def nystrom_factors(k_columns, sample) -> NystromFactors:
    """Approximate eigenpairs of the full centered kernel from a column slice.

    Parameters
    ----------
    k_columns : ndarray of shape (S, M)
        Columns of the centered kernel at the sampled indices.
    sample : sequence of int
        The sampled indices, in the order of the columns.

    The sample block's eigenvalues are rescaled by S/M; eigenvalues below
    1e-10 of the block maximum are dropped before inversion with a warning.
    """
    k_columns = np.asarray(k_columns, dtype=np.float64)
    sample = [int(i) for i in sample]
    size, m = k_columns.shape
    if m < 2:
        raise ValueError("at least two sampled columns are required")
    if len(sample) != m:
        raise ValueError("one sampled index per column is required")
    if len(set(sample)) != m:
        raise ValueError("sampled indices must be distinct")
    if any(not 0 <= i < size for i in sample):
        raise ValueError("sampled indices out of range")
    block = k_columns[sample, :]
    if np.max(np.abs(block - block.T)) > 1e-9 * max(1.0, float(np.max(np.abs(block)))):
        raise ValueError("sampled block is not symmetric; columns and sample disagree")
    block = (block + block.T) / 2.0
    lam, vec = _sorted_eigh(block)
    floor = _EIGENVALUE_FLOOR * max(lam[0], 0.0)
    usable = int(np.sum(lam > floor))
    if usable == 0:
        raise ValueError("sampled kernel block has no usable eigenvalues")
    if usable < m:
        warnings.warn(f"dropped {m - usable} near-null sample directions before inversion")
    lam = lam[:usable]
    vec = vec[:, :usable]
    lambda_hat = (size / m) * lam
    v_hat = np.sqrt(m / size) * (k_columns @ (vec / lam))
    return NystromFactors(sampled_columns=tuple(sample), lambda_hat=lambda_hat, v_hat=v_hat)


def nystrom_feature_map(k_columns, sample, selection="kaiser") -> FeatureMap:
    """Approximate feature map from sampled kernel columns.

    Builds approximate maps from the Nystrom eigenpairs, re-orthogonalizes
    them by PCA on the mapped coordinates (no centering), then truncates by
    the selection rule.  With every column sampled this reduces to the
    exact map.
    """
    factors = nystrom_factors(k_columns, sample)
    phi = np.sqrt(factors.lambda_hat)[:, None] * factors.v_hat.T
    gram = phi @ phi.T
    spectrum, rotation = _sorted_eigh(gram)
    floor = _EIGENVALUE_FLOOR * max(spectrum[0], 0.0)
    usable = int(np.sum(spectrum > floor))
    if usable == 0:
        raise ValueError("approximate maps are numerically null")
    spectrum = spectrum[:usable]
    rotation = rotation[:, :usable]
    kept = _select_components(spectrum, selection)
    spectrum = spectrum[:kept]
    rotation = rotation[:, :kept]
    coords = rotation.T @ phi
    return FeatureMap(
        coords=coords,
        eigenvalues=spectrum,
        method=f"nystrom({len(factors.sampled_columns)})",
    )
