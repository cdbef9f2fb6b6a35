"""Dataset-specific flows: spectral clustering of time series and clustering of
graphs represented as bags of node vectors.

Time series are min-max normalized over the whole dataset, optionally
PCA-smoothed, and compared through the 1-D Wasserstein distance between
their normalized power spectral densities (NPSDs).  Graphs carry a node
table (voltage, demand) treated as a discrete distribution plus two scalar
summaries (total demand, node count).  Both flows end in a composed,
jitter-shifted exponential kernel.
"""

import functools
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window
from scipy.spatial.distance import cdist

from ._parallel import map_maybe_parallel
from .kernels import (
    DEFAULT_JITTER,
    KernelMatrix,
    compose_product,
    compose_sum,
    exponential_kernel,
    shift_kernel,
)
from .multiref import DistanceMatrix
from .ot import DiscreteDistribution, wasserstein_1d

__all__ = [
    "TimeSeriesItem",
    "GraphItem",
    "normalize_timeseries",
    "normalize_graphs",
    "npsd",
    "npsd_distance_matrix",
    "pca_smooth",
    "pca_component_count",
    "italy_kernel",
    "melbourne_kernel",
    "graph_kernel",
    "approximation_error",
]

# fraction of non-DC power below which a series counts as constant
_SPECTRAL_FLOOR = 1e-20


@dataclass(frozen=True, eq=False)
class TimeSeriesItem:
    """One normalized series with an optional class label."""

    values: np.ndarray
    label: object = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("series values must be a 1-D vector")
        if values.shape[0] < 2:
            raise ValueError("a series needs at least two samples")
        if not np.isfinite(values).all():
            raise ValueError("series values must be finite")
        if np.any(values < 0.0) or np.any(values > 1.0):
            raise ValueError("series values must be normalized to [0, 1]")
        object.__setattr__(self, "values", values)

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class GraphItem:
    """One graph: normalized per-node (voltage, demand) table plus global summaries."""

    node_table: np.ndarray
    total_demand: float
    node_count: int

    def __post_init__(self):
        table = np.asarray(self.node_table, dtype=np.float64)
        if table.ndim != 2 or table.shape[1] != 2:
            raise ValueError("node table must have (voltage, demand) columns")
        if table.shape[0] < 1:
            raise ValueError("a graph needs at least one node")
        if not np.isfinite(table).all():
            raise ValueError("node table must be finite")
        if np.any(table < 0.0) or np.any(table > 1.0):
            raise ValueError("node table must be normalized to [0, 1]")
        if int(self.node_count) != table.shape[0]:
            raise ValueError("node_count must equal the number of node rows")
        if self.total_demand < 0.0 or self.node_count < 1:
            raise ValueError("graph summaries must be nonnegative")
        object.__setattr__(self, "node_table", table)
        object.__setattr__(self, "total_demand", float(self.total_demand))
        object.__setattr__(self, "node_count", int(self.node_count))

    def distribution(self) -> DiscreteDistribution:
        """The graph's bag of node vectors with uniform weights."""
        n = self.node_table.shape[0]
        return DiscreteDistribution(support=self.node_table, weights=np.full(n, 1.0 / n))


def normalize_timeseries(rows, labels=None):
    """Min-max normalize a stack of raw series to [0, 1] over the whole dataset."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ValueError("expected a series-by-samples array")
    if not np.isfinite(rows).all():
        raise ValueError("series values must be finite")
    if labels is not None and len(labels) != rows.shape[0]:
        raise ValueError("one label per series is required")
    lo, hi = rows.min(), rows.max()
    if hi == lo:
        raise ValueError("dataset has no value range to normalize")
    scaled = (rows - lo) / (hi - lo)
    return [
        TimeSeriesItem(values=row, label=None if labels is None else labels[i])
        for i, row in enumerate(scaled)
    ]


def normalize_graphs(node_tables, total_demands):
    """Build graph items with node features min-max normalized per column.

    Column ranges are pooled over every node of every graph; a constant
    column carries no information and collapses to zero with a warning.
    """
    tables = [np.asarray(t, dtype=np.float64) for t in node_tables]
    if len(tables) != len(total_demands):
        raise ValueError("one total demand per graph is required")
    if not tables:
        raise ValueError("no graphs to normalize")
    pooled = np.vstack(tables)
    if pooled.ndim != 2 or pooled.shape[1] != 2:
        raise ValueError("node tables must have (voltage, demand) columns")
    lo = pooled.min(axis=0)
    hi = pooled.max(axis=0)
    span = hi - lo
    flat = span == 0.0
    if np.any(flat):
        warnings.warn("constant node feature column normalized to 0")
        span = np.where(flat, 1.0, span)
    return [
        GraphItem(
            node_table=np.where(flat, 0.0, (table - lo) / span),
            total_demand=float(demand),
            node_count=table.shape[0],
        )
        for table, demand in zip(tables, total_demands)
    ]


def npsd(series: TimeSeriesItem, samples_per_day=None, window=None) -> DiscreteDistribution:
    """Normalized power spectral density of one series as a 1-D distribution.

    Plain periodogram: squared DFT magnitudes over the nonnegative
    frequencies, with the zero-frequency bin dropped before normalization
    since a normalized series keeps only a mean offset there.  Frequencies
    are in cycles per sample, or cycles per day when samples_per_day is
    given.  An optional window name is applied before the transform.
    """
    values = series.values
    if window is not None:
        values = values * get_window(window, values.shape[0])
    power = np.abs(np.fft.rfft(values)) ** 2
    freqs = np.fft.rfftfreq(values.shape[0])
    shaped = power[1:]
    total = power.sum()
    if total == 0.0 or shaped.sum() <= _SPECTRAL_FLOOR * total:
        raise ValueError("constant series has no spectral shape")
    keep = shaped > 0.0
    weights = shaped[keep] / shaped[keep].sum()
    support = freqs[1:][keep]
    if samples_per_day is not None:
        support = support * float(samples_per_day)
    return DiscreteDistribution(support=support[:, None], weights=weights)


def _series_row(i, spectra):
    return [wasserstein_1d(spectra[i], spectra[j]) for j in range(i + 1, len(spectra))]


def npsd_distance_matrix(dataset, samples_per_day=None, window=None, threads=1) -> DistanceMatrix:
    """All-pairs 1-D Wasserstein distances between the series' NPSDs."""
    spectra = [npsd(item, samples_per_day=samples_per_day, window=window) for item in dataset]
    n = len(spectra)
    worker = functools.partial(_series_row, spectra=spectra)
    rows = map_maybe_parallel(worker, range(n - 1), threads)
    out = np.zeros((n, n))
    for i, row in enumerate(rows):
        out[i, i + 1 :] = row
        out[i + 1 :, i] = row
    return DistanceMatrix(out)


def _retained_components(spectrum, variance_fraction):
    total = spectrum.sum()
    ratios = np.cumsum(spectrum) / total
    ratios[-1] = 1.0
    return int(np.searchsorted(ratios, variance_fraction - 1e-12) + 1)


def _series_stack(dataset):
    if len(dataset) < 2:
        raise ValueError("smoothing needs at least two series")
    lengths = {item.length for item in dataset}
    if len(lengths) != 1:
        raise ValueError("all series must share one length")
    return np.vstack([item.values for item in dataset])


def pca_smooth(dataset, variance_fraction=0.85):
    """Replace each series by its projection onto the top principal directions.

    Components are retained until they cover at least the requested variance
    fraction.  The reconstruction is clipped back into [0, 1] so outputs
    remain valid normalized series.
    """
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    stacked = _series_stack(dataset)
    mean = stacked.mean(axis=0)
    centered = stacked - mean
    _, singulars, directions = np.linalg.svd(centered, full_matrices=False)
    spectrum = singulars**2
    if spectrum.sum() == 0.0:
        return [TimeSeriesItem(values=item.values, label=item.label) for item in dataset]
    top = directions[: _retained_components(spectrum, variance_fraction)]
    smoothed = np.clip(mean + (centered @ top.T) @ top, 0.0, 1.0)
    return [
        TimeSeriesItem(values=row, label=item.label) for row, item in zip(smoothed, dataset)
    ]


def pca_component_count(dataset, variance_fraction=0.85) -> int:
    """Number of principal directions pca_smooth would retain."""
    if not 0.0 < variance_fraction <= 1.0:
        raise ValueError("variance_fraction must lie in (0, 1]")
    stacked = _series_stack(dataset)
    singulars = np.linalg.svd(stacked - stacked.mean(axis=0), compute_uv=False)
    spectrum = singulars**2
    if spectrum.sum() == 0.0:
        return 0
    return _retained_components(spectrum, variance_fraction)


def italy_kernel(npsd_distances: DistanceMatrix, gamma_j) -> KernelMatrix:
    """Shifted exponential kernel on NPSD Wasserstein distances."""
    return shift_kernel(exponential_kernel(npsd_distances, gamma_j), DEFAULT_JITTER)


def melbourne_kernel(dataset, gamma_j, gamma_t, gamma_a, npsd_distances=None, threads=1) -> KernelMatrix:
    """Spectral kernel modulated by instantaneous and total amplitude similarity.

    k_J(spectra) times the sum of k_T (squared Euclidean distance between
    the series) and k_A (squared difference of their totals), every factor
    jitter-shifted before composition.  Precomputed NPSD distances may be
    passed so bandwidth sweeps do not repeat the transport solves.
    """
    if npsd_distances is None:
        npsd_distances = npsd_distance_matrix(dataset, threads=threads)
    stacked = np.vstack([item.values for item in dataset])
    if npsd_distances.size != stacked.shape[0]:
        raise ValueError("distance matrix size must match the dataset")
    k_j = shift_kernel(exponential_kernel(npsd_distances, gamma_j), DEFAULT_JITTER)
    time_distance = DistanceMatrix(cdist(stacked, stacked))
    k_t = shift_kernel(exponential_kernel(time_distance, gamma_t), DEFAULT_JITTER)
    totals = stacked.sum(axis=1)
    total_distance = DistanceMatrix(np.abs(totals[:, None] - totals[None, :]))
    k_a = shift_kernel(exponential_kernel(total_distance, gamma_a), DEFAULT_JITTER)
    return compose_product(k_j, compose_sum(k_t, k_a))


def graph_kernel(dataset, fused_d: DistanceMatrix, gamma_w, gamma_p, gamma_v) -> KernelMatrix:
    """Wasserstein kernel on fused node-distribution distances, modulated by
    total-demand and node-count similarity; all three factors jitter-shifted."""
    if fused_d.size != len(dataset):
        raise ValueError("distance matrix size must match the dataset")
    k_w = shift_kernel(exponential_kernel(fused_d, gamma_w), DEFAULT_JITTER)
    demand = np.array([item.total_demand for item in dataset], dtype=np.float64)
    count = np.array([item.node_count for item in dataset], dtype=np.float64)
    k_p = shift_kernel(
        exponential_kernel(DistanceMatrix(np.abs(demand[:, None] - demand[None, :])), gamma_p),
        DEFAULT_JITTER,
    )
    k_v = shift_kernel(
        exponential_kernel(DistanceMatrix(np.abs(count[:, None] - count[None, :])), gamma_v),
        DEFAULT_JITTER,
    )
    return compose_product(k_w, compose_sum(k_p, k_v))


def approximation_error(d_hat, exact_pairs) -> dict:
    """Relative-error summary of an approximate distance matrix on sampled pairs.

    exact_pairs holds (i, j, exact) triples; zero exact distances leave the
    relative error undefined and are excluded with a warning.  The summary
    reports the mean and the 70th and 90th percentiles.
    """
    values = d_hat.values if isinstance(d_hat, DistanceMatrix) else np.asarray(d_hat, dtype=np.float64)
    errors = []
    skipped = 0
    for i, j, exact in exact_pairs:
        if exact == 0.0:
            skipped += 1
            continue
        errors.append(abs(values[i, j] - exact) / exact)
    if skipped:
        warnings.warn(f"excluded {skipped} zero-distance pairs from the error summary")
    if not errors:
        raise ValueError("no pairs with positive exact distance")
    errors = np.array(errors)
    return {
        "mean": float(errors.mean()),
        "p70": float(np.percentile(errors, 70)),
        "p90": float(np.percentile(errors, 90)),
        "count": int(errors.size),
    }
