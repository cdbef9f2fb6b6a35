"""Clustering of distributional data through transport-based kernels.

Bags of vectors and spectral densities are compared with a multi-reference
linear approximation of all-pairs Wasserstein distances, embedded through
shifted exponential kernels and kernel PCA, clustered with k-medoids, and
scored by sampled validity indices; kernel bandwidths can be selected by
Bayesian optimization of those scores.
"""

from .clustering import ClusteringResult, kernel_kmedoids_objective, kmedoids
from .kernels import (
    DEFAULT_JITTER,
    KernelMatrix,
    KernelParams,
    center_kernel,
    compose_product,
    compose_sum,
    exponential_kernel,
    gamma_max_search,
    shift_kernel,
)
from .kpca import FeatureMap, NystromFactors, exact_feature_map, nystrom_factors, nystrom_feature_map
from .multiref import (
    DistanceMatrix,
    ReferenceSet,
    build_initial_reference,
    calibrate_beta,
    fuse_distance_matrices,
    multireference_distances,
    pairwise_matrix_for_reference,
    select_additional_references,
)
from .ot import (
    DiscreteDistribution,
    ForwardImageSet,
    TransportPlan,
    exact_wasserstein,
    forward_images,
    lot_distance,
    wasserstein_1d,
)
from .pipelines import (
    GraphItem,
    TimeSeriesItem,
    approximation_error,
    graph_kernel,
    italy_kernel,
    melbourne_kernel,
    normalize_graphs,
    normalize_timeseries,
    npsd,
    npsd_distance_matrix,
    pca_smooth,
)
from .tuning import EvalRecord, TuningTrace, make_bounds, make_clustering_objective, tune
from .validity import (
    ValidityReport,
    consensus_index,
    davies_bouldin,
    exact_gk,
    fgk,
    normalize_db,
    purity,
)

__version__ = "0.1.0"

__all__ = [
    "ClusteringResult",
    "DEFAULT_JITTER",
    "DiscreteDistribution",
    "DistanceMatrix",
    "EvalRecord",
    "FeatureMap",
    "ForwardImageSet",
    "GraphItem",
    "KernelMatrix",
    "KernelParams",
    "NystromFactors",
    "ReferenceSet",
    "TimeSeriesItem",
    "TransportPlan",
    "TuningTrace",
    "ValidityReport",
    "approximation_error",
    "build_initial_reference",
    "calibrate_beta",
    "center_kernel",
    "compose_product",
    "compose_sum",
    "consensus_index",
    "davies_bouldin",
    "exact_feature_map",
    "exact_gk",
    "exact_wasserstein",
    "exponential_kernel",
    "fgk",
    "forward_images",
    "fuse_distance_matrices",
    "gamma_max_search",
    "graph_kernel",
    "italy_kernel",
    "kernel_kmedoids_objective",
    "kmedoids",
    "lot_distance",
    "make_bounds",
    "make_clustering_objective",
    "melbourne_kernel",
    "multireference_distances",
    "normalize_db",
    "normalize_graphs",
    "normalize_timeseries",
    "npsd",
    "npsd_distance_matrix",
    "nystrom_factors",
    "nystrom_feature_map",
    "pairwise_matrix_for_reference",
    "pca_smooth",
    "purity",
    "select_additional_references",
    "shift_kernel",
    "tune",
    "wasserstein_1d",
]
