"""Multi-reference approximation of all-pairs Wasserstein distances.

One synthetic reference is built by weighted k-means over the stacked
supports; further references are dataset members chosen by k-medoids on the
first linear-approximation matrix.  Each reference yields a distance matrix
that is exact on the reference's own row and column and linear-approximate
elsewhere; the matrices are fused entrywise through their mean and standard
deviation with a bias-correction coefficient beta calibrated on sampled
exact distances.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from .ot import DiscreteDistribution, exact_wasserstein, forward_images
from ._parallel import map_maybe_parallel

__all__ = [
    "DistanceMatrix",
    "ReferenceSet",
    "build_initial_reference",
    "select_additional_references",
    "pairwise_matrix_for_reference",
    "fuse_distance_matrices",
    "calibrate_beta",
    "calibration_errors",
    "multireference_distances",
]

DEFAULT_BETA_GRID = (-1.5, -1.0, -0.5, 0.0, 0.5, 1.0, 1.5)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric nonnegative pairwise distance matrix with a zero diagonal."""

    values: np.ndarray
    item_ids: tuple | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ValueError("distance matrix must be square")
        if not np.isfinite(values).all():
            raise ValueError("distance matrix must be finite")
        scale = max(1.0, float(np.max(np.abs(values))))
        if np.max(np.abs(values - values.T)) > 1e-9 * scale:
            raise ValueError("distance matrix must be symmetric")
        if np.max(np.abs(np.diag(values))) > 1e-9:
            raise ValueError("distance matrix must have a zero diagonal")
        if np.min(values) < 0.0:
            raise ValueError("distance matrix entries must be nonnegative")
        object.__setattr__(self, "values", values)
        if self.item_ids is not None:
            ids = tuple(self.item_ids)
            if len(ids) != values.shape[0]:
                raise ValueError("item_ids length must match the matrix size")
            object.__setattr__(self, "item_ids", ids)

    @property
    def size(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class ReferenceSet:
    """The synthetic initial reference plus dataset indices of the member references."""

    initial: DiscreteDistribution
    additional: tuple = ()

    def __post_init__(self):
        additional = tuple(int(i) for i in self.additional)
        if len(set(additional)) != len(additional):
            raise ValueError("additional reference indices must be distinct")
        if any(i < 0 for i in additional):
            raise ValueError("additional reference indices must be nonnegative")
        object.__setattr__(self, "additional", additional)

    @property
    def n_references(self) -> int:
        return 1 + len(self.additional)


def _kmeans_pp_init(points, weights, k, rng):
    """k-means++ seeding with mass-weighted selection probabilities."""
    n = points.shape[0]
    probs = weights / weights.sum()
    centers = [int(rng.choice(n, p=probs))]
    d2 = np.sum((points - points[centers[0]]) ** 2, axis=1)
    for _ in range(1, k):
        scores = weights * d2
        total = scores.sum()
        if total > 0.0:
            centers.append(int(rng.choice(n, p=scores / total)))
        else:
            centers.append(int(rng.choice(n, p=probs)))
        d2 = np.minimum(d2, np.sum((points - points[centers[-1]]) ** 2, axis=1))
    return points[centers].copy()


def _weighted_kmeans(points, weights, k, rng, n_restarts=10, max_iter=300, tol=1e-6):
    """Weighted Lloyd iterations from k-means++ starts; best inertia wins."""
    best_inertia = np.inf
    best_centroids = None
    for _ in range(n_restarts):
        centroids = _kmeans_pp_init(points, weights, k, rng)
        for _ in range(max_iter):
            d2 = cdist(points, centroids, "sqeuclidean")
            labels = np.argmin(d2, axis=1)
            new = centroids.copy()
            for c in range(k):
                member = labels == c
                if member.any():
                    new[c] = np.average(points[member], axis=0, weights=weights[member])
                else:
                    # re-seed an empty centroid at the heaviest outlier
                    contrib = weights * d2[np.arange(len(labels)), labels]
                    new[c] = points[int(np.argmax(contrib))]
            shift = float(np.max(np.linalg.norm(new - centroids, axis=1)))
            centroids = new
            if shift < tol:
                break
        d2 = cdist(points, centroids, "sqeuclidean")
        inertia = float(np.sum(weights * d2.min(axis=1)))
        if inertia < best_inertia:
            best_inertia = inertia
            best_centroids = centroids
    return best_centroids


def build_initial_reference(dataset, seed=0) -> DiscreteDistribution:
    """Synthetic reference: weighted k-means centroids of all stacked support vectors.

    The centroid count is the floor of the mean support size across the
    dataset (clamped to 1 with a warning if it collapses to 0) and the
    returned reference carries uniform weights.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    dims = {mu.dim for mu in dataset}
    if len(dims) != 1:
        raise ValueError("dataset distributions must share a common dimension")
    k = int(np.floor(np.mean([mu.n_points for mu in dataset])))
    if k < 1:
        warnings.warn("centroid count collapsed to 0; clamping to 1")
        k = 1
    points = np.concatenate([mu.support for mu in dataset], axis=0)
    weights = np.concatenate([mu.weights for mu in dataset])
    rng = np.random.default_rng(seed)
    centroids = _weighted_kmeans(points, weights, k, rng)
    return DiscreteDistribution(support=centroids, weights=np.full(k, 1.0 / k))


def select_additional_references(dataset, d1: DistanceMatrix, n_references, initial=None, seed=0) -> ReferenceSet:
    """Pick member references as k-medoids medoids of the first approximation matrix.

    Clusters d1 into n_references - 1 groups; the medoid indices become the
    additional references.
    """
    from .clustering import kmedoids  # local import to break the module cycle

    size = len(dataset)
    if n_references < 2:
        raise ValueError("at least two references are required here; use the initial reference alone otherwise")
    if n_references - 1 > size:
        raise ValueError("cannot select more references than dataset items")
    if d1.size != size:
        raise ValueError("distance matrix size must match the dataset")
    if initial is None:
        raise ValueError("the initial reference must be supplied to assemble the reference set")
    result = kmedoids(d1, n_clusters=n_references - 1, method="pam", seed=seed)
    return ReferenceSet(initial=initial, additional=tuple(sorted(int(m) for m in result.medoids)))


def _solve_against_reference(mu, reference):
    distance, plan = exact_wasserstein(reference, mu)
    images = forward_images(reference, mu, plan)
    return distance, images.images


def pairwise_matrix_for_reference(dataset, reference, member_index=None, threads=1) -> DistanceMatrix:
    """Per-reference distance matrix: exact on the reference's row/column, linear elsewhere.

    Parameters
    ----------
    dataset : list of DiscreteDistribution
    reference : DiscreteDistribution
        The reference distribution the plans are solved against.
    member_index : int or None
        Dataset index of the reference when it is a dataset member; None for
        the synthetic reference, whose exact rule is vacuous and whose matrix
        is entirely linear-approximate.
    threads : int
        Worker processes for the exact solves; results are identical to the
        sequential order for any thread count.
    """
    size = len(dataset)
    if size == 0:
        raise ValueError("dataset must be non-empty")
    if any(mu.dim != reference.dim for mu in dataset):
        raise ValueError("reference dimension must match the dataset")
    solve = partial(_solve_against_reference, reference=reference)
    results = map_maybe_parallel(solve, dataset, threads)
    exact_row = np.array([r[0] for r in results])
    images = np.stack([r[1] for r in results])
    scaled = images * np.sqrt(reference.weights)[None, :, None]
    flat = scaled.reshape(size, -1)
    values = squareform(pdist(flat))
    if member_index is not None:
        member_index = int(member_index)
        if not 0 <= member_index < size:
            raise ValueError("member_index out of range")
        values[member_index, :] = exact_row
        values[:, member_index] = exact_row
        values[member_index, member_index] = 0.0
    return DistanceMatrix(values=values)


def fuse_distance_matrices(matrices, refs: ReferenceSet, beta: float) -> DistanceMatrix:
    """Fuse per-reference matrices: exact rows kept, elsewhere mean + beta * std.

    The matrix list must follow the reference order (initial first, then the
    additional references in order).  The standard deviation is the
    population one, so a single matrix passes through unchanged for any beta.
    Negative fused values are clamped to zero and counted in a warning.
    """
    if len(matrices) == 0:
        raise ValueError("at least one distance matrix is required")
    if len(matrices) != refs.n_references:
        raise ValueError("need exactly one matrix per reference")
    size = matrices[0].size
    if any(m.size != size for m in matrices):
        raise ValueError("distance matrices must share one shape")
    stack = np.stack([m.values for m in matrices])
    eta = stack.mean(axis=0)
    eps = stack.std(axis=0)
    fused = eta + beta * eps
    negatives = int(np.sum(fused < 0.0)) // 2
    if negatives > 0:
        warnings.warn(f"clamped {negatives} negative fused distances to 0")
    np.maximum(fused, 0.0, out=fused)
    for r, idx in enumerate(refs.additional, start=1):
        exact = matrices[r].values[idx, :]
        fused[idx, :] = exact
        fused[:, idx] = exact
    np.fill_diagonal(fused, 0.0)
    return DistanceMatrix(values=fused, item_ids=matrices[0].item_ids)


def _sample_pairs(members, n_samples, rng):
    """Uniform sample of unordered member pairs without replacement."""
    members = np.asarray(members)
    count = len(members)
    n_pairs = count * (count - 1) // 2
    take = min(n_samples, n_pairs)
    if take == 0:
        return []
    if n_pairs <= max(200_000, 20 * take):
        all_pairs = [(int(members[i]), int(members[j])) for i in range(count) for j in range(i + 1, count)]
        chosen = rng.choice(n_pairs, size=take, replace=False)
        return [all_pairs[int(c)] for c in chosen]
    seen = set()
    pairs = []
    while len(pairs) < take:
        i, j = rng.integers(0, count, size=2)
        if i == j:
            continue
        a, b = (int(members[min(i, j)]), int(members[max(i, j)]))
        if (a, b) not in seen:
            seen.add((a, b))
            pairs.append((a, b))
    return pairs


def _solve_pair(pair, dataset):
    distance, _ = exact_wasserstein(dataset[pair[0]], dataset[pair[1]])
    return distance


def calibration_errors(dataset, matrices, refs, n_samples, beta_grid=None, seed=0, threads=1):
    """Mean relative fusion error per grid beta on sampled exactly-solved pairs.

    Returns (betas, errors, pairs, exact_distances); pairs with an exact
    distance of zero are excluded from every mean with a warning.
    """
    betas = np.asarray(DEFAULT_BETA_GRID if beta_grid is None else beta_grid, dtype=float)
    if betas.size == 0:
        raise ValueError("beta grid must be non-empty")
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    members = [i for i in range(len(dataset)) if i not in set(refs.additional)]
    rng = np.random.default_rng(seed)
    pairs = _sample_pairs(members, n_samples, rng)
    if not pairs:
        return betas, np.zeros_like(betas), [], np.array([])
    exact = np.array(map_maybe_parallel(partial(_solve_pair, dataset=dataset), pairs, threads))
    keep = exact > 0.0
    if not keep.all():
        warnings.warn(f"excluded {int((~keep).sum())} zero-distance pairs from calibration")
    if not keep.any():
        return betas, np.zeros_like(betas), pairs, exact
    rows = np.array([p[0] for p in pairs])
    cols = np.array([p[1] for p in pairs])
    stack = np.stack([m.values[rows, cols] for m in matrices])
    eta = stack.mean(axis=0)[keep]
    eps = stack.std(axis=0)[keep]
    w = exact[keep]
    errors = np.array([float(np.mean(np.abs(eta + b * eps - w) / w)) for b in betas])
    return betas, errors, pairs, exact


def calibrate_beta(dataset, matrices, refs, n_samples=30_000, beta_grid=None, seed=0, threads=1) -> float:
    """Grid-select the fusion coefficient minimizing mean relative error on sampled pairs.

    Ties (all-beta-equal errors happen whenever the per-entry spread is zero)
    break toward the beta closest to zero.
    """
    betas, errors, pairs, exact = calibration_errors(
        dataset, matrices, refs, n_samples, beta_grid=beta_grid, seed=seed, threads=threads
    )
    if len(pairs) == 0 or not np.any(np.asarray(exact) > 0.0):
        zero_pick = betas[np.lexsort((betas, np.abs(betas)))[0]]
        return float(zero_pick)
    best = errors.min()
    candidates = betas[errors == best]
    return float(candidates[np.lexsort((candidates, np.abs(candidates)))[0]])


def multireference_distances(
    dataset,
    n_references,
    beta="auto",
    n_samples=30_000,
    beta_grid=None,
    seed=0,
    threads=1,
):
    """Full distance pipeline: references, per-reference matrices, calibration, fusion.

    Returns (fused DistanceMatrix, info dict).  With beta="auto" the
    coefficient is calibrated on sampled exact pairs; a numeric beta skips
    calibration.  n_references=1 uses the synthetic reference alone.
    """
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31 - 1, size=3)
    sigma1 = build_initial_reference(dataset, seed=int(seeds[0]))
    d1 = pairwise_matrix_for_reference(dataset, sigma1, member_index=None, threads=threads)
    if n_references == 1:
        refs = ReferenceSet(initial=sigma1)
        matrices = [d1]
    else:
        refs = select_additional_references(
            dataset, d1, n_references, initial=sigma1, seed=int(seeds[1])
        )
        matrices = [d1]
        for idx in refs.additional:
            matrices.append(
                pairwise_matrix_for_reference(dataset, dataset[idx], member_index=idx, threads=threads)
            )
    if beta == "auto":
        chosen = calibrate_beta(
            dataset, matrices, refs, n_samples=n_samples, beta_grid=beta_grid,
            seed=int(seeds[2]), threads=threads,
        )
    else:
        chosen = float(beta)
    fused = fuse_distance_matrices(matrices, refs, chosen)
    info = {
        "beta": chosen,
        "references": refs,
        "matrices": matrices,
        "initial_reference": sigma1,
    }
    return fused, info
