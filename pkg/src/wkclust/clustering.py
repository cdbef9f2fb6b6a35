"""K-medoids clustering over feature maps or precomputed distance matrices.

Two optimizers are provided.  "pam" evaluates every (medoid, candidate)
swap against the full distance matrix and applies the single best
improvement per pass.  "alternate" interleaves nearest-medoid assignment
with per-cluster medoid recomputation and never materializes the full
matrix, which keeps large feature-map inputs cheap.  Both start from
k-medoids++ seeding and are deterministic given the seed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .kernels import KernelMatrix
from .kpca import FeatureMap
from .multiref import DistanceMatrix

__all__ = ["ClusteringResult", "kmedoids", "kernel_kmedoids_objective"]

_IMPROVEMENT_TOL = 1e-12
_PAM_MAX_PASSES = 100
_ALTERNATE_MAX_ITER = 300


@dataclass(frozen=True, eq=False)
class ClusteringResult:
    """Labels, medoid item indices, and the sum-of-distances objective."""

    assignments: np.ndarray
    medoids: tuple
    objective: float
    objective_history: tuple = ()

    def __post_init__(self):
        assignments = np.asarray(self.assignments, dtype=np.int64)
        medoids = tuple(int(m) for m in self.medoids)
        n_clusters = len(medoids)
        if len(set(medoids)) != n_clusters:
            raise ValueError("medoids must be distinct")
        if assignments.ndim != 1:
            raise ValueError("assignments must be a flat label vector")
        if n_clusters == 0 or assignments.size < n_clusters:
            raise ValueError("need at least one item per cluster")
        if assignments.min() < 0 or assignments.max() >= n_clusters:
            raise ValueError("labels must index the medoid list")
        for label, medoid in enumerate(medoids):
            if not 0 <= medoid < assignments.size:
                raise ValueError("medoid index out of range")
            if assignments[medoid] != label:
                raise ValueError("every medoid must belong to its own cluster")
        object.__setattr__(self, "assignments", assignments)
        object.__setattr__(self, "medoids", medoids)
        object.__setattr__(self, "objective_history", tuple(float(x) for x in self.objective_history))

    @property
    def n_clusters(self) -> int:
        return len(self.medoids)


class _Geometry:
    """Uniform distance access over points or a precomputed matrix."""

    def __init__(self, data):
        if isinstance(data, DistanceMatrix):
            self.points = None
            self.matrix = data.values
            self.size = data.size
        elif isinstance(data, FeatureMap):
            self.points = np.ascontiguousarray(data.coords.T)
            self.matrix = None
            self.size = self.points.shape[0]
        else:
            arr = np.asarray(data, dtype=np.float64)
            if arr.ndim != 2:
                raise ValueError("expected a FeatureMap, DistanceMatrix, or 2-D point array")
            self.points = arr
            self.matrix = None
            self.size = arr.shape[0]

    def columns(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        if self.matrix is not None:
            return self.matrix[:, indices]
        return cdist(self.points, self.points[indices])

    def submatrix(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        if self.matrix is not None:
            return self.matrix[np.ix_(indices, indices)]
        return cdist(self.points[indices], self.points[indices])

    def full(self):
        if self.matrix is None:
            self.matrix = cdist(self.points, self.points)
        return self.matrix


def _kmedoids_pp(geometry, n_clusters, rng):
    """k-medoids++ seeding: squared-distance-proportional draws."""
    size = geometry.size
    chosen = [int(rng.integers(size))]
    d2 = geometry.columns([chosen[0]])[:, 0] ** 2
    while len(chosen) < n_clusters:
        total = d2.sum()
        if total > 0.0:
            pick = int(rng.choice(size, p=d2 / total))
        else:
            remaining = np.setdiff1d(np.arange(size), np.asarray(chosen))
            pick = int(rng.choice(remaining))
        chosen.append(pick)
        d2 = np.minimum(d2, geometry.columns([pick])[:, 0] ** 2)
    return sorted(chosen)


def _final_labels(geometry, medoids):
    """Nearest-medoid labels with each medoid pinned to its own cluster."""
    med_arr = np.asarray(medoids)
    d_med = geometry.columns(med_arr)
    labels = np.argmin(d_med, axis=1)
    labels[med_arr] = np.arange(med_arr.size)
    objective = float(d_med[np.arange(geometry.size), labels].sum())
    return labels, objective


def _pam(geometry, medoids, history):
    distance = geometry.full()
    size = geometry.size
    n_clusters = len(medoids)
    for _ in range(_PAM_MAX_PASSES):
        med_arr = np.asarray(medoids)
        d_med = distance[:, med_arr]
        labels = np.argmin(d_med, axis=1)
        if n_clusters > 1:
            part = np.partition(d_med, 1, axis=1)
            d_nearest, d_second = part[:, 0], part[:, 1]
        else:
            d_nearest = d_med[:, 0]
            d_second = np.full(size, np.inf)
        history.append(float(d_nearest.sum()))
        # delta of swapping medoid position m for candidate h, all pairs at once:
        # items not owned by m can only improve toward h; items owned by m fall
        # back to their second-nearest medoid unless h is closer
        base = np.minimum(0.0, distance - d_nearest[:, None])
        deltas = base.sum(axis=0)[None, :].repeat(n_clusters, axis=0)
        for m in range(n_clusters):
            member = labels == m
            if not member.any():
                continue
            block = distance[member]
            owned = (
                np.minimum(block, d_second[member, None])
                - d_nearest[member, None]
                - base[member]
            )
            deltas[m] += owned.sum(axis=0)
        deltas[:, med_arr] = np.inf
        flat = int(np.argmin(deltas))
        m_pos, candidate = divmod(flat, size)
        if deltas[m_pos, candidate] >= -_IMPROVEMENT_TOL * max(1.0, history[-1]):
            break
        medoids[m_pos] = candidate
        medoids.sort()
    labels, objective = _final_labels(geometry, medoids)
    history.append(objective)
    return medoids, labels, objective


def _alternate(geometry, medoids, history):
    size = geometry.size
    n_clusters = len(medoids)
    labels = None
    for _ in range(_ALTERNATE_MAX_ITER):
        d_med = geometry.columns(medoids)
        new_labels = np.argmin(d_med, axis=1)
        new_medoids = list(medoids)
        for t in range(n_clusters):
            members = np.flatnonzero(new_labels == t)
            if members.size == 0:
                warnings.warn("re-seeding an empty cluster at the farthest point from its medoid")
                column = geometry.columns([medoids[t]])[:, 0]
                taken = set(new_medoids[:t] + new_medoids[t + 1 :])
                open_items = np.array([i for i in range(size) if i not in taken])
                new_medoids[t] = int(open_items[np.argmax(column[open_items])])
                continue
            within = geometry.submatrix(members)
            new_medoids[t] = int(members[np.argmin(within.sum(axis=1))])
        _dedupe_medoids(geometry, new_medoids)
        converged = labels is not None and np.array_equal(labels, new_labels) and new_medoids == medoids
        medoids, labels = new_medoids, new_labels
        d_now = geometry.columns(medoids)
        history.append(float(d_now[np.arange(size), labels].sum()))
        if converged:
            break
    medoids = sorted(medoids)
    labels, objective = _final_labels(geometry, medoids)
    return medoids, labels, objective


def _dedupe_medoids(geometry, medoids):
    """Replace any repeated medoid with the open item farthest from it (reseed fallout)."""
    seen = set()
    for t, medoid in enumerate(medoids):
        if medoid not in seen:
            seen.add(medoid)
            continue
        warnings.warn("duplicate medoid after re-seeding; moving it to the farthest open item")
        column = geometry.columns([medoid])[:, 0]
        open_items = np.array([i for i in range(geometry.size) if i not in seen])
        medoids[t] = int(open_items[np.argmax(column[open_items])])
        seen.add(medoids[t])


def kmedoids(data, n_clusters, method="pam", seed=0) -> ClusteringResult:
    """Cluster items into n_clusters groups around medoid items.

    Parameters
    ----------
    data : FeatureMap, DistanceMatrix, or ndarray of shape (S, d)
        Item coordinates (Euclidean distances) or a precomputed matrix.
    n_clusters : int
    method : str
        "pam" for best-improvement swaps on the full matrix, "alternate"
        for assignment/update iterations with lazy distances.
    seed : int
        Drives k-medoids++ seeding; identical seeds give identical results.
    """
    geometry = _Geometry(data)
    if not 1 <= n_clusters <= geometry.size:
        raise ValueError("cluster count must lie in [1, number of items]")
    rng = np.random.default_rng(seed)
    medoids = _kmedoids_pp(geometry, n_clusters, rng)
    history = []
    if method == "pam":
        medoids, labels, objective = _pam(geometry, medoids, history)
    elif method == "alternate":
        medoids, labels, objective = _alternate(geometry, medoids, history)
    else:
        raise ValueError(f"unknown method: {method!r}")
    return ClusteringResult(
        assignments=labels,
        medoids=tuple(medoids),
        objective=objective,
        objective_history=tuple(history),
    )


def kernel_kmedoids_objective(kernel: KernelMatrix, result: ClusteringResult) -> float:
    """Sum of kernel-induced squared distances of items to their medoids.

    Expands ||phi(i) - phi(m)||^2 = K_ii + K_mm - 2 K_im under the kernel's
    implicit map; the ClusteringResult contract (each medoid carries its own
    label) makes the diagonal terms cancel exactly for the medoids.
    """
    assignments = result.assignments
    medoids = np.asarray(result.medoids, dtype=np.int64)
    k = kernel.values
    if assignments.size != k.shape[0]:
        raise ValueError("one label per item is required")
    med_of = medoids[assignments]
    diag = np.diag(k)
    return float(np.sum(diag + diag[med_of] - 2.0 * k[np.arange(assignments.size), med_of]))
