"""Cluster validity indices: Goodman-Kruskal (exact and sampled), consensus,
purity, and a medoid-based Davies-Bouldin under pluggable separation measures.

The Goodman-Kruskal index compares within-cluster distances against
between-cluster distances: concordant comparisons (within smaller) push it
toward 1, discordant toward -1, ties count for neither.  The sampled
variant draws a fixed number of within and between point pairs per
repetition and averages the per-repetition indices, which decouples the
cost from the dataset size.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.metrics import adjusted_mutual_info_score

from .kpca import FeatureMap
from .multiref import DistanceMatrix

__all__ = [
    "ValidityReport",
    "exact_gk",
    "fgk",
    "consensus_index",
    "purity",
    "davies_bouldin",
    "normalize_db",
]

DEFAULT_FGK_PAIRS = 100
DEFAULT_FGK_REPETITIONS = 35


@dataclass(frozen=True)
class ValidityReport:
    """Bundled validity indices with the sampling configuration that produced them."""

    fgk: float
    ci: float
    purity: float | None = None
    db_scores: dict = field(default_factory=dict)
    sampling: tuple = (DEFAULT_FGK_PAIRS, DEFAULT_FGK_REPETITIONS, 0)

    def __post_init__(self):
        if not -1.0 <= self.fgk <= 1.0:
            raise ValueError("fgk must lie in [-1, 1]")
        if not 0.0 <= self.ci <= 1.0:
            raise ValueError("ci must lie in [0, 1]")
        if self.purity is not None and not 0.0 <= self.purity <= 1.0:
            raise ValueError("purity must lie in [0, 1]")
        if len(self.sampling) != 3:
            raise ValueError("sampling must be (pairs, repetitions, seed)")

    def to_dict(self) -> dict:
        pairs, repetitions, seed = self.sampling
        return {
            "fgk": self.fgk,
            "ci": self.ci,
            "purity": self.purity,
            "db_scores": dict(self.db_scores),
            "sampling": {"pairs": int(pairs), "repetitions": int(repetitions), "seed": int(seed)},
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "ValidityReport":
        sampling = payload.get("sampling", {})
        return cls(
            fgk=float(payload["fgk"]),
            ci=float(payload["ci"]),
            purity=None if payload.get("purity") is None else float(payload["purity"]),
            db_scores=dict(payload.get("db_scores", {})),
            sampling=(
                int(sampling.get("pairs", DEFAULT_FGK_PAIRS)),
                int(sampling.get("repetitions", DEFAULT_FGK_REPETITIONS)),
                int(sampling.get("seed", 0)),
            ),
        )


def _as_points(features):
    if isinstance(features, FeatureMap):
        return np.ascontiguousarray(features.coords.T)
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a FeatureMap or an items-by-components array")
    return arr


def _count_concordance(within, between):
    """Concordant/discordant counts by rank search; ties fall in neither."""
    ordered = np.sort(between)
    higher = len(ordered) - np.searchsorted(ordered, within, side="right")
    lower = np.searchsorted(ordered, within, side="left")
    return int(higher.sum()), int(lower.sum())


def exact_gk(features, assignments) -> float:
    """Goodman-Kruskal index over every within/between distance comparison."""
    points = _as_points(features)
    labels = np.asarray(assignments)
    if labels.shape[0] != points.shape[0]:
        raise ValueError("one label per item is required")
    if len(np.unique(labels)) < 2:
        raise ValueError("at least two clusters are required")
    d = cdist(points, points)
    iu = np.triu_indices(points.shape[0], k=1)
    same = labels[iu[0]] == labels[iu[1]]
    within = d[iu][same]
    between = d[iu][~same]
    if within.size == 0 or between.size == 0:
        raise ValueError("need at least one within pair and one between pair")
    concordant, discordant = _count_concordance(within, between)
    if concordant + discordant == 0:
        raise ValueError("all distance comparisons tied; index undefined")
    return (concordant - discordant) / (concordant + discordant)


def _cluster_index(labels):
    cats, counts = np.unique(labels, return_counts=True)
    members = {c: np.flatnonzero(labels == c) for c in cats}
    return cats, counts, members


def _sample_within(rng, cats, counts, members, n_pairs):
    """Unique within-cluster pairs: cluster size-weighted, pair uniform inside.

    Draws arrive in batches; two independent uniform member picks rejected
    on collision give the uniform distinct-pair law.
    """
    eligible = counts >= 2
    weights = counts[eligible].astype(float)
    weights /= weights.sum()
    pool = cats[eligible]
    pool_counts = counts[eligible]
    seen = set()
    out = []
    while len(out) < n_pairs:
        batch = max(16, 2 * (n_pairs - len(out)))
        picks = rng.choice(len(pool), size=batch, p=weights)
        sizes = pool_counts[picks]
        a = (rng.random(batch) * sizes).astype(np.int64)
        b = (rng.random(batch) * sizes).astype(np.int64)
        for p, i, j in zip(picks, a, b):
            if i == j:
                continue
            pts = members[pool[p]]
            key = (int(pts[min(i, j)]), int(pts[max(i, j)]))
            if key not in seen:
                seen.add(key)
                out.append(key)
                if len(out) == n_pairs:
                    break
    return out


def _sample_between(rng, cats, counts, members, n_pairs):
    """Unique between-cluster pairs: two distinct size-weighted clusters, one
    uniform member from each.

    Rejecting equal cluster draws yields the without-replacement law for the
    second cluster.
    """
    weights = counts.astype(float)
    weights /= weights.sum()
    seen = set()
    out = []
    while len(out) < n_pairs:
        batch = max(16, 2 * (n_pairs - len(out)))
        first = rng.choice(len(cats), size=batch, p=weights)
        second = rng.choice(len(cats), size=batch, p=weights)
        pick_a = rng.random(batch)
        pick_b = rng.random(batch)
        for f, s, ra, rb in zip(first, second, pick_a, pick_b):
            if f == s:
                continue
            a = members[cats[f]][int(ra * counts[f])]
            b = members[cats[s]][int(rb * counts[s])]
            key = (int(min(a, b)), int(max(a, b)))
            if key not in seen:
                seen.add(key)
                out.append(key)
                if len(out) == n_pairs:
                    break
    return out


def fgk(
    features,
    assignments,
    n_pairs=DEFAULT_FGK_PAIRS,
    n_repetitions=DEFAULT_FGK_REPETITIONS,
    seed=0,
) -> float:
    """Sampled Goodman-Kruskal index, averaged over seeded repetitions.

    Each repetition draws n_pairs unique within-cluster point pairs (cluster
    chosen with probability proportional to its size among clusters of two
    or more members, then a distinct point pair inside it) and n_pairs
    unique between-cluster pairs (two distinct clusters drawn without
    replacement with size-proportional probabilities, one point from each),
    then compares all within-between distance combinations.  Repetition
    seeds are spawned from the given seed, so the result is deterministic
    and independent of evaluation order.
    """
    points = _as_points(features)
    labels = np.asarray(assignments)
    if labels.shape[0] != points.shape[0]:
        raise ValueError("one label per item is required")
    cats, counts, members = _cluster_index(labels)
    if len(cats) < 2:
        raise ValueError("at least two clusters are required")
    if not np.any(counts >= 2):
        raise ValueError("no cluster has two or more members")
    if n_pairs < 1 or n_repetitions < 1:
        raise ValueError("pair and repetition counts must be positive")
    max_within = int(np.sum(counts[counts >= 2] * (counts[counts >= 2] - 1) // 2))
    total = counts.sum()
    max_between = int((total * total - np.sum(counts * counts)) // 2)
    capacity = min(max_within, max_between)
    if n_pairs > capacity:
        warnings.warn(f"reducing sampled pairs from {n_pairs} to the {capacity} unique ones available")
        n_pairs = capacity
    values = np.empty(n_repetitions)
    streams = np.random.SeedSequence(seed).spawn(n_repetitions)
    for j, stream in enumerate(streams):
        rng = np.random.default_rng(stream)
        within_pairs = np.array(_sample_within(rng, cats, counts, members, n_pairs))
        between_pairs = np.array(_sample_between(rng, cats, counts, members, n_pairs))
        within = np.linalg.norm(points[within_pairs[:, 0]] - points[within_pairs[:, 1]], axis=1)
        between = np.linalg.norm(points[between_pairs[:, 0]] - points[between_pairs[:, 1]], axis=1)
        concordant, discordant = _count_concordance(within, between)
        if concordant + discordant == 0:
            warnings.warn("repetition with all comparisons tied scored as 0")
            values[j] = 0.0
        else:
            values[j] = (concordant - discordant) / (concordant + discordant)
    return float(values.mean())


def consensus_index(partitions) -> float:
    """Mean pairwise adjusted mutual information across partitions, clamped to [0, 1].

    Uses the max-entropy normalization with the permutation-model expected
    mutual information.
    """
    partitions = [np.asarray(p) for p in partitions]
    if len(partitions) < 2:
        raise ValueError("at least two partitions are required")
    length = partitions[0].shape[0]
    if any(p.shape != (length,) for p in partitions):
        raise ValueError("partitions must share one item set")
    scores = []
    for i in range(len(partitions)):
        for j in range(i + 1, len(partitions)):
            scores.append(adjusted_mutual_info_score(partitions[i], partitions[j], average_method="max"))
    return float(np.clip(np.mean(scores), 0.0, 1.0))


def purity(assignments, labels) -> float:
    """Fraction of items whose cluster majority class matches their own class."""
    assignments = np.asarray(assignments)
    labels = np.asarray(labels)
    if assignments.shape != labels.shape:
        raise ValueError("assignments and labels must have equal length")
    total = 0
    for cluster in np.unique(assignments):
        _, counts = np.unique(labels[assignments == cluster], return_counts=True)
        total += int(counts.max())
    return total / assignments.shape[0]


def _pairwise_by_separation(items, separation):
    if separation == "precomputed":
        if isinstance(items, DistanceMatrix):
            return items.values
        arr = np.asarray(items, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("precomputed separation requires a square matrix")
        return arr
    if separation == "euclidean":
        return cdist(_as_points(items), _as_points(items))
    if callable(separation):
        size = len(items)
        out = np.zeros((size, size))
        for i in range(size):
            for j in range(i + 1, size):
                out[i, j] = out[j, i] = float(separation(items[i], items[j]))
        return out
    raise ValueError("separation must be 'euclidean', 'precomputed', or a callable")


def davies_bouldin(items, assignments, separation="euclidean") -> float:
    """Medoid-based Davies-Bouldin index under a pluggable separation measure.

    Cluster medoids are recomputed under the separation measure (member with
    the least within-cluster distance sum); dispersion is the mean member
    distance to that medoid and separation the medoid-to-medoid distance.
    Identical medoids make a pair ratio infinite, which propagates.
    """
    labels = np.asarray(assignments)
    d = _pairwise_by_separation(items, separation)
    if labels.shape[0] != d.shape[0]:
        raise ValueError("one label per item is required")
    cats = np.unique(labels)
    if len(cats) < 2:
        raise ValueError("at least two clusters are required")
    medoids = np.empty(len(cats), dtype=np.int64)
    dispersion = np.empty(len(cats))
    for t, cluster in enumerate(cats):
        idx = np.flatnonzero(labels == cluster)
        block = d[np.ix_(idx, idx)]
        medoids[t] = idx[np.argmin(block.sum(axis=1))]
        dispersion[t] = float(d[idx, medoids[t]].mean())
    worst = np.empty(len(cats))
    for t in range(len(cats)):
        ratios = []
        for s in range(len(cats)):
            if s == t:
                continue
            gap = d[medoids[t], medoids[s]]
            if gap == 0.0:
                warnings.warn("identical medoids under the separation measure; ratio is infinite")
                ratios.append(np.inf)
            else:
                ratios.append((dispersion[t] + dispersion[s]) / gap)
        worst[t] = max(ratios)
    return float(worst.mean())


def normalize_db(scores: dict) -> dict:
    """Min-max rescale Davies-Bouldin scores across compared methods to [0, 1]."""
    if not scores:
        raise ValueError("no scores to normalize")
    values = np.array([float(v) for v in scores.values()])
    if not np.isfinite(values).all():
        raise ValueError("cannot normalize non-finite scores")
    lo, hi = values.min(), values.max()
    if hi == lo:
        warnings.warn("all scores equal; normalized values set to 0")
        return {k: 0.0 for k in scores}
    return {k: float((float(v) - lo) / (hi - lo)) for k, v in scores.items()}
