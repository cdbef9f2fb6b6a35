"""Discrete optimal transport: exact Wasserstein distances and linear embeddings.

Distributions are finite weighted point sets.  Distances are 2-Wasserstein
with squared Euclidean ground cost.  The general solver is a transportation
network simplex; one-dimensional inputs additionally admit a closed form via
quantile functions.  Transport plans against a fixed reference distribution
yield forward images (barycentric projections), whose weighted Euclidean
geometry gives a linear approximation of the pairwise Wasserstein distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from ._netsimplex import solve_transport

__all__ = [
    "DiscreteDistribution",
    "TransportPlan",
    "ForwardImageSet",
    "exact_wasserstein",
    "wasserstein_1d",
    "forward_images",
    "lot_distance",
]

_WEIGHT_SUM_TOL = 1e-9
_MARGINAL_TOL = 1e-7


def _as_float_array(value, name, ndim):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{name} must be non-empty")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    """Finite weighted point set: support (N, d) with strictly positive weights summing to one."""

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        support = _as_float_array(self.support, "support", 2)
        weights = _as_float_array(self.weights, "weights", 1)
        if weights.shape[0] != support.shape[0]:
            raise ValueError("weights length must match number of support points")
        if np.any(weights <= 0.0):
            raise ValueError("weights must be strictly positive")
        if abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("weights must sum to one")
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)

    @property
    def n_points(self) -> int:
        return self.support.shape[0]

    @property
    def dim(self) -> int:
        return self.support.shape[1]


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling between two weighted point sets; rows ship source mass to sinks."""

    weights: np.ndarray
    source: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        weights = _as_float_array(self.weights, "plan weights", 2)
        source = _as_float_array(self.source, "source marginal", 1)
        target = _as_float_array(self.target, "target marginal", 1)
        if weights.shape != (source.shape[0], target.shape[0]):
            raise ValueError("plan shape must match the marginals")
        if np.any(weights < 0.0):
            raise ValueError("plan entries must be nonnegative")
        if np.max(np.abs(weights.sum(axis=1) - source)) > _MARGINAL_TOL:
            raise ValueError("row sums deviate from the source marginal")
        if np.max(np.abs(weights.sum(axis=0) - target)) > _MARGINAL_TOL:
            raise ValueError("column sums deviate from the target marginal")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "source", source)
        object.__setattr__(self, "target", target)


@dataclass(frozen=True, eq=False)
class ForwardImageSet:
    """Barycentric projections of one distribution through a plan against a reference."""

    images: np.ndarray
    reference_weights: np.ndarray

    def __post_init__(self):
        images = _as_float_array(self.images, "images", 2)
        reference_weights = _as_float_array(self.reference_weights, "reference weights", 1)
        if images.shape[0] != reference_weights.shape[0]:
            raise ValueError("one image per reference point is required")
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "reference_weights", reference_weights)


def exact_wasserstein(mu_i: DiscreteDistribution, mu_j: DiscreteDistribution):
    """Exact 2-Wasserstein distance between two discrete distributions.

    Parameters
    ----------
    mu_i, mu_j : DiscreteDistribution
        Inputs with a common ambient dimension.

    Returns
    -------
    distance : float
        The 2-Wasserstein distance (square root of the optimal total cost).
    plan : TransportPlan
        An optimal coupling with the inputs' weights as marginals.
    """
    if mu_i.dim != mu_j.dim:
        raise ValueError("distributions must share the ambient dimension")
    cost = cdist(mu_i.support, mu_j.support, "sqeuclidean")
    p = mu_i.weights / mu_i.weights.sum()
    q = mu_j.weights / mu_j.weights.sum()
    plan, objective = solve_transport(cost, p, q)
    distance = float(np.sqrt(max(objective, 0.0)))
    return distance, TransportPlan(weights=plan, source=mu_i.weights, target=mu_j.weights)


def wasserstein_1d(mu_i: DiscreteDistribution, mu_j: DiscreteDistribution) -> float:
    """Closed-form 2-Wasserstein distance for one-dimensional distributions.

    Integrates the squared difference of the two quantile functions over the
    unit interval.  Both quantile functions are piecewise constant, so the
    integral is a finite sum over the merged cumulative-weight breakpoints.
    """
    if mu_i.dim != 1 or mu_j.dim != 1:
        raise ValueError("closed form requires one-dimensional distributions")
    xi, wi = _sorted_1d(mu_i)
    xj, wj = _sorted_1d(mu_j)
    ci = np.cumsum(wi)
    cj = np.cumsum(wj)
    ci[-1] = 1.0
    cj[-1] = 1.0
    bounds = np.union1d(ci, cj)
    widths = np.diff(np.concatenate(([0.0], bounds)))
    # evaluate both quantile functions on each merged segment's midpoint
    mids = bounds - widths / 2.0
    qi = xi[np.searchsorted(ci, mids, side="left")]
    qj = xj[np.searchsorted(cj, mids, side="left")]
    return float(np.sqrt(np.sum(widths * (qi - qj) ** 2)))


def _sorted_1d(mu: DiscreteDistribution):
    x = mu.support[:, 0]
    order = np.argsort(x, kind="stable")
    w = mu.weights[order] / mu.weights.sum()
    return x[order], w


def forward_images(
    reference: DiscreteDistribution,
    mu_l: DiscreteDistribution,
    plan: TransportPlan,
) -> ForwardImageSet:
    """Barycentric projection of mu_l through an optimal plan from the reference.

    Image k is the plan-weighted average of mu_l's support points receiving
    mass from reference point k, i.e. row k of the plan applied to the
    support and divided by the reference weight.
    """
    if plan.weights.shape != (reference.n_points, mu_l.n_points):
        raise ValueError("plan shape must be (reference points, target points)")
    if np.max(np.abs(plan.weights.sum(axis=1) - reference.weights)) > _MARGINAL_TOL:
        raise ValueError("plan row marginal does not match the reference weights")
    images = (plan.weights @ mu_l.support) / reference.weights[:, None]
    return ForwardImageSet(images=images, reference_weights=reference.weights)


def lot_distance(
    reference_weights: np.ndarray,
    images_i: ForwardImageSet,
    images_j: ForwardImageSet,
) -> float:
    """Linear approximation of the Wasserstein distance from two forward image sets.

    Computes the weighted Euclidean distance between the image sets, with the
    reference weights as point masses.  This is a pseudo-distance: distinct
    distributions can share identical forward images and come out at zero.
    Both image sets must be built against the same reference.
    """
    g = _as_float_array(reference_weights, "reference weights", 1)
    if images_i.images.shape[0] != g.shape[0] or images_j.images.shape[0] != g.shape[0]:
        raise ValueError("image sets were not built against a reference of this size")
    if images_i.images.shape != images_j.images.shape:
        raise ValueError("image sets must have identical shapes")
    diff = images_i.images - images_j.images
    return float(np.sqrt(np.sum(g * np.einsum("kl,kl->k", diff, diff))))
