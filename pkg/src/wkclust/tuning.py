"""Kernel-parameter search: box bounds around a reference bandwidth and a
random-then-Bayesian maximization of min(consensus, rescaled concordance).

The search works in log-parameter space throughout, because useful
bandwidths span decades.  Random candidates are drawn log-uniformly up
front, so the trace is a pure function of the seed; the Bayesian phase fits
a Gaussian process to the log-points seen so far and proposes the expected
improvement maximizer.
"""

from __future__ import annotations

import functools
import inspect
import json
import os
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import ndtr
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import RBF, ConstantKernel

from ._parallel import map_maybe_parallel
from .clustering import kmedoids
from .kernels import KernelParams
from .validity import consensus_index, fgk

__all__ = [
    "EvalRecord",
    "TuningTrace",
    "make_bounds",
    "tune",
    "make_clustering_objective",
    "DEFAULT_LOW_MULT",
    "DEFAULT_HIGH_MULT",
    "TS_LOW_MULT",
    "TS_HIGH_MULT",
]

DEFAULT_LOW_MULT = 10.0 ** -0.5
DEFAULT_HIGH_MULT = 10.0 ** 0.5
# wider box for spectral-density features
TS_LOW_MULT = 0.1
TS_HIGH_MULT = 10.0

_GP_NOISE = 1e-4
_ACQ_STARTS = 64


@dataclass(frozen=True, eq=False)
class EvalRecord:
    """One objective evaluation: parameter vector, both indices, and the score."""

    gammas: np.ndarray
    ci: float
    fgk: float
    objective: float

    def __post_init__(self):
        object.__setattr__(self, "gammas", np.atleast_1d(np.asarray(self.gammas, dtype=np.float64)))

    def to_dict(self) -> dict:
        return {
            "gammas": [float(g) for g in self.gammas],
            "ci": self.ci,
            "fgk": self.fgk,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalRecord":
        return cls(
            gammas=np.asarray(payload["gammas"], dtype=np.float64),
            ci=float(payload["ci"]),
            fgk=float(payload["fgk"]),
            objective=float(payload["objective"]),
        )


@dataclass(frozen=True, eq=False)
class TuningTrace:
    """Ordered evaluations with the incumbent index and the search budget."""

    evaluations: tuple
    best: int
    budget: tuple

    def __post_init__(self):
        evaluations = tuple(self.evaluations)
        object.__setattr__(self, "evaluations", evaluations)
        object.__setattr__(self, "budget", (int(self.budget[0]), int(self.budget[1])))
        if not evaluations:
            raise ValueError("a trace needs at least one evaluation")
        objectives = np.array([e.objective for e in evaluations])
        if np.any(objectives < 0.0) or np.any(objectives > 1.0):
            raise ValueError("objective values must lie in [0, 1]")
        if not 0 <= self.best < len(evaluations):
            raise ValueError("incumbent index out of range")
        if objectives[self.best] != objectives.max():
            raise ValueError("incumbent must attain the maximal objective")

    @property
    def incumbent(self) -> EvalRecord:
        return self.evaluations[self.best]

    def running_maximum(self) -> np.ndarray:
        return np.maximum.accumulate([e.objective for e in self.evaluations])

    def save(self, path) -> None:
        """Write the trace as JSON lines, one evaluation per line."""
        with open(path, "w", encoding="utf-8") as fh:
            for record in self.evaluations:
                fh.write(json.dumps(record.to_dict()) + "\n")

    @classmethod
    def load(cls, path, budget) -> "TuningTrace":
        records = _read_records(path)
        if not records:
            raise ValueError(f"no evaluations in {path}")
        objectives = [r.objective for r in records]
        return cls(tuple(records), int(np.argmax(objectives)), tuple(budget))


def _read_records(path):
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(EvalRecord.from_dict(json.loads(line)))
    return records


def make_bounds(gamma_max, low_mult=DEFAULT_LOW_MULT, high_mult=DEFAULT_HIGH_MULT) -> KernelParams:
    """Box bounds per parameter: [low_mult, high_mult] times the reference bandwidth.

    The stored gammas sit at the geometric center of the box, which
    coincides with gamma_max under the default symmetric multipliers.
    """
    gamma_max = np.atleast_1d(np.asarray(gamma_max, dtype=np.float64))
    if np.any(gamma_max <= 0.0):
        raise ValueError("reference bandwidths must be positive")
    if not low_mult < high_mult:
        raise ValueError("low_mult must be strictly below high_mult")
    if low_mult <= 0.0:
        raise ValueError("multipliers must be positive")
    lower = low_mult * gamma_max
    upper = high_mult * gamma_max
    return KernelParams(gammas=np.sqrt(lower * upper), lower=lower, upper=upper)


def _call_objective(objective, gammas, restarts):
    try:
        params = inspect.signature(objective).parameters
    except (TypeError, ValueError):
        params = {}
    if "restarts" in params:
        return objective(gammas, restarts=restarts)
    return objective(gammas)


def _evaluate(objective, gammas, restarts) -> EvalRecord:
    try:
        out = _call_objective(objective, gammas, restarts)
        if len(out) == 3:
            ci, fgk_value, penalty = out
        else:
            ci, fgk_value = out
            penalty = 1.0
        score = min(float(ci), (float(fgk_value) + 1.0) / 2.0) * float(penalty)
        if not (np.isfinite(score) and 0.0 <= score <= 1.0):
            raise ValueError(f"objective produced an invalid score {score}")
    except Exception as exc:  # noqa: BLE001 - any failure scores 0 and the search continues
        warnings.warn(f"objective evaluation failed ({exc}); recording score 0")
        return EvalRecord(gammas=gammas, ci=0.0, fgk=-1.0, objective=0.0)
    return EvalRecord(gammas=gammas, ci=float(ci), fgk=float(fgk_value), objective=score)


def _expected_improvement(gp, incumbent):
    def neg_ei(x):
        mu, sigma = gp.predict(np.atleast_2d(x), return_std=True)
        mu, sigma = float(mu[0]), float(sigma[0])
        if sigma <= 0.0:
            return 0.0
        z = (mu - incumbent) / sigma
        ei = (mu - incumbent) * ndtr(z) + sigma * np.exp(-0.5 * z * z) / np.sqrt(2.0 * np.pi)
        return -ei

    return neg_ei


def _propose(rng, log_lo, log_hi, log_points, objectives):
    """Next candidate in log space: EI maximizer, or a random draw on a flat trace.

    The random draws happen unconditionally so a resumed search consumes
    the generator exactly as an uninterrupted one would.
    """
    gp_state = int(rng.integers(2**31 - 1))
    starts = rng.uniform(log_lo, log_hi, size=(_ACQ_STARTS, len(log_lo)))
    if np.ptp(objectives) == 0.0:
        return starts[0]
    kernel = ConstantKernel(1.0, (1e-3, 1e3)) * RBF(
        length_scale=np.ones(len(log_lo)), length_scale_bounds=(1e-3, 1e3)
    )
    gp = GaussianProcessRegressor(
        kernel=kernel,
        alpha=_GP_NOISE,
        normalize_y=True,
        n_restarts_optimizer=2,
        random_state=gp_state,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        gp.fit(np.asarray(log_points), np.asarray(objectives))
    neg_ei = _expected_improvement(gp, float(np.max(objectives)))
    box = list(zip(log_lo, log_hi))
    best_x, best_val = starts[0], np.inf
    for x0 in starts:
        res = minimize(neg_ei, x0, method="L-BFGS-B", bounds=box)
        if res.fun < best_val:
            best_x, best_val = res.x, res.fun
    return np.clip(best_x, log_lo, log_hi)


def tune(
    objective,
    bounds: KernelParams,
    n_random,
    n_bayes,
    restarts_per_eval=3,
    seed=0,
    trace_path=None,
) -> TuningTrace:
    """Maximize min(ci, (fgk+1)/2) over the box by random search then
    Gaussian-process expected improvement.

    The objective is called as objective(gammas) with a parameter vector,
    or objective(gammas, restarts=...) when it declares a restarts
    argument; it returns (ci, fgk) or (ci, fgk, penalty) with penalty in
    [0, 1].  A raising or out-of-range evaluation is recorded with score 0
    and the search continues.  If trace_path is given, evaluations are
    appended as JSON lines as they complete, and evaluations already
    present there are replayed instead of recomputed.
    """
    if n_random < 1:
        raise ValueError("at least one random evaluation is required")
    if n_bayes < 0:
        raise ValueError("the Bayesian budget cannot be negative")
    if restarts_per_eval < 1:
        raise ValueError("restarts_per_eval must be positive")
    rng = np.random.default_rng(seed)
    log_lo = np.log(bounds.lower)
    log_hi = np.log(bounds.upper)
    random_points = np.exp(rng.uniform(log_lo, log_hi, size=(n_random, len(log_lo))))

    replay = []
    if trace_path is not None and os.path.exists(trace_path):
        replay = _read_records(trace_path)
        if len(replay) > n_random + n_bayes:
            raise ValueError("existing trace is longer than the requested budget")

    records = []
    sink = None
    try:
        if trace_path is not None:
            sink = open(trace_path, "a", encoding="utf-8")

        def push(record):
            records.append(record)
            if sink is not None and len(records) > len(replay):
                sink.write(json.dumps(record.to_dict()) + "\n")
                sink.flush()

        for i in range(n_random):
            if i < len(replay):
                push(replay[i])
            else:
                push(_evaluate(objective, random_points[i], restarts_per_eval))
        for i in range(n_bayes):
            log_points = [np.log(r.gammas) for r in records]
            objectives = [r.objective for r in records]
            proposal = _propose(rng, log_lo, log_hi, log_points, objectives)
            if n_random + i < len(replay):
                push(replay[n_random + i])
            else:
                push(_evaluate(objective, np.exp(proposal), restarts_per_eval))
    finally:
        if sink is not None:
            sink.close()
    objectives = [r.objective for r in records]
    return TuningTrace(tuple(records), int(np.argmax(objectives)), (n_random, n_bayes))


def _cluster_once(entropy, points, n_clusters, method):
    result = kmedoids(points, n_clusters, method=method, seed=entropy)
    return result.assignments


def make_clustering_objective(
    features_for,
    n_clusters,
    method="pam",
    n_pairs=100,
    n_repetitions=35,
    effective_count_penalty=False,
    seed=0,
    threads=1,
):
    """Build the standard tuning objective from a feature-map constructor.

    features_for(gammas) must return the mapped items (a FeatureMap or an
    items-by-components array) for one parameter vector.  Each call
    clusters the features `restarts` times from distinct seeded
    initializations, scores consensus across the restart partitions (1.0
    when only one restart runs), and concordance on the restart that
    attains the highest value.  With effective_count_penalty the score is
    later multiplied by (non-singleton clusters in the best restart) /
    n_clusters, which guards against collapsing onto few clusters.
    """

    def objective(gammas, restarts=3):
        from .validity import _as_points

        points = _as_points(features_for(np.atleast_1d(np.asarray(gammas, dtype=np.float64))))
        entropies = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(restarts)]
        worker = functools.partial(_cluster_once, points=points, n_clusters=n_clusters, method=method)
        partitions = list(map_maybe_parallel(worker, entropies, threads))
        ci = 1.0 if restarts < 2 else consensus_index(partitions)
        fgk_values = [
            fgk(points, p, n_pairs=n_pairs, n_repetitions=n_repetitions, seed=seed)
            for p in partitions
        ]
        best = int(np.argmax(fgk_values))
        if not effective_count_penalty:
            return ci, fgk_values[best]
        _, counts = np.unique(partitions[best], return_counts=True)
        penalty = float(np.sum(counts >= 2)) / float(n_clusters)
        return ci, fgk_values[best], min(penalty, 1.0)

    objective.penalized = effective_count_penalty
    return objective
