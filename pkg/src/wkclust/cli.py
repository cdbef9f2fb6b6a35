"""Command-line front end.

    wkc distances --config run.json
    wkc kernel    --config run.json
    wkc cluster   --config run.json
    wkc tune      --config run.json
    wkc validate  --config run.json
    wkc report    --out rundir

One JSON config drives every stage; --seed, --out, and --threads override
the matching config entries.  Each command writes its artifacts plus a
manifest (config snapshot, input and output digests, package versions, no
timestamps) into the output directory, so a rerun with the same config and
seed reproduces every byte.  Exit codes: 2 for config problems, 3 for
data or artifact problems, 4 for numeric failures.
"""

import argparse
import contextlib
import csv
import hashlib
import json
import os
import sys
from importlib import metadata
from types import SimpleNamespace

import jsonschema
import numpy as np
import scipy
from scipy.spatial.distance import cdist

from . import io
from ._parallel import default_threads
from .clustering import kmedoids
from .kernels import center_kernel, gamma_max_search
from .kpca import exact_feature_map, nystrom_feature_map
from .multiref import DistanceMatrix, multireference_distances
from .ot import exact_wasserstein
from .pipelines import (
    approximation_error,
    graph_kernel,
    italy_kernel,
    melbourne_kernel,
    normalize_graphs,
    normalize_timeseries,
    npsd_distance_matrix,
    pca_smooth,
)
from .tuning import TS_HIGH_MULT, TS_LOW_MULT, make_bounds, make_clustering_objective, tune
from .validity import (
    DEFAULT_FGK_PAIRS,
    DEFAULT_FGK_REPETITIONS,
    ValidityReport,
    consensus_index,
    davies_bouldin,
    fgk,
    normalize_db,
    purity,
)

__all__ = ["main", "ConfigError", "DataError"]


class ConfigError(Exception):
    """Invalid or inconsistent run configuration."""


class DataError(Exception):
    """Unreadable, malformed, or missing data and artifacts."""


# Named seed substreams, spawned from the master seed in this fixed order
# so each stage draws independent randomness regardless of which commands
# run or how often.
_STREAMS = ("distances", "nystrom", "tuning", "fgk", "kmedoids")

_SELECTION_RULES = ("kaiser", "top_k", "variance_fraction")

_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["pipeline", "dataset"],
    "properties": {
        "pipeline": {"enum": ["timeseries", "bags"]},
        "dataset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["format", "path"],
            "properties": {
                "format": {"enum": ["timeseries_csv", "ucr_tsv", "graph_csv"]},
                "path": {"type": "string"},
                "summary_path": {"type": ["string", "null"]},
                "samples_per_day": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "window": {"type": ["string", "null"]},
                "smooth": {"type": "boolean"},
                "variance_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
        },
        "matrix_format": {"enum": ["csv", "binary"]},
        "distances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_references": {"type": "integer", "minimum": 1},
                "beta": {
                    "anyOf": [{"const": "auto"}, {"type": "number"}],
                },
                "beta_grid": {
                    "type": ["array", "null"],
                    "items": {"type": "number"},
                    "minItems": 1,
                },
                "n_samples": {"type": "integer", "minimum": 1},
                "error_pairs": {"type": "integer", "minimum": 0},
            },
        },
        "kernel": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "recipe": {"enum": ["italy", "melbourne", "graph", None]},
                "gammas": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
                "selection": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["rule"],
                    "properties": {
                        "rule": {"enum": list(_SELECTION_RULES)},
                        "value": {"type": ["number", "null"]},
                    },
                },
                "nystrom_threshold": {"type": "integer", "minimum": 1},
                "nystrom_columns": {"type": "integer", "minimum": 1},
            },
        },
        "clustering": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_clusters": {"type": "integer", "minimum": 1},
                "method": {"enum": ["pam", "alternate"]},
                "restarts": {"type": "integer", "minimum": 1},
            },
        },
        "tuning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_random": {"type": "integer", "minimum": 1},
                "n_bayes": {"type": "integer", "minimum": 0},
                "low_mult": {"type": "number", "exclusiveMinimum": 0},
                "high_mult": {"type": "number", "exclusiveMinimum": 0},
                "effective_count_penalty": {"type": "boolean"},
            },
        },
        "validity": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_pairs": {"type": "integer", "minimum": 1},
                "n_repetitions": {"type": "integer", "minimum": 1},
                "compare": {
                    "type": "object",
                    "additionalProperties": {"type": "string"},
                },
            },
        },
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "threads": {"type": ["integer", "null"], "minimum": 1},
    },
}

_DEFAULTS = {
    "dataset": {
        "summary_path": None,
        "samples_per_day": None,
        "window": None,
        "smooth": False,
        "variance_fraction": 0.85,
    },
    "matrix_format": "csv",
    "distances": {
        "n_references": 1,
        "beta": "auto",
        "beta_grid": None,
        "n_samples": 30_000,
        "error_pairs": 0,
    },
    "kernel": {
        "recipe": None,
        "gammas": None,
        "selection": {"rule": "kaiser", "value": None},
        "nystrom_threshold": 5000,
        "nystrom_columns": 5000,
    },
    "clustering": {"n_clusters": 2, "method": "pam", "restarts": 3},
    "tuning": {
        "n_random": 20,
        "n_bayes": 20,
        "low_mult": TS_LOW_MULT,
        "high_mult": TS_HIGH_MULT,
        "effective_count_penalty": False,
    },
    "validity": {
        "n_pairs": DEFAULT_FGK_PAIRS,
        "n_repetitions": DEFAULT_FGK_REPETITIONS,
        "compare": {},
    },
    "seed": 0,
    "output": "run",
    "threads": None,
}


def _merge_defaults(config, defaults):
    merged = dict(config)
    for key, value in defaults.items():
        if key not in merged:
            merged[key] = json.loads(json.dumps(value)) if isinstance(value, dict) else value
        elif isinstance(value, dict) and isinstance(merged[key], dict):
            merged[key] = _merge_defaults(merged[key], value)
    return merged


def load_config(path, seed=None, out=None, threads=None) -> dict:
    """Read, default-fill, and validate a run configuration."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config must be a JSON object")
    config = _merge_defaults(config, _DEFAULTS)
    if seed is not None:
        config["seed"] = seed
    if out is not None:
        config["output"] = out
    if threads is not None:
        config["threads"] = threads
    try:
        jsonschema.validate(config, _SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "top level"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    _check_consistency(config)
    return config


def _check_consistency(config):
    dataset = config["dataset"]
    pipeline = config["pipeline"]
    if pipeline == "timeseries":
        if dataset["format"] not in ("timeseries_csv", "ucr_tsv"):
            raise ConfigError("the timeseries pipeline reads timeseries_csv or ucr_tsv data")
        if config["kernel"]["recipe"] not in (None, "italy", "melbourne"):
            raise ConfigError("the timeseries pipeline uses the italy or melbourne kernel recipe")
    else:
        if dataset["format"] != "graph_csv":
            raise ConfigError("the bags pipeline reads graph_csv data")
        if dataset["summary_path"] is None:
            raise ConfigError("graph_csv data needs dataset.summary_path")
        if config["kernel"]["recipe"] not in (None, "graph"):
            raise ConfigError("the bags pipeline uses the graph kernel recipe")
    if not os.path.exists(dataset["path"]):
        raise ConfigError(f"dataset path does not exist: {dataset['path']}")
    if dataset["summary_path"] is not None and not os.path.exists(dataset["summary_path"]):
        raise ConfigError(f"dataset summary path does not exist: {dataset['summary_path']}")
    selection = config["kernel"]["selection"]
    if selection["rule"] in ("top_k", "variance_fraction") and selection.get("value") is None:
        raise ConfigError(f"selection rule {selection['rule']} needs a value")
    tuning = config["tuning"]
    if tuning["low_mult"] >= tuning["high_mult"]:
        raise ConfigError("tuning.low_mult must be strictly below tuning.high_mult")
    for name, path in config["validity"]["compare"].items():
        if not os.path.exists(path):
            raise ConfigError(f"comparison assignments for {name} do not exist: {path}")


def _recipe(config) -> str:
    recipe = config["kernel"]["recipe"]
    if recipe is None:
        recipe = "italy" if config["pipeline"] == "timeseries" else "graph"
    return recipe


def _stream(config, name) -> np.random.SeedSequence:
    children = np.random.SeedSequence(config["seed"]).spawn(len(_STREAMS))
    return children[_STREAMS.index(name)]


def _stream_seed(config, name) -> int:
    return int(_stream(config, name).generate_state(1)[0])


def _effective_threads(config) -> int:
    return config["threads"] if config["threads"] is not None else default_threads()


@contextlib.contextmanager
def _run_lock(run_dir):
    """Exclusive per-directory lock so concurrent commands cannot interleave writes."""
    path = os.path.join(run_dir, ".lock")
    try:
        fd = os.open(path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise DataError(
            f"another command holds the lock on {run_dir}; remove .lock if it is stale"
        ) from None
    try:
        os.close(fd)
        yield
    finally:
        os.unlink(path)


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _package_version() -> str:
    try:
        return metadata.version("wkclust")
    except metadata.PackageNotFoundError:
        return "unknown"


def _write_manifest(run_dir, command, config, inputs, outputs) -> None:
    manifest = {
        "command": command,
        "config": config,
        "inputs": {name: {"path": str(path), "sha256": _sha256(path)} for name, path in inputs.items()},
        "outputs": {name: {"sha256": _sha256(os.path.join(run_dir, name))} for name in outputs},
        "versions": {
            "wkclust": _package_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
    }
    path = os.path.join(run_dir, f"manifest_{command}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _fmt(value) -> str:
    return f"{float(value):.17g}"


def _load_dataset(config) -> SimpleNamespace:
    """Load and preprocess the configured dataset; deterministic, so every
    command that needs items rebuilds them identically."""
    dataset = config["dataset"]
    try:
        if dataset["format"] == "graph_csv":
            tables, demands, ids = io.load_graph_csvs(dataset["path"], dataset["summary_path"])
            items = normalize_graphs(tables, demands)
            return SimpleNamespace(kind="bags", items=items, labels=None, ids=list(ids))
        if dataset["format"] == "timeseries_csv":
            values, labels, _ = io.load_timeseries_csv(dataset["path"])
        else:
            values, labels = io.load_ucr_tsv(dataset["path"])
        items = normalize_timeseries(values, labels)
        if dataset["smooth"]:
            items = pca_smooth(items, dataset["variance_fraction"])
        ids = [str(i) for i in range(len(items))]
        return SimpleNamespace(kind="timeseries", items=items, labels=labels, ids=ids)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot load dataset: {exc}") from exc


def _write_items_csv(run_dir, data) -> str:
    """Per-item id, label, and summary properties; joined by later reports."""
    path = os.path.join(run_dir, "items.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if data.kind == "bags":
            writer.writerow(["item_id", "label", "total_demand", "node_count", "mean_voltage", "mean_demand"])
            for item_id, item in zip(data.ids, data.items):
                writer.writerow([
                    item_id,
                    "",
                    _fmt(item.total_demand),
                    item.node_count,
                    _fmt(item.node_table[:, 0].mean()),
                    _fmt(item.node_table[:, 1].mean()),
                ])
        else:
            writer.writerow(["item_id", "label", "mean_value"])
            for i, (item_id, item) in enumerate(zip(data.ids, data.items)):
                label = "" if data.labels is None else str(data.labels[i])
                writer.writerow([item_id, label, _fmt(item.values.mean())])
    return "items.csv"


def _read_items_csv(run_dir):
    """Returns (ids, labels or None, property column names, rows of floats)."""
    path = os.path.join(run_dir, "items.csv")
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["item_id", "label"]:
            raise DataError(f"not an item table: {path}")
        ids, labels, rows = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            labels.append(row[1])
            rows.append([float(v) for v in row[2:]])
    has_labels = any(label != "" for label in labels)
    return ids, (labels if has_labels else None), header[2:], rows


def _matrix_name(config, stem) -> str:
    return f"{stem}.{'bin' if config['matrix_format'] == 'binary' else 'csv'}"


def _save_matrix(config, run_dir, stem, values) -> str:
    name = _matrix_name(config, stem)
    path = os.path.join(run_dir, name)
    if config["matrix_format"] == "binary":
        io.save_matrix_binary(path, values)
    else:
        io.save_matrix_csv(path, values)
    return name


def _load_matrix(config, run_dir, stem) -> np.ndarray:
    name = _matrix_name(config, stem)
    path = os.path.join(run_dir, name)
    try:
        if config["matrix_format"] == "binary":
            return io.load_matrix_binary(path)
        return io.load_matrix_csv(path)
    except OSError as exc:
        raise DataError(f"missing artifact {name}; run the producing command first") from exc
    except ValueError as exc:
        raise DataError(f"corrupt artifact {name}: {exc}") from exc


def _dataset_inputs(config) -> dict:
    dataset = config["dataset"]
    inputs = {"dataset": dataset["path"]}
    if dataset["summary_path"] is not None:
        inputs["summary"] = dataset["summary_path"]
    return inputs


def cmd_distances(config) -> int:
    run_dir = config["output"]
    os.makedirs(run_dir, exist_ok=True)
    threads = _effective_threads(config)
    with _run_lock(run_dir):
        data = _load_dataset(config)
        outputs = [_write_items_csv(run_dir, data)]
        if data.kind == "timeseries":
            dataset_cfg = config["dataset"]
            distance = npsd_distance_matrix(
                data.items,
                samples_per_day=dataset_cfg["samples_per_day"],
                window=dataset_cfg["window"],
                threads=threads,
            )
            meta = {"pipeline": "timeseries", "method": "spectral_exact", "beta": None}
        else:
            opts = config["distances"]
            solver_seed, error_seed = [
                int(s.generate_state(1)[0]) for s in _stream(config, "distances").spawn(2)
            ]
            bags = [item.distribution() for item in data.items]
            distance, info = multireference_distances(
                bags,
                opts["n_references"],
                beta=opts["beta"],
                n_samples=opts["n_samples"],
                beta_grid=opts["beta_grid"],
                seed=solver_seed,
                threads=threads,
            )
            meta = {
                "pipeline": "bags",
                "method": "multireference_lot",
                "beta": info["beta"],
                "n_references": opts["n_references"],
            }
            if opts["error_pairs"] > 0:
                name, summary = _write_error_pairs(
                    run_dir, bags, distance, opts["error_pairs"], error_seed
                )
                outputs.append(name)
                meta["error_summary"] = summary
        outputs.append(_save_matrix(config, run_dir, "distances", distance.values))
        meta["n_items"] = len(data.items)
        meta["matrix"] = outputs[-1]
        with open(os.path.join(run_dir, "distances_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append("distances_meta.json")
        _write_manifest(run_dir, "distances", config, _dataset_inputs(config), outputs)
    return 0


def _write_error_pairs(run_dir, bags, distance, n_pairs, seed):
    """Exact transport solves on sampled pairs, logged for the error profile."""
    n = len(bags)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rng = np.random.default_rng(seed)
    if len(pairs) > n_pairs:
        picks = rng.choice(len(pairs), size=n_pairs, replace=False)
        pairs = [pairs[p] for p in sorted(picks)]
    triples = []
    name = "errors.csv"
    with open(os.path.join(run_dir, name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["i", "j", "exact", "approx", "rel_error"])
        for i, j in pairs:
            exact, _ = exact_wasserstein(bags[i], bags[j])
            triples.append((i, j, exact))
            if exact > 0.0:
                rel = abs(distance.values[i, j] - exact) / exact
                writer.writerow([i, j, _fmt(exact), _fmt(distance.values[i, j]), _fmt(rel)])
    try:
        summary = approximation_error(distance, triples)
    except ValueError:
        summary = None
    return name, summary


def _selection(config):
    rule = config["kernel"]["selection"]["rule"]
    value = config["kernel"]["selection"]["value"]
    if rule == "kaiser":
        return "kaiser"
    if rule == "top_k":
        return ("top_k", int(value))
    return ("variance_fraction", float(value))


class _RecipeContext:
    """Shared machinery for the kernel and tune commands: the dataset, the
    fused or spectral distance artifact, per-factor bandwidth caps, and a
    kernel constructor over the recipe's parameter vector."""

    def __init__(self, config, run_dir, threads):
        self.config = config
        self.run_dir = run_dir
        self.threads = threads
        self.data = _load_dataset(config)
        values = _load_matrix(config, run_dir, "distances")
        if values.shape[0] != len(self.data.items):
            raise DataError("distances artifact does not match the dataset size")
        try:
            self.distance = DistanceMatrix(values)
        except ValueError as exc:
            raise DataError(f"corrupt distances artifact: {exc}") from exc
        self.recipe = _recipe(config)
        self._factors = self._factor_distances()
        self.gamma_max = np.array([gamma_max_search(f) for f in self._factors])

    def _factor_distances(self):
        if self.recipe == "italy":
            return [self.distance]
        if self.recipe == "melbourne":
            stacked = np.vstack([item.values for item in self.data.items])
            totals = stacked.sum(axis=1)
            return [
                self.distance,
                DistanceMatrix(cdist(stacked, stacked)),
                DistanceMatrix(np.abs(totals[:, None] - totals[None, :])),
            ]
        demand = np.array([item.total_demand for item in self.data.items])
        count = np.array([item.node_count for item in self.data.items], dtype=np.float64)
        return [
            self.distance,
            DistanceMatrix(np.abs(demand[:, None] - demand[None, :])),
            DistanceMatrix(np.abs(count[:, None] - count[None, :])),
        ]

    @property
    def n_params(self) -> int:
        return len(self._factors)

    def kernel_for(self, gammas):
        gammas = np.atleast_1d(np.asarray(gammas, dtype=np.float64))
        if gammas.shape[0] != self.n_params:
            raise ConfigError(
                f"the {self.recipe} recipe takes {self.n_params} bandwidths, got {gammas.shape[0]}"
            )
        if self.recipe == "italy":
            return italy_kernel(self.distance, gammas[0])
        if self.recipe == "melbourne":
            return melbourne_kernel(
                self.data.items, *gammas, npsd_distances=self.distance, threads=self.threads
            )
        return graph_kernel(self.data.items, self.distance, *gammas)


def _feature_builder(config, ctx):
    """Returns (features_for, variance_cache).

    features_for(gammas) builds the recipe kernel, centers it, and maps it
    to coordinates, switching to the column-sampled factorization above the
    configured size threshold (the column sample is drawn once so every
    bandwidth is mapped through the same columns).  The cache records, per
    parameter vector, the share of total kernel variance carried by the
    first five components.
    """
    opts = config["kernel"]
    selection = _selection(config)
    sample = None
    n_items = len(ctx.data.items)
    if n_items > opts["nystrom_threshold"]:
        m = min(opts["nystrom_columns"], n_items)
        rng = np.random.default_rng(_stream_seed(config, "nystrom"))
        sample = sorted(int(v) for v in rng.choice(n_items, size=m, replace=False))
    cache = {}

    def features_for(gammas):
        gammas = np.atleast_1d(np.asarray(gammas, dtype=np.float64))
        centered = center_kernel(ctx.kernel_for(gammas))
        if sample is None:
            fm = exact_feature_map(centered, selection)
        else:
            fm = nystrom_feature_map(centered.values[:, sample], sample, selection)
        total = float(np.trace(centered.values))
        top5 = float(np.sort(fm.eigenvalues)[-5:].sum())
        cache[tuple(float(g) for g in gammas)] = top5 / total if total > 0 else 0.0
        return fm

    return features_for, cache


def cmd_kernel(config) -> int:
    run_dir = config["output"]
    os.makedirs(run_dir, exist_ok=True)
    threads = _effective_threads(config)
    with _run_lock(run_dir):
        ctx = _RecipeContext(config, run_dir, threads)
        override = config["kernel"]["gammas"]
        if override is not None and len(override) != ctx.n_params:
            raise ConfigError(
                f"the {ctx.recipe} recipe takes {ctx.n_params} bandwidths, got {len(override)}"
            )
        gammas = ctx.gamma_max if override is None else np.array(override, dtype=np.float64)
        kernel = ctx.kernel_for(gammas)
        outputs = [_save_matrix(config, run_dir, "kernel", kernel.values)]
        features_for, _ = _feature_builder(config, ctx)
        fm = features_for(gammas)
        io.save_feature_map_csv(os.path.join(run_dir, "features.csv"), fm)
        outputs.append("features.csv")
        meta = {
            "recipe": ctx.recipe,
            "gammas": [float(g) for g in gammas],
            "gamma_max": [float(g) for g in ctx.gamma_max],
            "method": fm.method,
            "n_components": int(fm.eigenvalues.shape[0]),
            "matrix": outputs[0],
        }
        with open(os.path.join(run_dir, "kernel_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append("kernel_meta.json")
        inputs = _dataset_inputs(config)
        inputs["distances"] = os.path.join(run_dir, _matrix_name(config, "distances"))
        _write_manifest(run_dir, "kernel", config, inputs, outputs)
    return 0


def _load_features(run_dir):
    path = os.path.join(run_dir, "features.csv")
    try:
        return io.load_feature_map_csv(path)
    except OSError as exc:
        raise DataError("missing artifact features.csv; run the kernel command first") from exc
    except ValueError as exc:
        raise DataError(f"corrupt artifact features.csv: {exc}") from exc


def _restart_seeds(config, restarts):
    return [int(s.generate_state(1)[0]) for s in _stream(config, "kmedoids").spawn(restarts)]


def _cluster_restarts(config, features):
    opts = config["clustering"]
    results = [
        kmedoids(features, opts["n_clusters"], method=opts["method"], seed=seed)
        for seed in _restart_seeds(config, opts["restarts"])
    ]
    best = min(range(len(results)), key=lambda i: results[i].objective)
    return results[best], results


def _item_ids(run_dir, n) -> list:
    try:
        ids, _, _, _ = _read_items_csv(run_dir)
    except (OSError, DataError):
        return [str(i) for i in range(n)]
    return ids if len(ids) == n else [str(i) for i in range(n)]


def _save_clustering(config, run_dir, best, results) -> list:
    ids = _item_ids(run_dir, best.assignments.shape[0])
    io.save_assignments_csv(os.path.join(run_dir, "assignments.csv"), best, item_ids=ids)
    io.save_result_json(
        os.path.join(run_dir, "result.json"),
        best,
        extra={
            "restart_assignments": [[int(v) for v in r.assignments] for r in results],
            "restart_objectives": [float(r.objective) for r in results],
        },
    )
    return ["assignments.csv", "result.json"]


def cmd_cluster(config) -> int:
    run_dir = config["output"]
    os.makedirs(run_dir, exist_ok=True)
    with _run_lock(run_dir):
        features = _load_features(run_dir)
        best, results = _cluster_restarts(config, features)
        outputs = _save_clustering(config, run_dir, best, results)
        inputs = {"features": os.path.join(run_dir, "features.csv")}
        _write_manifest(run_dir, "cluster", config, inputs, outputs)
    return 0


def cmd_tune(config) -> int:
    run_dir = config["output"]
    os.makedirs(run_dir, exist_ok=True)
    threads = _effective_threads(config)
    with _run_lock(run_dir):
        ctx = _RecipeContext(config, run_dir, threads)
        opts = config["tuning"]
        bounds = make_bounds(ctx.gamma_max, opts["low_mult"], opts["high_mult"])
        features_for, cache = _feature_builder(config, ctx)
        objective = make_clustering_objective(
            features_for,
            config["clustering"]["n_clusters"],
            method=config["clustering"]["method"],
            n_pairs=config["validity"]["n_pairs"],
            n_repetitions=config["validity"]["n_repetitions"],
            effective_count_penalty=opts["effective_count_penalty"],
            seed=_stream_seed(config, "fgk"),
            threads=threads,
        )
        trace = tune(
            objective,
            bounds,
            opts["n_random"],
            opts["n_bayes"],
            restarts_per_eval=config["clustering"]["restarts"],
            seed=_stream_seed(config, "tuning"),
            trace_path=os.path.join(run_dir, "trace.jsonl"),
        )
        outputs = ["trace.jsonl", _write_evaluations(run_dir, ctx, trace, features_for, cache)]
        fm = features_for(trace.incumbent.gammas)
        io.save_feature_map_csv(os.path.join(run_dir, "features.csv"), fm)
        outputs.append("features.csv")
        best, results = _cluster_restarts(config, features=fm)
        outputs.extend(_save_clustering(config, run_dir, best, results))
        meta = {
            "recipe": ctx.recipe,
            "best_gammas": [float(g) for g in trace.incumbent.gammas],
            "objective": trace.incumbent.objective,
            "ci": trace.incumbent.ci,
            "fgk": trace.incumbent.fgk,
            "budget": list(trace.budget),
            "gamma_max": [float(g) for g in ctx.gamma_max],
        }
        with open(os.path.join(run_dir, "tuned_meta.json"), "w", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")
        outputs.append("tuned_meta.json")
        inputs = _dataset_inputs(config)
        inputs["distances"] = os.path.join(run_dir, _matrix_name(config, "distances"))
        _write_manifest(run_dir, "tune", config, inputs, outputs)
    return 0


def _write_evaluations(run_dir, ctx, trace, features_for, cache) -> str:
    """Per-evaluation table: bandwidths, both indices, and the share of
    kernel variance in the first five components (the tuning scatter)."""
    name = "evaluations.csv"
    with open(os.path.join(run_dir, name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        gamma_cols = [f"gamma_{i}" for i in range(ctx.n_params)]
        writer.writerow(["eval", *gamma_cols, "ci", "fgk", "objective", "variance5"])
        for idx, record in enumerate(trace.evaluations):
            key = tuple(float(g) for g in record.gammas)
            if key not in cache:
                try:
                    features_for(record.gammas)
                except Exception:
                    cache[key] = float("nan")
            writer.writerow([
                idx,
                *(_fmt(g) for g in record.gammas),
                _fmt(record.ci),
                _fmt(record.fgk),
                _fmt(record.objective),
                _fmt(cache[key]),
            ])
    return name


def cmd_validate(config) -> int:
    run_dir = config["output"]
    os.makedirs(run_dir, exist_ok=True)
    opts = config["validity"]
    with _run_lock(run_dir):
        features = _load_features(run_dir)
        try:
            ids, assignments, _ = io.load_assignments_csv(os.path.join(run_dir, "assignments.csv"))
            _, extra = io.load_result_json(os.path.join(run_dir, "result.json"))
        except OSError as exc:
            raise DataError("missing clustering artifacts; run the cluster command first") from exc
        except ValueError as exc:
            raise DataError(f"corrupt clustering artifacts: {exc}") from exc
        if features.coords.shape[1] != assignments.shape[0]:
            raise DataError("features and assignments artifacts disagree on the item count")
        fgk_seed = _stream_seed(config, "fgk")
        fgk_value = fgk(
            features,
            assignments,
            n_pairs=opts["n_pairs"],
            n_repetitions=opts["n_repetitions"],
            seed=fgk_seed,
        )
        partitions = extra.get("restart_assignments", [])
        ci = consensus_index(partitions) if len(partitions) >= 2 else 1.0
        purity_value = None
        try:
            csv_ids, labels, _, _ = _read_items_csv(run_dir)
        except (OSError, DataError):
            csv_ids, labels = None, None
        if labels is not None and csv_ids == ids:
            purity_value = purity(assignments, labels)
        db_scores = {}
        if opts["compare"]:
            raw = {"ours": davies_bouldin(features, assignments)}
            for name, path in opts["compare"].items():
                try:
                    _, other, _ = io.load_assignments_csv(path)
                except (OSError, ValueError) as exc:
                    raise DataError(f"cannot load comparison assignments {name}: {exc}") from exc
                if other.shape[0] != assignments.shape[0]:
                    raise DataError(f"comparison assignments {name} have the wrong item count")
                raw[name] = davies_bouldin(features, other)
            db_scores = normalize_db(raw)
        report = ValidityReport(
            fgk=fgk_value,
            ci=ci,
            purity=purity_value,
            db_scores=db_scores,
            sampling=(opts["n_pairs"], opts["n_repetitions"], fgk_seed),
        )
        io.save_report_json(os.path.join(run_dir, "report.json"), report)
        inputs = {
            "features": os.path.join(run_dir, "features.csv"),
            "assignments": os.path.join(run_dir, "assignments.csv"),
        }
        _write_manifest(run_dir, "validate", config, inputs, ["report.json"])
    return 0


def _quartiles(values):
    q1, q2, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75])
    return q1, q2, q3


def cmd_report(run_dir, config=None) -> int:
    """Derive plot-ready tables from whatever artifacts the run directory holds."""
    if not os.path.isdir(run_dir):
        raise DataError(f"not a run directory: {run_dir}")
    with _run_lock(run_dir):
        inputs = {}
        outputs = []
        errors_path = os.path.join(run_dir, "errors.csv")
        if os.path.exists(errors_path):
            outputs.append(_report_error_cdf(run_dir, errors_path))
            inputs["errors"] = errors_path
        evals_path = os.path.join(run_dir, "evaluations.csv")
        if os.path.exists(evals_path):
            outputs.append(_report_scatter(run_dir, evals_path))
            inputs["evaluations"] = evals_path
        assignments_path = os.path.join(run_dir, "assignments.csv")
        items_path = os.path.join(run_dir, "items.csv")
        if os.path.exists(assignments_path) and os.path.exists(items_path):
            outputs.append(_report_cluster_summary(run_dir, assignments_path))
            inputs["assignments"] = assignments_path
            inputs["items"] = items_path
        if not outputs:
            raise DataError(f"no artifacts to report on in {run_dir}")
        snapshot = config if config is not None else {"output": run_dir}
        _write_manifest(run_dir, "report", snapshot, inputs, outputs)
    return 0


def _report_error_cdf(run_dir, errors_path) -> str:
    with open(errors_path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "rel_error" not in reader.fieldnames:
            raise DataError(f"not an error table: {errors_path}")
        errors = sorted(float(row["rel_error"]) for row in reader)
    if not errors:
        raise DataError(f"no error rows in {errors_path}")
    name = "error_cdf.csv"
    with open(os.path.join(run_dir, name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rel_error", "cdf"])
        for i, value in enumerate(errors):
            writer.writerow([_fmt(value), _fmt((i + 1) / len(errors))])
    return name


def _report_scatter(run_dir, evals_path) -> str:
    with open(evals_path, "r", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"variance5", "ci", "fgk"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise DataError(f"not an evaluation table: {evals_path}")
        rows = [
            (float(row["variance5"]), float(row["ci"]), float(row["fgk"]))
            for row in reader
        ]
    rows = [r for r in rows if np.isfinite(r[0])]
    if not rows:
        raise DataError(f"no finite evaluations in {evals_path}")
    rows.sort(key=lambda r: r[0])
    name = "validity_scatter.csv"
    with open(os.path.join(run_dir, name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variance5", "ci", "fgk"])
        for variance, ci, fgk_value in rows:
            writer.writerow([_fmt(variance), _fmt(ci), _fmt(fgk_value)])
    return name


def _report_cluster_summary(run_dir, assignments_path) -> str:
    try:
        ids, assignments, medoids = io.load_assignments_csv(assignments_path)
        item_ids, _, props, rows = _read_items_csv(run_dir)
    except (ValueError, OSError) as exc:
        raise DataError(f"cannot summarize clusters: {exc}") from exc
    if item_ids != ids:
        raise DataError("assignments and item table disagree on the item ids")
    values = np.array(rows, dtype=np.float64) if rows and rows[0] else np.zeros((len(ids), 0))
    medoid_of = {int(assignments[m]): ids[m] for m in medoids}
    name = "cluster_summary.csv"
    with open(os.path.join(run_dir, name), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        stat_cols = [f"{p}_{s}" for p in props for s in ("mean", "q25", "median", "q75")]
        writer.writerow(["cluster", "size", "medoid_item", *stat_cols])
        for cluster in sorted(set(int(v) for v in assignments)):
            member_rows = values[assignments == cluster]
            stats = []
            for col in range(values.shape[1]):
                column = member_rows[:, col]
                q1, q2, q3 = _quartiles(column)
                stats.extend([_fmt(column.mean()), _fmt(q1), _fmt(q2), _fmt(q3)])
            writer.writerow([cluster, int(member_rows.shape[0]), medoid_of.get(cluster, ""), *stats])
    return name


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wkc",
        description="Cluster distributional data via transport-based kernels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    descriptions = {
        "distances": "compute the all-pairs distance matrix",
        "kernel": "build the kernel and its coordinate map",
        "cluster": "run k-medoids on the mapped coordinates",
        "tune": "search kernel bandwidths, then cluster at the best",
        "validate": "score the stored clustering",
        "report": "derive plot-ready tables from a run directory",
    }
    for name, text in descriptions.items():
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=(name != "report"), help="run configuration JSON")
        cmd.add_argument("--seed", type=int, default=None, help="override the master seed")
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("--threads", type=int, default=None, help="override worker count")
    return parser


_NUMERIC_ERRORS = (np.linalg.LinAlgError, FloatingPointError, ZeroDivisionError)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "report":
            config = None
            run_dir = args.out
            if args.config is not None:
                config = load_config(args.config, args.seed, args.out, args.threads)
                run_dir = config["output"]
            if run_dir is None:
                raise ConfigError("report needs --out or --config to locate the run directory")
            return cmd_report(run_dir, config)
        config = load_config(args.config, args.seed, args.out, args.threads)
        handler = {
            "distances": cmd_distances,
            "kernel": cmd_kernel,
            "cluster": cmd_cluster,
            "tune": cmd_tune,
            "validate": cmd_validate,
        }[args.command]
        return handler(config)
    except ConfigError as exc:
        return _fail(exc, 2)
    except DataError as exc:
        return _fail(exc, 3)
    except _NUMERIC_ERRORS as exc:
        return _fail(exc, 4)


def _fail(exc, code) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    print(json.dumps(record), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
