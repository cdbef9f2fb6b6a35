"""End-to-end command tests: config validation, artifact flows, exit codes,
reproducibility, and the report tables."""

import csv
import json
import os

import numpy as np
import pytest

from wkclust import io
from wkclust.cli import main
from wkclust.multiref import multireference_distances


def write_graph_dataset(tmp_path, n_graphs=6, seed=5):
    """Two loose groups of small point clouds in [0, 1]^2."""
    rng = np.random.default_rng(seed)
    nodes = tmp_path / "nodes.csv"
    summary = tmp_path / "summary.csv"
    node_rows, summary_rows = [], []
    for g in range(n_graphs):
        center = 0.2 if g < n_graphs // 2 else 0.8
        count = int(rng.integers(3, 6))
        pts = np.clip(rng.normal(center, 0.05, size=(count, 2)), 0.0, 1.0)
        for p in pts:
            node_rows.append([f"g{g}", f"{p[0]:.6f}", f"{p[1]:.6f}"])
        summary_rows.append([f"g{g}", f"{pts[:, 1].sum():.6f}", count])
    with open(nodes, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph_id", "voltage", "demand"])
        writer.writerows(node_rows)
    with open(summary, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["graph_id", "total_demand", "node_count"])
        writer.writerows(summary_rows)
    return nodes, summary


def write_series_dataset(tmp_path, n_series=8, length=48, seed=3):
    """Two planted frequency classes with labels."""
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    path = tmp_path / "series.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"] + [f"t{k}" for k in range(length)])
        for i in range(n_series):
            cycles = 2 if i < n_series // 2 else 7
            phase = rng.uniform(0, np.pi)
            series = 0.5 + 0.4 * np.sin(2 * np.pi * cycles * t / length + phase)
            series = series + rng.normal(0, 0.02, length)
            writer.writerow(["lo" if i < n_series // 2 else "hi"] + [f"{v:.6f}" for v in series])
    return path


def graph_config(tmp_path, out="run", **overrides):
    nodes, summary = write_graph_dataset(tmp_path)
    config = {
        "pipeline": "bags",
        "dataset": {"format": "graph_csv", "path": str(nodes), "summary_path": str(summary)},
        "distances": {"n_references": 2, "n_samples": 15, "error_pairs": 5},
        "clustering": {"n_clusters": 2, "restarts": 3},
        "validity": {"n_pairs": 6, "n_repetitions": 5},
        "seed": 11,
        "output": str(tmp_path / out),
    }
    config.update(overrides)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(config))
    return path, config


def series_config(tmp_path, out="tsrun", **overrides):
    data = write_series_dataset(tmp_path)
    config = {
        "pipeline": "timeseries",
        "dataset": {"format": "timeseries_csv", "path": str(data)},
        "clustering": {"n_clusters": 2, "restarts": 2},
        "tuning": {"n_random": 2, "n_bayes": 1},
        "validity": {"n_pairs": 10, "n_repetitions": 4},
        "seed": 4,
        "output": str(tmp_path / out),
    }
    config.update(overrides)
    path = tmp_path / "ts.json"
    path.write_text(json.dumps(config))
    return path, config


def run_ok(args):
    code = main(args)
    assert code == 0, f"command failed with exit {code}: {args}"


class TestConfigValidation:
    def test_missing_config_file(self, tmp_path, capsys):
        assert main(["distances", "--config", str(tmp_path / "nope.json")]) == 2
        record = json.loads(capsys.readouterr().err)
        assert record["error"] == "ConfigError"
        assert record["exit_code"] == 2

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert main(["distances", "--config", str(path)]) == 2

    def test_unknown_key_rejected(self, tmp_path, capsys):
        config_path, config = graph_config(tmp_path)
        config["typo_section"] = {}
        config_path.write_text(json.dumps(config))
        assert main(["distances", "--config", str(config_path)]) == 2
        assert "typo_section" in json.loads(capsys.readouterr().err)["message"]

    def test_pipeline_format_mismatch(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        config["pipeline"] = "timeseries"
        config_path.write_text(json.dumps(config))
        assert main(["distances", "--config", str(config_path)]) == 2

    def test_missing_dataset_path(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        config["dataset"]["path"] = str(tmp_path / "gone.csv")
        config_path.write_text(json.dumps(config))
        assert main(["distances", "--config", str(config_path)]) == 2

    def test_graph_pipeline_needs_summary(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        del config["dataset"]["summary_path"]
        config_path.write_text(json.dumps(config))
        assert main(["distances", "--config", str(config_path)]) == 2

    def test_selection_rule_needs_value(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        config["kernel"] = {"selection": {"rule": "top_k"}}
        config_path.write_text(json.dumps(config))
        assert main(["kernel", "--config", str(config_path)]) == 2

    def test_bad_tuning_multipliers(self, tmp_path):
        config_path, config = series_config(tmp_path)
        config["tuning"].update({"low_mult": 2.0, "high_mult": 1.0})
        config_path.write_text(json.dumps(config))
        assert main(["tune", "--config", str(config_path)]) == 2

    def test_mismatched_recipe(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        config["kernel"] = {"recipe": "italy"}
        config_path.write_text(json.dumps(config))
        assert main(["distances", "--config", str(config_path)]) == 2


class TestDistancesCommand:
    def test_toy_flow_writes_square_matrix(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run = config["output"]
        values = io.load_matrix_csv(os.path.join(run, "distances.csv"))
        assert values.shape == (6, 6)
        assert np.all(np.diag(values) == 0.0)
        assert np.array_equal(values, values.T)
        assert np.all(values >= 0.0)
        meta = json.loads(open(os.path.join(run, "distances_meta.json")).read())
        assert meta["n_items"] == 6
        assert meta["method"] == "multireference_lot"
        assert meta["beta"] is not None

    def test_matches_direct_library_call(self, tmp_path):
        """The CLI drives the solver through the documented seed substream."""
        config_path, config = graph_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        saved = io.load_matrix_csv(os.path.join(config["output"], "distances.csv"))

        tables, demands, _ = io.load_graph_csvs(
            config["dataset"]["path"], config["dataset"]["summary_path"]
        )
        from wkclust.pipelines import normalize_graphs

        items = normalize_graphs(tables, demands)
        stream = np.random.SeedSequence(config["seed"]).spawn(5)[0]
        solver_seed = int(stream.spawn(2)[0].generate_state(1)[0])
        direct, _ = multireference_distances(
            [g.distribution() for g in items],
            config["distances"]["n_references"],
            n_samples=config["distances"]["n_samples"],
            seed=solver_seed,
        )
        assert saved.tobytes() == direct.values.tobytes()

    def test_error_pairs_artifact(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        with open(os.path.join(config["output"], "errors.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert 0 < len(rows) <= 5
        for row in rows:
            rel = float(row["rel_error"])
            expected = abs(float(row["approx"]) - float(row["exact"])) / float(row["exact"])
            assert rel == pytest.approx(expected, rel=1e-12)

    def test_reruns_reproduce_bytes(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["distances", "--config", str(config_path), "--out", str(tmp_path / "other")])
        first = open(os.path.join(config["output"], "distances.csv"), "rb").read()
        second = open(tmp_path / "other" / "distances.csv", "rb").read()
        assert first == second
        a = json.loads(open(os.path.join(config["output"], "manifest_distances.json")).read())
        b = json.loads(open(tmp_path / "other" / "manifest_distances.json").read())
        assert a["outputs"] == b["outputs"]
        assert "timestamp" not in json.dumps(a).lower()

    def test_binary_format(self, tmp_path):
        config_path, config = graph_config(tmp_path, matrix_format="binary")
        run_ok(["distances", "--config", str(config_path)])
        values = io.load_matrix_binary(os.path.join(config["output"], "distances.bin"))
        assert values.shape == (6, 6)

    def test_lock_conflict(self, tmp_path, capsys):
        config_path, config = graph_config(tmp_path)
        os.makedirs(config["output"], exist_ok=True)
        open(os.path.join(config["output"], ".lock"), "w").close()
        assert main(["distances", "--config", str(config_path)]) == 3
        assert "lock" in json.loads(capsys.readouterr().err)["message"]

    def test_spectral_distances_for_series(self, tmp_path):
        config_path, config = series_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        values = io.load_matrix_csv(os.path.join(config["output"], "distances.csv"))
        assert values.shape == (8, 8)
        meta = json.loads(open(os.path.join(config["output"], "distances_meta.json")).read())
        assert meta["method"] == "spectral_exact"
        # planted classes are spectrally separated
        within = values[:4, :4][np.triu_indices(4, 1)]
        between = values[:4, 4:]
        assert within.max() < between.min()


class TestKernelCommand:
    def test_defaults_to_bandwidth_caps(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["kernel", "--config", str(config_path)])
        run = config["output"]
        meta = json.loads(open(os.path.join(run, "kernel_meta.json")).read())
        assert meta["recipe"] == "graph"
        assert meta["gammas"] == meta["gamma_max"]
        assert len(meta["gammas"]) == 3
        kernel = io.load_matrix_csv(os.path.join(run, "kernel.csv"))
        assert kernel.shape == (6, 6)
        assert np.array_equal(kernel, kernel.T)
        assert np.linalg.eigvalsh(kernel).min() > 0.0
        features = io.load_feature_map_csv(os.path.join(run, "features.csv"))
        assert features.coords.shape[1] == 6
        assert features.method == "exact"

    def test_gamma_override(self, tmp_path):
        config_path, config = graph_config(tmp_path, kernel={"gammas": [1.0, 2.0, 3.0]})
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["kernel", "--config", str(config_path)])
        meta = json.loads(open(os.path.join(config["output"], "kernel_meta.json")).read())
        assert meta["gammas"] == [1.0, 2.0, 3.0]

    def test_wrong_gamma_count(self, tmp_path):
        config_path, config = graph_config(tmp_path, kernel={"gammas": [1.0]})
        run_ok(["distances", "--config", str(config_path)])
        assert main(["kernel", "--config", str(config_path)]) == 2

    def test_requires_distances_artifact(self, tmp_path, capsys):
        config_path, config = graph_config(tmp_path)
        assert main(["kernel", "--config", str(config_path)]) == 3
        assert "distances" in json.loads(capsys.readouterr().err)["message"]

    def test_column_sampled_map_when_large(self, tmp_path):
        config_path, config = graph_config(
            tmp_path, kernel={"nystrom_threshold": 4, "nystrom_columns": 5}
        )
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["kernel", "--config", str(config_path)])
        features = io.load_feature_map_csv(os.path.join(config["output"], "features.csv"))
        assert features.method == "nystrom(5)"
        assert features.coords.shape[1] == 6


class TestClusterCommand:
    def test_recovers_planted_groups(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["kernel", "--config", str(config_path)])
        run_ok(["cluster", "--config", str(config_path)])
        run = config["output"]
        ids, assignments, medoids = io.load_assignments_csv(os.path.join(run, "assignments.csv"))
        assert ids == [f"g{i}" for i in range(6)]
        assert len(medoids) == 2
        assert len(set(assignments[:3])) == 1
        assert len(set(assignments[3:])) == 1
        assert assignments[0] != assignments[3]
        result, extra = io.load_result_json(os.path.join(run, "result.json"))
        assert len(extra["restart_assignments"]) == 3
        assert result.objective == min(extra["restart_objectives"])

    def test_trivial_one_cluster_per_item(self, tmp_path):
        config_path, config = graph_config(tmp_path, clustering={"n_clusters": 6, "restarts": 1})
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["kernel", "--config", str(config_path)])
        run_ok(["cluster", "--config", str(config_path)])
        result, _ = io.load_result_json(os.path.join(config["output"], "result.json"))
        assert result.objective == 0.0
        assert sorted(result.assignments) == list(range(6))


class TestValidateCommand:
    def run_graph_flow(self, tmp_path, **overrides):
        config_path, config = graph_config(tmp_path, **overrides)
        for cmd in ("distances", "kernel", "cluster", "validate"):
            run_ok([cmd, "--config", str(config_path)])
        return config_path, config

    def test_report_fields(self, tmp_path):
        _, config = self.run_graph_flow(tmp_path)
        report = io.load_report_json(os.path.join(config["output"], "report.json"))
        assert -1.0 <= report.fgk <= 1.0
        assert 0.0 <= report.ci <= 1.0
        assert report.purity is None  # the graph fixture is unlabeled
        assert report.sampling[0] == 6
        assert report.sampling[1] == 5
        assert report.db_scores == {}

    def test_purity_from_labels(self, tmp_path):
        config_path, config = series_config(tmp_path)
        for cmd in ("distances", "kernel", "cluster", "validate"):
            run_ok([cmd, "--config", str(config_path)])
        report = io.load_report_json(os.path.join(config["output"], "report.json"))
        assert report.purity == 1.0

    def test_comparison_scores_normalized(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        for cmd in ("distances", "kernel", "cluster"):
            run_ok([cmd, "--config", str(config_path)])
        run = config["output"]
        # a deliberately shuffled competitor
        ids, assignments, _ = io.load_assignments_csv(os.path.join(run, "assignments.csv"))
        other = tmp_path / "other_assignments.csv"
        with open(other, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["item_id", "cluster", "is_medoid"])
            shuffled = [0, 1, 0, 1, 0, 1]
            for i, item in enumerate(ids):
                writer.writerow([item, shuffled[i], int(i < 2)])
        config["validity"]["compare"] = {"shuffled": str(other)}
        config_path.write_text(json.dumps(config))
        run_ok(["validate", "--config", str(config_path)])
        report = io.load_report_json(os.path.join(run, "report.json"))
        assert set(report.db_scores) == {"ours", "shuffled"}
        assert report.db_scores["ours"] == 0.0
        assert report.db_scores["shuffled"] == 1.0

    def test_seed_flag_changes_sampling_seed(self, tmp_path):
        config_path, config = self.run_graph_flow(tmp_path)
        first = io.load_report_json(os.path.join(config["output"], "report.json"))
        os.remove(os.path.join(config["output"], "report.json"))
        run_ok(["validate", "--config", str(config_path), "--seed", "99"])
        second = io.load_report_json(os.path.join(config["output"], "report.json"))
        assert first.sampling[2] != second.sampling[2]


class TestTuneCommand:
    def test_search_and_final_clustering(self, tmp_path):
        config_path, config = series_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["tune", "--config", str(config_path)])
        run = config["output"]
        meta = json.loads(open(os.path.join(run, "tuned_meta.json")).read())
        assert meta["recipe"] == "italy"
        assert meta["budget"] == [2, 1]
        with open(os.path.join(run, "trace.jsonl")) as fh:
            lines = [line for line in fh if line.strip()]
        assert len(lines) == 3
        best = max(json.loads(line)["objective"] for line in lines)
        assert meta["objective"] == best
        with open(os.path.join(run, "evaluations.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        for row in rows:
            assert 0.0 < float(row["variance5"]) <= 1.0
        assert os.path.exists(os.path.join(run, "assignments.csv"))
        assert os.path.exists(os.path.join(run, "features.csv"))

    def test_resume_replays_existing_trace(self, tmp_path):
        config_path, config = series_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["tune", "--config", str(config_path)])
        run = config["output"]
        first_trace = open(os.path.join(run, "trace.jsonl")).read()
        first_meta = open(os.path.join(run, "tuned_meta.json")).read()
        run_ok(["tune", "--config", str(config_path)])
        assert open(os.path.join(run, "trace.jsonl")).read() == first_trace
        assert open(os.path.join(run, "tuned_meta.json")).read() == first_meta


class TestReportCommand:
    def full_run(self, tmp_path):
        config_path, config = graph_config(tmp_path)
        for cmd in ("distances", "kernel", "cluster", "validate"):
            run_ok([cmd, "--config", str(config_path)])
        run_ok(["report", "--out", config["output"]])
        return config["output"]

    def test_error_cdf_is_monotone(self, tmp_path):
        run = self.full_run(tmp_path)
        with open(os.path.join(run, "error_cdf.csv")) as fh:
            rows = list(csv.DictReader(fh))
        errors = [float(r["rel_error"]) for r in rows]
        cdf = [float(r["cdf"]) for r in rows]
        assert errors == sorted(errors)
        assert cdf == sorted(cdf)
        assert cdf[-1] == 1.0

    def test_cluster_summary_covers_clusters(self, tmp_path):
        run = self.full_run(tmp_path)
        with open(os.path.join(run, "cluster_summary.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert sum(int(r["size"]) for r in rows) == 6
        for row in rows:
            assert row["medoid_item"].startswith("g")
            mean = float(row["total_demand_mean"])
            q25 = float(row["total_demand_q25"])
            q75 = float(row["total_demand_q75"])
            assert q25 <= mean <= q75 or q25 <= q75

    def test_scatter_from_tuning(self, tmp_path):
        config_path, config = series_config(tmp_path)
        run_ok(["distances", "--config", str(config_path)])
        run_ok(["tune", "--config", str(config_path)])
        run_ok(["report", "--out", config["output"]])
        with open(os.path.join(config["output"], "validity_scatter.csv")) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 3
        variances = [float(r["variance5"]) for r in rows]
        assert variances == sorted(variances)

    def test_empty_directory_fails(self, tmp_path, capsys):
        empty = tmp_path / "empty"
        empty.mkdir()
        assert main(["report", "--out", str(empty)]) == 3
        assert "no artifacts" in json.loads(capsys.readouterr().err)["message"]

    def test_needs_location(self, capsys):
        assert main(["report"]) == 2


class TestSeedStreams:
    def test_named_streams_are_distinct(self):
        from wkclust.cli import _STREAMS, _stream_seed

        config = {"seed": 0}
        seeds = [_stream_seed(config, name) for name in _STREAMS]
        assert len(set(seeds)) == len(_STREAMS)

    def test_master_seed_shifts_every_stream(self):
        from wkclust.cli import _STREAMS, _stream_seed

        a = [_stream_seed({"seed": 1}, name) for name in _STREAMS]
        b = [_stream_seed({"seed": 2}, name) for name in _STREAMS]
        assert all(x != y for x, y in zip(a, b))
