"""Artifact formats round-trip exactly; dataset loaders validate their inputs."""

import numpy as np
import pytest

from wkclust import io
from wkclust.clustering import ClusteringResult
from wkclust.kernels import KernelMatrix, center_kernel
from wkclust.kpca import exact_feature_map
from wkclust.validity import ValidityReport


def awkward_matrix(rng, rows, cols):
    """Values with no short decimal representation, plus extreme magnitudes."""
    values = rng.standard_normal((rows, cols)) / 3.0
    values[0, 0] = 1.0 / 3.0
    values[-1, -1] = 1e-300
    values[0, -1] = np.pi * 1e17
    return values


class TestMatrixFormats:
    def test_csv_round_trip_is_exact(self, tmp_path):
        values = awkward_matrix(np.random.default_rng(0), 7, 5)
        path = tmp_path / "m.csv"
        io.save_matrix_csv(path, values)
        loaded = io.load_matrix_csv(path)
        assert loaded.tobytes() == values.tobytes()

    def test_binary_round_trip_is_bitwise(self, tmp_path):
        values = awkward_matrix(np.random.default_rng(1), 6, 6)
        path = tmp_path / "m.bin"
        io.save_matrix_binary(path, values)
        loaded = io.load_matrix_binary(path)
        assert loaded.shape == values.shape
        assert loaded.tobytes() == values.tobytes()

    def test_binary_rejects_truncation(self, tmp_path):
        path = tmp_path / "m.bin"
        io.save_matrix_binary(path, np.eye(4))
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="payload size"):
            io.load_matrix_binary(path)

    def test_csv_rejects_empty(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("")
        with pytest.raises(ValueError, match="no rows"):
            io.load_matrix_csv(path)

    def test_rejects_non_matrix(self, tmp_path):
        with pytest.raises(ValueError, match="2-D"):
            io.save_matrix_csv(tmp_path / "v.csv", np.arange(4.0))
        with pytest.raises(ValueError, match="2-D"):
            io.save_matrix_binary(tmp_path / "v.bin", np.arange(4.0))


class TestFeatureMapFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        pts = rng.standard_normal((9, 3))
        kernel = KernelMatrix(np.exp(-((pts[:, None] - pts[None]) ** 2).sum(-1)))
        fm = exact_feature_map(center_kernel(kernel))
        path = tmp_path / "features.csv"
        io.save_feature_map_csv(path, fm)
        loaded = io.load_feature_map_csv(path)
        assert loaded.method == fm.method
        assert loaded.coords.tobytes() == fm.coords.tobytes()
        assert loaded.eigenvalues.tobytes() == fm.eigenvalues.tobytes()

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="feature-map"):
            io.load_feature_map_csv(path)


class TestAssignmentsFormat:
    def test_round_trip(self, tmp_path):
        result = ClusteringResult(
            assignments=np.array([0, 0, 1, 1, 2]),
            medoids=(1, 3, 4),
            objective=2.5,
            objective_history=(3.0, 2.5),
        )
        ids = ["g1", "g2", "g3", "g4", "g5"]
        path = tmp_path / "assignments.csv"
        io.save_assignments_csv(path, result, item_ids=ids)
        loaded_ids, assignments, medoids = io.load_assignments_csv(path)
        assert loaded_ids == ids
        assert assignments.tolist() == [0, 0, 1, 1, 2]
        assert medoids == (1, 3, 4)

    def test_default_ids_are_indices(self, tmp_path):
        result = ClusteringResult(
            assignments=np.array([0, 1]), medoids=(0, 1), objective=0.0,
            objective_history=(0.0,),
        )
        path = tmp_path / "assignments.csv"
        io.save_assignments_csv(path, result)
        loaded_ids, _, _ = io.load_assignments_csv(path)
        assert loaded_ids == ["0", "1"]

    def test_rejects_wrong_id_count(self, tmp_path):
        result = ClusteringResult(
            assignments=np.array([0, 1]), medoids=(0, 1), objective=0.0,
            objective_history=(0.0,),
        )
        with pytest.raises(ValueError, match="one id per item"):
            io.save_assignments_csv(tmp_path / "a.csv", result, item_ids=["only"])

    def test_rejects_foreign_header(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("x,y\n1,2\n")
        with pytest.raises(ValueError, match="assignments"):
            io.load_assignments_csv(path)


class TestResultJson:
    def test_round_trip_with_extra(self, tmp_path):
        result = ClusteringResult(
            assignments=np.array([0, 1, 1]),
            medoids=(0, 2),
            objective=1.25,
            objective_history=(2.0, 1.25),
        )
        path = tmp_path / "result.json"
        io.save_result_json(path, result, extra={"restart_assignments": [[0, 1, 1]]})
        loaded, extra = io.load_result_json(path)
        assert loaded.assignments.tolist() == [0, 1, 1]
        assert loaded.medoids == (0, 2)
        assert loaded.objective == 1.25
        assert loaded.objective_history == (2.0, 1.25)
        assert extra == {"restart_assignments": [[0, 1, 1]]}

    def test_rejects_shadowing_extras(self, tmp_path):
        result = ClusteringResult(
            assignments=np.array([0, 1]), medoids=(0, 1), objective=0.0,
            objective_history=(0.0,),
        )
        with pytest.raises(ValueError, match="shadow"):
            io.save_result_json(tmp_path / "r.json", result, extra={"objective": 9.0})


class TestReportJson:
    def test_round_trip(self, tmp_path):
        report = ValidityReport(
            fgk=0.75, ci=0.9, purity=0.8,
            db_scores={"ours": 0.0, "other": 1.0},
            sampling=(100, 35, 7),
        )
        path = tmp_path / "report.json"
        io.save_report_json(path, report)
        assert io.load_report_json(path) == report


class TestTimeseriesLoader:
    def test_loads_values_labels_timestamps(self, tmp_path):
        path = tmp_path / "series.csv"
        path.write_text(
            "label,00:00,06:00,12:00,18:00\n"
            "a,0.1,0.5,0.9,0.4\n"
            "b,0.2,0.6,0.8,0.3\n"
        )
        values, labels, stamps = io.load_timeseries_csv(path)
        assert values.shape == (2, 4)
        assert values[0].tolist() == [0.1, 0.5, 0.9, 0.4]
        assert labels == ["a", "b"]
        assert stamps == ["00:00", "06:00", "12:00", "18:00"]

    def test_label_column_is_optional(self, tmp_path):
        path = tmp_path / "series.csv"
        path.write_text("t0,t1,t2\n1,2,3\n")
        values, labels, stamps = io.load_timeseries_csv(path)
        assert labels is None
        assert values.shape == (1, 3)
        assert stamps == ["t0", "t1", "t2"]

    def test_rejects_ragged_rows(self, tmp_path):
        path = tmp_path / "series.csv"
        path.write_text("t0,t1,t2\n1,2,3\n4,5\n")
        with pytest.raises(ValueError, match="ragged"):
            io.load_timeseries_csv(path)

    def test_rejects_empty(self, tmp_path):
        path = tmp_path / "series.csv"
        path.write_text("t0,t1,t2\n")
        with pytest.raises(ValueError, match="no series"):
            io.load_timeseries_csv(path)


class TestUcrLoader:
    def test_parses_label_first_columns(self, tmp_path):
        path = tmp_path / "data.tsv"
        path.write_text("1\t0.5\t0.25\t0.75\n2\t0.4\t0.35\t0.65\n")
        values, labels = io.load_ucr_tsv(path)
        assert labels == ["1", "2"]
        assert values.shape == (2, 3)
        assert values[1].tolist() == [0.4, 0.35, 0.65]

    def test_rejects_ragged(self, tmp_path):
        path = tmp_path / "data.tsv"
        path.write_text("1\t0.5\t0.25\n2\t0.4\n")
        with pytest.raises(ValueError, match="ragged"):
            io.load_ucr_tsv(path)


def write_graph_fixture(tmp_path):
    nodes = tmp_path / "nodes.csv"
    summary = tmp_path / "summary.csv"
    nodes.write_text(
        "graph_id,voltage,demand\n"
        "g2,0.5,0.2\n"
        "g1,0.9,0.1\n"
        "g1,0.8,0.3\n"
    )
    summary.write_text(
        "graph_id,total_demand,node_count\n"
        "g1,0.4,2\n"
        "g2,0.2,1\n"
    )
    return nodes, summary


class TestGraphLoader:
    def test_joins_in_summary_order(self, tmp_path):
        nodes, summary = write_graph_fixture(tmp_path)
        tables, demands, ids = io.load_graph_csvs(nodes, summary)
        assert ids == ["g1", "g2"]
        assert demands == [0.4, 0.2]
        assert tables[0].tolist() == [[0.9, 0.1], [0.8, 0.3]]
        assert tables[1].tolist() == [[0.5, 0.2]]

    def test_rejects_count_mismatch(self, tmp_path):
        nodes, summary = write_graph_fixture(tmp_path)
        summary.write_text("graph_id,total_demand,node_count\ng1,0.4,3\ng2,0.2,1\n")
        with pytest.raises(ValueError, match="count mismatch"):
            io.load_graph_csvs(nodes, summary)

    def test_rejects_summary_without_nodes(self, tmp_path):
        nodes, summary = write_graph_fixture(tmp_path)
        summary.write_text(
            "graph_id,total_demand,node_count\ng1,0.4,2\ng2,0.2,1\ng3,0.5,1\n"
        )
        with pytest.raises(ValueError, match="no node rows"):
            io.load_graph_csvs(nodes, summary)

    def test_rejects_orphan_nodes(self, tmp_path):
        nodes, summary = write_graph_fixture(tmp_path)
        summary.write_text("graph_id,total_demand,node_count\ng1,0.4,2\n")
        with pytest.raises(ValueError, match="unknown graphs"):
            io.load_graph_csvs(nodes, summary)

    def test_rejects_duplicate_summary_rows(self, tmp_path):
        nodes, summary = write_graph_fixture(tmp_path)
        summary.write_text(
            "graph_id,total_demand,node_count\ng1,0.4,2\ng2,0.2,1\ng1,0.4,2\n"
        )
        with pytest.raises(ValueError, match="duplicate"):
            io.load_graph_csvs(nodes, summary)
