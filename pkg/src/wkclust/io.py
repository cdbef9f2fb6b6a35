"""File formats: run artifacts (matrices, feature maps, clusterings, reports)
and dataset loaders (time-series CSV, UCR-style TSV, graph node/summary CSVs).

Matrices round-trip exactly: the binary format is a little-endian shape
header plus raw float64 rows, and CSV writes 17 significant digits, which
is enough to reproduce every double bit for bit.
"""

import csv
import json
import struct

import numpy as np

from .clustering import ClusteringResult
from .kpca import FeatureMap
from .validity import ValidityReport

__all__ = [
    "save_matrix_csv",
    "load_matrix_csv",
    "save_matrix_binary",
    "load_matrix_binary",
    "save_feature_map_csv",
    "load_feature_map_csv",
    "save_assignments_csv",
    "load_assignments_csv",
    "save_result_json",
    "load_result_json",
    "save_report_json",
    "load_report_json",
    "load_timeseries_csv",
    "load_ucr_tsv",
    "load_graph_csvs",
]

_BINARY_HEADER = "<qq"


def _fmt(value) -> str:
    return f"{float(value):.17g}"


def save_matrix_csv(path, values) -> None:
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise ValueError("expected a 2-D array")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in values:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def load_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise ValueError(f"no rows in {path}")
    return np.array(rows, dtype=np.float64)


def save_matrix_binary(path, values) -> None:
    values = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    if values.ndim != 2:
        raise ValueError("expected a 2-D array")
    with open(path, "wb") as fh:
        fh.write(struct.pack(_BINARY_HEADER, values.shape[0], values.shape[1]))
        fh.write(values.astype("<f8", copy=False).tobytes(order="C"))


def load_matrix_binary(path) -> np.ndarray:
    header = struct.calcsize(_BINARY_HEADER)
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < header:
        raise ValueError(f"truncated matrix file {path}")
    rows, cols = struct.unpack(_BINARY_HEADER, blob[:header])
    data = np.frombuffer(blob[header:], dtype="<f8")
    if data.size != rows * cols:
        raise ValueError(f"matrix payload size mismatch in {path}")
    return data.reshape(rows, cols).copy()


def save_feature_map_csv(path, feature_map: FeatureMap) -> None:
    """One row per component: its eigenvalue, then the item coordinates."""
    n_items = feature_map.coords.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# method={feature_map.method}\n")
        fh.write("eigenvalue," + ",".join(f"item_{j}" for j in range(n_items)) + "\n")
        for value, row in zip(feature_map.eigenvalues, feature_map.coords):
            fh.write(_fmt(value) + "," + ",".join(_fmt(v) for v in row) + "\n")


def load_feature_map_csv(path) -> FeatureMap:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if len(lines) < 3 or not lines[0].startswith("# method="):
        raise ValueError(f"not a feature-map file: {path}")
    method = lines[0].split("=", 1)[1]
    eigenvalues = []
    coords = []
    for line in lines[2:]:
        parts = [float(v) for v in line.split(",")]
        eigenvalues.append(parts[0])
        coords.append(parts[1:])
    return FeatureMap(coords=np.array(coords), eigenvalues=np.array(eigenvalues), method=method)


def save_assignments_csv(path, result: ClusteringResult, item_ids=None) -> None:
    n = result.assignments.shape[0]
    if item_ids is None:
        item_ids = [str(i) for i in range(n)]
    if len(item_ids) != n:
        raise ValueError("one id per item is required")
    medoids = set(result.medoids)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["item_id", "cluster", "is_medoid"])
        for i in range(n):
            writer.writerow([item_ids[i], int(result.assignments[i]), int(i in medoids)])


def load_assignments_csv(path):
    """Returns (item_ids, assignments, medoids) with medoids ordered by label."""
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["item_id", "cluster", "is_medoid"]:
            raise ValueError(f"not an assignments file: {path}")
        ids, labels, flags = [], [], []
        for row in reader:
            if not row:
                continue
            ids.append(row[0])
            labels.append(int(row[1]))
            flags.append(int(row[2]))
    assignments = np.array(labels, dtype=np.int64)
    medoid_rows = [i for i, f in enumerate(flags) if f]
    medoids = tuple(sorted(medoid_rows, key=lambda i: assignments[i]))
    return ids, assignments, medoids


def save_result_json(path, result: ClusteringResult, extra=None) -> None:
    payload = {
        "assignments": [int(v) for v in result.assignments],
        "medoids": [int(m) for m in result.medoids],
        "objective": float(result.objective),
        "objective_history": [float(v) for v in result.objective_history],
    }
    if extra:
        overlap = set(extra) & set(payload)
        if overlap:
            raise ValueError(f"extra keys shadow result fields: {sorted(overlap)}")
        payload.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_result_json(path):
    """Returns (ClusteringResult, extra dict of any additional keys)."""
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    result = ClusteringResult(
        assignments=np.array(payload["assignments"], dtype=np.int64),
        medoids=tuple(payload["medoids"]),
        objective=float(payload["objective"]),
        objective_history=tuple(payload.get("objective_history", ())),
    )
    core = {"assignments", "medoids", "objective", "objective_history"}
    return result, {k: v for k, v in payload.items() if k not in core}


def save_report_json(path, report: ValidityReport) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_report_json(path) -> ValidityReport:
    with open(path, "r", encoding="utf-8") as fh:
        return ValidityReport.from_dict(json.load(fh))


def load_timeseries_csv(path, label_column="label"):
    """One series per row; the header holds timestamps, plus an optional label column.

    Returns (values array, labels list or None, timestamps list).
    """
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"empty dataset file {path}")
        label_idx = header.index(label_column) if label_column in header else None
        value_cols = [i for i in range(len(header)) if i != label_idx]
        if len(value_cols) < 2:
            raise ValueError("a series needs at least two sample columns")
        rows, labels = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"ragged row in {path}")
            rows.append([float(row[i]) for i in value_cols])
            if label_idx is not None:
                labels.append(row[label_idx])
    if not rows:
        raise ValueError(f"no series in {path}")
    timestamps = [header[i] for i in value_cols]
    return np.array(rows, dtype=np.float64), (labels if label_idx is not None else None), timestamps


def load_ucr_tsv(path):
    """Archive format: tab-separated, class label first, then the samples.

    Returns (values array, labels list of str).
    """
    rows, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.strip().split("\t")
            if len(parts) < 2:
                continue
            labels.append(parts[0])
            rows.append([float(v) for v in parts[1:]])
    if not rows:
        raise ValueError(f"no series in {path}")
    lengths = {len(r) for r in rows}
    if len(lengths) != 1:
        raise ValueError(f"ragged series in {path}")
    return np.array(rows, dtype=np.float64), labels


def load_graph_csvs(nodes_path, summary_path):
    """Node rows (graph_id, voltage, demand) joined against summary rows
    (graph_id, total_demand, node_count), ordered as in the summary.

    Returns (node_tables, total_demands, graph_ids).
    """
    tables = {}
    with open(nodes_path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["graph_id", "voltage", "demand"]:
            raise ValueError(f"not a graph node file: {nodes_path}")
        for row in reader:
            if not row:
                continue
            tables.setdefault(row[0], []).append([float(row[1]), float(row[2])])
    node_tables, demands, ids = [], [], []
    with open(summary_path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["graph_id", "total_demand", "node_count"]:
            raise ValueError(f"not a graph summary file: {summary_path}")
        for row in reader:
            if not row:
                continue
            graph_id = row[0]
            if graph_id in ids:
                raise ValueError(f"duplicate graph {graph_id} in {summary_path}")
            if graph_id not in tables:
                raise ValueError(f"graph {graph_id} has no node rows")
            table = np.array(tables[graph_id], dtype=np.float64)
            if table.shape[0] != int(row[2]):
                raise ValueError(f"graph {graph_id} node count mismatch")
            node_tables.append(table)
            demands.append(float(row[1]))
            ids.append(graph_id)
    if not ids:
        raise ValueError(f"no graphs in {summary_path}")
    extra = set(tables) - set(ids)
    if extra:
        raise ValueError(f"node rows for unknown graphs: {sorted(extra)}")
    return node_tables, demands, ids
