"""Dataset directory format, loading/saving, and summary statistics.

A dataset directory holds (TSV = tab-separated, UTF-8, LF, one header line):

    meta.json         {"n_nodes", "n_classes", "directed", "weighted",
                       "time_budget_seconds"}
    edges.tsv         src  dst  weight     (undirected: each edge once)
    features.tsv      node_id  f0 ... f{D-1}   (optional; absent = featureless)
    labels_train.tsv  node_id  label
    test_ids.tsv      node_id

Node ids must form the dense range 0..N-1. Self-loops are stripped on load;
duplicate edges merge by weight sum (weighted) or collapse to 1.0 (unweighted).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DatasetFormatError, DatasetLoadError
from .sparse import SparseGraph, from_arcs

UNKNOWN_LABEL = -1

_META_KEYS = ("n_nodes", "n_classes", "directed", "weighted", "time_budget_seconds")


@dataclass
class DatasetBundle:
    """One transductive node-classification problem.

    `labels` holds -1 wherever the label is unknown (all test nodes at fit
    time). `test_ids` preserves the row order of test_ids.tsv, which is the
    order prediction files must follow.
    """
    graph: SparseGraph
    features: np.ndarray | None
    labels: np.ndarray
    train_mask: np.ndarray
    test_mask: np.ndarray
    n_classes: int
    test_ids: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    time_budget_seconds: float = 600.0

    def __post_init__(self):
        n = self.graph.n_nodes
        if self.features is not None and self.features.shape[0] != n:
            raise ValueError("features must have exactly one row per node")
        if np.any(self.train_mask & self.test_mask):
            raise ValueError("train and test masks overlap")
        bad = self.train_mask & ~((self.labels >= 0) & (self.labels < self.n_classes))
        if np.any(bad):
            raise ValueError("train node with label outside [0, n_classes)")

    @property
    def n_nodes(self) -> int:
        return self.graph.n_nodes

    @property
    def n_features(self) -> int:
        return 0 if self.features is None else self.features.shape[1]


@dataclass
class GraphStats:
    n_nodes: int
    n_edges: int
    avg_degree: float
    n_features: int
    n_classes: int
    directed: bool
    weighted: bool
    skewness: float


def _open_tsv(path):
    if not os.path.isfile(path):
        raise DatasetLoadError(f"missing mandatory file: {os.path.basename(path)}")
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError(f"{os.path.basename(path)}: empty file (header required)")
    return lines[1:]  # drop header; data lines are 2-based in error messages


def _check_node(value: str, n_nodes: int, fname: str, lineno: int) -> int:
    try:
        node = int(value)
    except ValueError:
        raise DatasetFormatError(f"{fname}:{lineno}: bad node id {value!r}") from None
    if not (0 <= node < n_nodes):
        raise DatasetFormatError(
            f"{fname}:{lineno}: node id {node} out of range [0, {n_nodes})")
    return node


def load_dataset(directory: str) -> DatasetBundle:
    """Load a dataset directory into a canonical bundle.

    Raises
    ------
    DatasetLoadError
        If a mandatory file is missing.
    DatasetFormatError
        On malformed content (bad ids, conflicting labels, mask overlap),
        naming the file and line.
    """
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.isfile(meta_path):
        raise DatasetLoadError("missing mandatory file: meta.json")
    with open(meta_path, encoding="utf-8") as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"meta.json: invalid JSON ({exc})") from None
    for key in _META_KEYS:
        if key not in meta:
            raise DatasetFormatError(f"meta.json: missing key {key!r}")
    n_nodes = int(meta["n_nodes"])
    n_classes = int(meta["n_classes"])
    directed = bool(meta["directed"])
    weighted = bool(meta["weighted"])

    # edges
    src, dst, wts = [], [], []
    for lineno, line in enumerate(_open_tsv(os.path.join(directory, "edges.tsv")), start=2):
        parts = line.split("\t")
        if len(parts) != 3:
            raise DatasetFormatError(f"edges.tsv:{lineno}: expected 3 columns, got {len(parts)}")
        s = _check_node(parts[0], n_nodes, "edges.tsv", lineno)
        d = _check_node(parts[1], n_nodes, "edges.tsv", lineno)
        try:
            w = float(parts[2])
        except ValueError:
            raise DatasetFormatError(f"edges.tsv:{lineno}: bad weight {parts[2]!r}") from None
        if not weighted and w != 1.0:
            raise DatasetFormatError(
                f"edges.tsv:{lineno}: weight {w} on an unweighted graph")
        if s == d:
            continue  # self-loops stripped; normalize() re-adds on request
        src.append(s)
        dst.append(d)
        wts.append(w)
    if not directed:
        # canonical undirected pair is (min, max); both arcs materialized
        src_a, dst_a = np.minimum(src, dst), np.maximum(src, dst)
        src = np.concatenate([src_a, dst_a]) if len(src) else np.zeros(0, dtype=np.int64)
        dst = np.concatenate([dst_a, src_a]) if len(dst) else np.zeros(0, dtype=np.int64)
        wts = np.concatenate([wts, wts]) if len(wts) else np.zeros(0)
    graph = from_arcs(n_nodes, src, dst, wts, directed=directed, weighted=weighted)

    # features (optional)
    features = None
    feat_path = os.path.join(directory, "features.tsv")
    if os.path.isfile(feat_path):
        with open(feat_path, encoding="utf-8", newline="") as fh:
            header = fh.readline().rstrip("\n")
        n_feat = len(header.split("\t")) - 1
        features = np.full((n_nodes, n_feat), np.nan)
        seen = np.zeros(n_nodes, dtype=bool)
        for lineno, line in enumerate(_open_tsv(feat_path), start=2):
            parts = line.split("\t")
            if len(parts) != n_feat + 1:
                raise DatasetFormatError(
                    f"features.tsv:{lineno}: expected {n_feat + 1} columns, got {len(parts)}")
            node = _check_node(parts[0], n_nodes, "features.tsv", lineno)
            if seen[node]:
                raise DatasetFormatError(f"features.tsv:{lineno}: duplicate row for node {node}")
            seen[node] = True
            features[node] = [float(v) for v in parts[1:]]
        if not seen.all():
            missing = int(np.flatnonzero(~seen)[0])
            raise DatasetFormatError(f"features.tsv: no feature row for node {missing}")

    # training labels
    labels = np.full(n_nodes, UNKNOWN_LABEL, dtype=np.int64)
    train_mask = np.zeros(n_nodes, dtype=bool)
    for lineno, line in enumerate(_open_tsv(os.path.join(directory, "labels_train.tsv")), start=2):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DatasetFormatError(f"labels_train.tsv:{lineno}: expected 2 columns")
        node = _check_node(parts[0], n_nodes, "labels_train.tsv", lineno)
        try:
            label = int(parts[1])
        except ValueError:
            raise DatasetFormatError(f"labels_train.tsv:{lineno}: bad label {parts[1]!r}") from None
        if not (0 <= label < n_classes):
            raise DatasetFormatError(
                f"labels_train.tsv:{lineno}: label {label} out of range [0, {n_classes})")
        if train_mask[node] and labels[node] != label:
            raise DatasetFormatError(
                f"labels_train.tsv:{lineno}: conflicting labels for node {node} "
                f"({labels[node]} vs {label})")
        labels[node] = label
        train_mask[node] = True

    # test ids
    test_mask = np.zeros(n_nodes, dtype=bool)
    test_ids = []
    for lineno, line in enumerate(_open_tsv(os.path.join(directory, "test_ids.tsv")), start=2):
        node = _check_node(line.split("\t")[0], n_nodes, "test_ids.tsv", lineno)
        if test_mask[node]:
            raise DatasetFormatError(f"test_ids.tsv:{lineno}: duplicate test id {node}")
        if train_mask[node]:
            raise DatasetFormatError(
                f"test_ids.tsv:{lineno}: node {node} appears in labels_train.tsv too")
        test_mask[node] = True
        test_ids.append(node)

    return DatasetBundle(graph=graph, features=features, labels=labels,
                         train_mask=train_mask, test_mask=test_mask,
                         n_classes=n_classes,
                         test_ids=np.array(test_ids, dtype=np.int64),
                         time_budget_seconds=float(meta["time_budget_seconds"]))


def save_dataset(bundle: DatasetBundle, directory: str) -> None:
    """Write a bundle back out in canonical form.

    Canonical: edges sorted (undirected pairs written once as src < dst),
    labels and test ids ascending, floats in shortest round-trip form. A
    load/save cycle on canonical files is byte-identical.
    """
    os.makedirs(directory, exist_ok=True)
    g = bundle.graph
    meta = {"directed": g.directed, "n_classes": bundle.n_classes,
            "n_nodes": g.n_nodes, "time_budget_seconds": bundle.time_budget_seconds,
            "weighted": g.weighted}
    with open(os.path.join(directory, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")

    src, dst, w = g.arcs()
    if not g.directed:
        keep = src < dst
        src, dst, w = src[keep], dst[keep], w[keep]
    with open(os.path.join(directory, "edges.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("src\tdst\tweight\n")
        for s, d, x in zip(src, dst, w):
            fh.write(f"{s}\t{d}\t{x!r}\n")

    if bundle.features is not None:
        n_feat = bundle.features.shape[1]
        with open(os.path.join(directory, "features.tsv"), "w", encoding="utf-8", newline="\n") as fh:
            fh.write("node_id\t" + "\t".join(f"f{j}" for j in range(n_feat)) + "\n")
            for i in range(g.n_nodes):
                row = "\t".join(repr(float(v)) for v in bundle.features[i])
                fh.write(f"{i}\t{row}\n")

    with open(os.path.join(directory, "labels_train.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node_id\tlabel\n")
        for i in np.flatnonzero(bundle.train_mask):
            fh.write(f"{i}\t{bundle.labels[i]}\n")

    with open(os.path.join(directory, "test_ids.tsv"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("node_id\n")
        for i in np.sort(bundle.test_ids):
            fh.write(f"{i}\n")


def compute_stats(bundle: DatasetBundle) -> GraphStats:
    """Summary statistics of a bundle.

    Edge count (and thus average degree) counts each undirected edge once and
    each directed arc once. Skewness = largest / smallest training-class size,
    computed over training labels only (test labels are hidden at fit time).
    """
    g = bundle.graph
    n_edges = g.n_arcs if g.directed else g.n_arcs // 2
    avg_degree = n_edges / g.n_nodes if g.n_nodes else 0.0
    train_labels = bundle.labels[bundle.train_mask]
    if len(train_labels):
        counts = np.bincount(train_labels, minlength=bundle.n_classes)
        counts = counts[counts > 0]
        skewness = float(counts.max() / counts.min())
    else:
        skewness = 1.0
    return GraphStats(n_nodes=g.n_nodes, n_edges=int(n_edges), avg_degree=float(avg_degree),
                      n_features=bundle.n_features, n_classes=bundle.n_classes,
                      directed=g.directed, weighted=g.weighted, skewness=skewness)
