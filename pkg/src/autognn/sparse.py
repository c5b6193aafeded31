"""CSR graph storage and the normalization / neighborhood primitives.

The adjacency is stored as directed arcs even for undirected graphs: an
undirected edge {i, j} is materialized as the two arcs i->j and j->i so a
single CSR kernel serves every consumer.
"""

from __future__ import annotations

import numpy as np


class SparseGraph:
    """Canonical CSR adjacency.

    Canonical means: rows sorted, column indices strictly increasing within
    each row (no duplicate arcs), no self-loops unless explicitly added by
    ``normalize``.
    """

    __slots__ = ("n_nodes", "row_ptr", "col_idx", "edge_weight", "directed",
                 "weighted", "_cache")

    def __init__(self, n_nodes, row_ptr, col_idx, edge_weight, directed, weighted):
        self.n_nodes = int(n_nodes)
        self.row_ptr = np.asarray(row_ptr, dtype=np.int64)
        self.col_idx = np.asarray(col_idx, dtype=np.int64)
        self.edge_weight = np.asarray(edge_weight, dtype=np.float64)
        self.directed = bool(directed)
        self.weighted = bool(weighted)
        self._cache = {}
        self._validate()

    def _validate(self):
        if self.row_ptr.shape != (self.n_nodes + 1,):
            raise ValueError("row_ptr must have length n_nodes+1")
        if self.row_ptr[0] != 0 or self.row_ptr[-1] != len(self.col_idx):
            raise ValueError("row_ptr endpoints inconsistent with col_idx")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if len(self.col_idx) != len(self.edge_weight):
            raise ValueError("col_idx and edge_weight length mismatch")
        if len(self.col_idx) and (self.col_idx.min() < 0 or self.col_idx.max() >= self.n_nodes):
            raise ValueError("col_idx entry out of [0, n_nodes)")
        for i in range(self.n_nodes):
            row = self.col_idx[self.row_ptr[i]:self.row_ptr[i + 1]]
            if len(row) > 1 and np.any(np.diff(row) <= 0):
                raise ValueError(f"row {i} not strictly increasing (duplicates?)")
        if not self.weighted and len(self.edge_weight) and not np.all(self.edge_weight == 1.0):
            raise ValueError("unweighted graph must have all edge weights 1.0")

    @property
    def n_arcs(self) -> int:
        """Number of stored directed arcs."""
        return len(self.col_idx)

    def neighbors(self, node: int) -> np.ndarray:
        return self.col_idx[self.row_ptr[node]:self.row_ptr[node + 1]]

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def in_degrees(self) -> np.ndarray:
        return np.bincount(self.col_idx, minlength=self.n_nodes)

    def arcs(self):
        """Return (src, dst, weight) arrays for all stored arcs."""
        src = np.repeat(np.arange(self.n_nodes, dtype=np.int64), self.out_degrees())
        return src, self.col_idx.copy(), self.edge_weight.copy()

    def transpose(self) -> "SparseGraph":
        """Graph with every arc reversed (cached)."""
        if "transpose" not in self._cache:
            src, dst, w = self.arcs()
            self._cache["transpose"] = from_arcs(
                self.n_nodes, dst, src, w, directed=self.directed,
                weighted=self.weighted, merge="error")
        return self._cache["transpose"]

    def to_dense(self) -> np.ndarray:
        """Dense N x N weight matrix (test / small-graph use)."""
        m = np.zeros((self.n_nodes, self.n_nodes))
        src, dst, w = self.arcs()
        m[src, dst] = w
        return m

    def __eq__(self, other):
        return (isinstance(other, SparseGraph)
                and self.n_nodes == other.n_nodes
                and self.directed == other.directed
                and self.weighted == other.weighted
                and np.array_equal(self.row_ptr, other.row_ptr)
                and np.array_equal(self.col_idx, other.col_idx)
                and np.array_equal(self.edge_weight, other.edge_weight))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"SparseGraph(n_nodes={self.n_nodes}, n_arcs={self.n_arcs}, {kind})"


def from_arcs(n_nodes, src, dst, weight, directed, weighted, merge="sum"):
    """Build a canonical SparseGraph from arc arrays.

    Duplicate (src, dst) pairs are merged: ``merge`` is "sum", "max", or
    "error". Self-loops are kept as given (the dataset loader strips them
    before calling this).
    """
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    weight = np.asarray(weight, dtype=np.float64)
    if len(src) == 0:
        return SparseGraph(n_nodes, np.zeros(n_nodes + 1, dtype=np.int64),
                           np.zeros(0, dtype=np.int64), np.zeros(0), directed, weighted)
    order = np.lexsort((dst, src))
    src, dst, weight = src[order], dst[order], weight[order]
    keys = src * np.int64(n_nodes) + dst
    is_first = np.concatenate(([True], keys[1:] != keys[:-1]))
    if not np.all(is_first):
        if merge == "error":
            raise ValueError("duplicate arcs")
        group = np.cumsum(is_first) - 1
        if merge == "sum":
            weight = np.bincount(group, weights=weight)
        else:  # max
            agg = np.full(group[-1] + 1, -np.inf)
            np.maximum.at(agg, group, weight)
            weight = agg
        src, dst = src[is_first], dst[is_first]
    if not weighted:
        weight = np.ones_like(weight)
    row_ptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n_nodes), out=row_ptr[1:])
    return SparseGraph(n_nodes, row_ptr, dst, weight, directed, weighted)


def edgeless(n_nodes, directed=False, weighted=False) -> SparseGraph:
    return from_arcs(n_nodes, [], [], [], directed, weighted)


def segment_sum(values: np.ndarray, row_ptr: np.ndarray) -> np.ndarray:
    """Sum `values` (E x d) over the contiguous segments given by row_ptr.

    Empty segments yield zero rows (np.add.reduceat alone mishandles them).
    """
    n = len(row_ptr) - 1
    out = np.zeros((n,) + values.shape[1:], dtype=values.dtype)
    if values.shape[0] == 0:
        return out
    nonempty = np.flatnonzero(np.diff(row_ptr) > 0)
    if len(nonempty):
        out[nonempty] = np.add.reduceat(values, row_ptr[nonempty], axis=0)
    return out


def spmm_values(g: SparseGraph, h: np.ndarray) -> np.ndarray:
    """CSR matrix times dense matrix: row i of the result aggregates h over
    the arcs stored in row i."""
    if g.n_nodes != h.shape[0]:
        raise ValueError(f"graph has {g.n_nodes} nodes but matrix has {h.shape[0]} rows")
    contrib = g.edge_weight[:, None] * h[g.col_idx]
    return segment_sum(contrib, g.row_ptr)


def to_undirected(g: SparseGraph) -> SparseGraph:
    """Symmetrize: weight of each unordered pair = max of the two arc weights."""
    if not g.directed:
        return g
    src, dst, w = g.arcs()
    all_src = np.concatenate([src, dst])
    all_dst = np.concatenate([dst, src])
    all_w = np.concatenate([w, w])
    return from_arcs(g.n_nodes, all_src, all_dst, all_w,
                     directed=False, weighted=g.weighted, merge="max")


def normalize(g: SparseGraph, mode: str, add_self_loops: bool) -> SparseGraph:
    """Degree-normalized propagation weights.

    mode="symmetric": D^{-1/2} (A + I) D^{-1/2} with D the degree of (A + I);
    requires an undirected graph. mode="row": D^{-1} (A + I), row-stochastic
    on every non-isolated row.
    """
    if mode not in ("symmetric", "row"):
        raise ValueError(f"unknown normalization mode {mode!r}")
    if mode == "symmetric" and g.directed:
        raise ValueError("symmetric normalization requires an undirected graph; "
                         "symmetrize first (to_undirected)")
    src, dst, w = g.arcs()
    if add_self_loops:
        loop = np.arange(g.n_nodes, dtype=np.int64)
        src = np.concatenate([src, loop])
        dst = np.concatenate([dst, loop])
        w = np.concatenate([w, np.ones(g.n_nodes)])
    merged = from_arcs(g.n_nodes, src, dst, w, directed=g.directed,
                       weighted=True, merge="sum")
    src, dst, w = merged.arcs()
    deg = segment_sum(w[:, None], merged.row_ptr)[:, 0]
    if mode == "symmetric":
        with np.errstate(divide="ignore"):
            inv_sqrt = np.where(deg > 0, deg, 1.0) ** -0.5
        inv_sqrt[deg <= 0] = 0.0
        new_w = inv_sqrt[src] * w * inv_sqrt[dst]
    else:
        inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
        new_w = inv[src] * w
    return SparseGraph(merged.n_nodes, merged.row_ptr, merged.col_idx, new_w,
                       merged.directed, True)


def k_hop(g: SparseGraph, node: int, k: int) -> np.ndarray:
    """Nodes reachable from `node` within <= k hops, excluding the node itself.

    Follows stored arcs (out-direction). Returned in ascending index order.
    """
    if not (0 <= node < g.n_nodes):
        raise ValueError(f"node {node} out of range [0, {g.n_nodes})")
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    frontier = g.neighbors(node)
    reach = set(frontier.tolist())
    for _ in range(k - 1):
        nxt = set()
        for u in frontier:
            nxt.update(g.neighbors(int(u)).tolist())
        frontier = np.array(sorted(nxt - reach), dtype=np.int64)
        reach |= nxt
    reach.discard(node)
    return np.array(sorted(reach), dtype=np.int64)


def k_hop_csr(g: SparseGraph, k: int):
    """(row_ptr, idx) listing k_hop(g, i, k) for every node i (cached on g)."""
    key = f"k_hop_{k}"
    if key not in g._cache:
        if k == 1:
            loops = g.col_idx == np.repeat(np.arange(g.n_nodes), g.out_degrees())
            if not loops.any():
                g._cache[key] = (g.row_ptr.copy(), g.col_idx.copy())
            else:
                neigh = [k_hop(g, i, 1) for i in range(g.n_nodes)]
                g._cache[key] = _lists_to_csr(neigh)
        else:
            neigh = [k_hop(g, i, k) for i in range(g.n_nodes)]
            g._cache[key] = _lists_to_csr(neigh)
    return g._cache[key]


def _lists_to_csr(lists):
    counts = np.array([len(x) for x in lists], dtype=np.int64)
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    idx = (np.concatenate(lists) if ptr[-1] else np.zeros(0, dtype=np.int64))
    return ptr, idx.astype(np.int64)


def permute(g: SparseGraph, perm: np.ndarray) -> SparseGraph:
    """Relabel node i as perm[i]; used by equivariance checks."""
    perm = np.asarray(perm, dtype=np.int64)
    src, dst, w = g.arcs()
    return from_arcs(g.n_nodes, perm[src], perm[dst], w,
                     directed=g.directed, weighted=g.weighted, merge="error")
