"""Model zoo: GCN, TAGConv, mean-aggregator SAGE, GAT, and the two-hop
linear-attention layer, assembled into input-MLP / GNN stack / output-MLP
pipelines.

Spectral layers (gcn, tagconv) consume the symmetric-normalized graph;
spatial layers (sage_mean, gat, two_hop_linear) consume the raw graph. The
assembler precomputes both variants once and shares them across layers.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .sparse import SparseGraph, k_hop_csr, normalize, to_undirected

LAYER_KINDS = ("gcn", "tagconv", "sage_mean", "gat", "two_hop_linear")
ACTIVATIONS = {
    "relu": ad.relu,
    "leaky_relu": ad.leaky_relu,
    "elu": ad.elu,
}


@dataclass
class LayerSpec:
    kind: str
    in_dim: int
    out_dim: int
    K: int = 2            # tagconv polynomial radius
    heads: int = 1        # gat attention heads
    alpha: float = 1.0    # two_hop self-path mixing weight
    alpha_learnable: bool = True

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.in_dim < 1 or self.out_dim < 1:
            raise ValueError("layer dims must be >= 1")
        if self.K < 0 or self.heads < 1:
            raise ValueError("K must be >= 0 and heads >= 1")
        if self.kind == "two_hop_linear" and self.in_dim != self.out_dim:
            raise ValueError("two_hop_linear requires in_dim == out_dim")

    def out_width(self, is_final: bool) -> int:
        """Effective output width: gat concatenates heads except on the final
        GNN layer, where heads are averaged."""
        if self.kind == "gat" and not is_final:
            return self.out_dim * self.heads
        return self.out_dim


@dataclass
class ModelSpec:
    input_mlp_dims: list[int] = field(default_factory=list)
    gnn_layers: list[LayerSpec] = field(default_factory=list)
    output_mlp_dims: list[int] = field(default_factory=list)
    dropout_p: float = 0.5
    activation: str = "relu"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (0.0 <= self.dropout_p < 1.0):
            raise ValueError("dropout_p must be in [0, 1)")
        self.gnn_layers = [ls if isinstance(ls, LayerSpec) else LayerSpec(**ls)
                           for ls in self.gnn_layers]
        widths = self.stack_widths()
        for prev, layer in zip(widths[:-1], self.gnn_layers[1:]):
            if layer.in_dim != prev:
                raise ValueError(f"gnn chain mismatch: {prev} -> {layer.in_dim}")
        if self.gnn_layers and len(self.input_mlp_dims) >= 2 \
                and self.input_mlp_dims[-1] != self.gnn_layers[0].in_dim:
            raise ValueError("input MLP output width must match first GNN layer")

    def stack_widths(self) -> list[int]:
        last = len(self.gnn_layers) - 1
        return [ls.out_width(i == last) for i, ls in enumerate(self.gnn_layers)]

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        doc = json.loads(text)
        doc["gnn_layers"] = [LayerSpec(**ls) for ls in doc.get("gnn_layers", [])]
        return cls(**doc)


# ---------------------------------------------------------------------------
# graph operator variants, computed once and cached on the graph

class GraphOperators:
    """Lazy per-graph propagation structures shared by all layers/trials."""

    def __init__(self, graph: SparseGraph):
        self.raw = graph

    def _get(self, key, build):
        cache = self.raw._cache
        if key not in cache:
            cache[key] = build()
        return cache[key]

    @property
    def normalized(self) -> SparseGraph:
        def build():
            g = to_undirected(self.raw) if self.raw.directed else self.raw
            return normalize(g, "symmetric", add_self_loops=True)
        return self._get("sym_norm", build)

    @property
    def mean_in(self) -> SparseGraph:
        """Operator whose product with H gives the in-neighbor mean per row."""
        def build():
            t = self.raw.transpose()
            deg = np.diff(t.row_ptr).astype(np.float64)
            inv = np.where(deg > 0, 1.0 / np.where(deg > 0, deg, 1.0), 0.0)
            w = np.repeat(inv, np.diff(t.row_ptr))
            return SparseGraph(t.n_nodes, t.row_ptr, t.col_idx, w, True, True)
        return self._get("mean_in", build)

    @property
    def in_edges_self(self):
        """(row_ptr, src, dst) of in-edges grouped by destination, each
        destination's segment including a self-edge (appended last)."""
        def build():
            t = self.raw.transpose()
            n = t.n_nodes
            srcs = [np.append(t.neighbors(i), i) for i in range(n)]
            counts = np.array([len(s) for s in srcs], dtype=np.int64)
            ptr = np.zeros(n + 1, dtype=np.int64)
            np.cumsum(counts, out=ptr[1:])
            src = np.concatenate(srcs).astype(np.int64)
            dst = np.repeat(np.arange(n, dtype=np.int64), counts)
            return ptr, src, dst
        return self._get("in_edges_self", build)

    @property
    def two_hop(self):
        return k_hop_csr(self.raw, 2)


def operators(graph: SparseGraph) -> GraphOperators:
    return GraphOperators(graph)


# ---------------------------------------------------------------------------
# functional layer ops

def gcn_layer(a_hat: SparseGraph, h: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = ad.matmul(ad.spmm(a_hat, h), w)
    return ad.add_bias(out, b) if b is not None else out


def tagconv_layer(a_hat: SparseGraph, h: Tensor, ws: list[Tensor],
                  b: Tensor | None = None) -> Tensor:
    """Polynomial propagation: sum_k A^k H W_k, powers applied iteratively."""
    acc = ad.matmul(h, ws[0])
    prop = h
    for wk in ws[1:]:
        prop = ad.spmm(a_hat, prop)
        acc = ad.add(acc, ad.matmul(prop, wk))
    return ad.add_bias(acc, b) if b is not None else acc


def sage_mean_layer(g: SparseGraph, h: Tensor, w_self: Tensor, w_neigh: Tensor,
                    b: Tensor | None = None, mean_op: SparseGraph | None = None) -> Tensor:
    """Self transform plus transformed in-neighbor mean; isolated nodes get a
    zero neighbor term."""
    if mean_op is None:
        mean_op = GraphOperators(g).mean_in
    out = ad.add(ad.matmul(h, w_self), ad.matmul(ad.spmm(mean_op, h), w_neigh))
    return ad.add_bias(out, b) if b is not None else out


def gat_layer(g: SparseGraph, h: Tensor, heads: list[tuple[Tensor, Tensor, Tensor]],
              leaky_slope: float = 0.2, average_heads: bool = False,
              edges=None, return_attention: bool = False):
    """Multi-head attention over in-neighbors plus a self-edge.

    Each head is (W, a_dst, a_src): score of edge j->i is
    LeakyReLU(a_dst . Wh_i + a_src . Wh_j), softmax-normalized over i's
    neighborhood (self included). Heads concatenate, or average when this is
    the model's final GNN layer.
    """
    if edges is None:
        edges = GraphOperators(g).in_edges_self
    ptr, src, dst = edges
    outs, attn = [], []
    for w, a_dst, a_src in heads:
        hw = ad.matmul(h, w)
        s_dst = ad.matmul(hw, a_dst)
        s_src = ad.matmul(hw, a_src)
        e = ad.leaky_relu(ad.add(ad.gather_rows(s_dst, dst), ad.gather_rows(s_src, src)),
                          leaky_slope)
        alpha = ad.segment_softmax(e, ptr)
        msg = ad.mul_colvec(ad.gather_rows(hw, src), alpha)
        outs.append(ad.segment_rows_sum(msg, ptr))
        attn.append(alpha)
    if len(outs) == 1:
        out = outs[0]
    elif average_heads:
        acc = outs[0]
        for o in outs[1:]:
            acc = ad.add(acc, o)
        out = ad.scale(acc, 1.0 / len(outs))
    else:
        out = ad.concat_cols(outs)
    return (out, attn) if return_attention else out


def two_hop_linear_layer(g: SparseGraph, h: Tensor, a: Tensor, w: Tensor,
                         b: Tensor, alpha: Tensor, n2=None) -> Tensor:
    """Aggregate the 2-hop neighborhood with learned softmax scores and add a
    scaled linear self term: score of node j is a . h_j, normalized over each
    node's 2-hop set; isolated nodes contribute only the self term."""
    if n2 is None:
        n2 = k_hop_csr(g, 2)
    ptr, idx = n2
    scores = ad.matmul(h, a)
    att = ad.segment_softmax(ad.gather_rows(scores, idx), ptr)
    agg = ad.segment_rows_sum(ad.mul_colvec(ad.gather_rows(h, idx), att), ptr)
    self_term = ad.mul_scalar(ad.add_bias(ad.matmul(h, w), b), alpha)
    return ad.add(agg, self_term)


# ---------------------------------------------------------------------------
# parameter containers

def glorot(in_dim: int, out_dim: int, rng: np.random.Generator) -> Tensor:
    limit = np.sqrt(6.0 / (in_dim + out_dim))
    return Tensor(rng.uniform(-limit, limit, size=(in_dim, out_dim)), requires_grad=True)


def zeros_param(rows: int, cols: int) -> Tensor:
    return Tensor(np.zeros((rows, cols)), requires_grad=True)


class _Layer:
    kind = "?"

    def params(self) -> list[Tensor]:
        raise NotImplementedError

    def forward(self, ops: GraphOperators, h: Tensor) -> Tensor:
        raise NotImplementedError


class GCNCell(_Layer):
    kind = "gcn"

    def __init__(self, in_dim, out_dim, rng, bias=True):
        self.w = glorot(in_dim, out_dim, rng)
        self.b = zeros_param(1, out_dim) if bias else None

    def params(self):
        return [self.w] + ([self.b] if self.b is not None else [])

    def forward(self, ops, h):
        return gcn_layer(ops.normalized, h, self.w, self.b)


class TAGConvCell(_Layer):
    kind = "tagconv"

    def __init__(self, in_dim, out_dim, K, rng, bias=True):
        self.ws = [glorot(in_dim, out_dim, rng) for _ in range(K + 1)]
        self.b = zeros_param(1, out_dim) if bias else None

    def params(self):
        return list(self.ws) + ([self.b] if self.b is not None else [])

    def forward(self, ops, h):
        return tagconv_layer(ops.normalized, h, self.ws, self.b)


class SageMeanCell(_Layer):
    kind = "sage_mean"

    def __init__(self, in_dim, out_dim, rng, bias=True):
        self.w_self = glorot(in_dim, out_dim, rng)
        self.w_neigh = glorot(in_dim, out_dim, rng)
        self.b = zeros_param(1, out_dim) if bias else None

    def params(self):
        return [self.w_self, self.w_neigh] + ([self.b] if self.b is not None else [])

    def forward(self, ops, h):
        return sage_mean_layer(ops.raw, h, self.w_self, self.w_neigh, self.b,
                               mean_op=ops.mean_in)


class GATCell(_Layer):
    kind = "gat"

    def __init__(self, in_dim, out_dim, heads, rng, average_heads=False, leaky_slope=0.2):
        self.heads = [(glorot(in_dim, out_dim, rng),
                       glorot(out_dim, 1, rng),
                       glorot(out_dim, 1, rng)) for _ in range(heads)]
        self.average_heads = average_heads
        self.leaky_slope = leaky_slope

    def params(self):
        return [t for head in self.heads for t in head]

    def forward(self, ops, h):
        return gat_layer(ops.raw, h, self.heads, leaky_slope=self.leaky_slope,
                         average_heads=self.average_heads, edges=ops.in_edges_self)


class TwoHopLinearCell(_Layer):
    kind = "two_hop_linear"

    def __init__(self, dim, rng, alpha=1.0, alpha_learnable=True):
        self.a = glorot(dim, 1, rng)
        self.w = glorot(dim, dim, rng)
        self.b = zeros_param(1, dim)
        self.alpha = Tensor(np.array([[alpha]]), requires_grad=alpha_learnable)

    def params(self):
        base = [self.a, self.w, self.b]
        return base + ([self.alpha] if self.alpha.requires_grad else [])

    def forward(self, ops, h):
        return two_hop_linear_layer(ops.raw, h, self.a, self.w, self.b, self.alpha,
                                    n2=ops.two_hop)


def make_cell(spec: LayerSpec, rng: np.random.Generator, is_final: bool,
              bias: bool = True) -> _Layer:
    if spec.kind == "gcn":
        return GCNCell(spec.in_dim, spec.out_dim, rng, bias=bias)
    if spec.kind == "tagconv":
        return TAGConvCell(spec.in_dim, spec.out_dim, spec.K, rng, bias=bias)
    if spec.kind == "sage_mean":
        return SageMeanCell(spec.in_dim, spec.out_dim, rng, bias=bias)
    if spec.kind == "gat":
        return GATCell(spec.in_dim, spec.out_dim, spec.heads, rng,
                       average_heads=is_final)
    return TwoHopLinearCell(spec.in_dim, rng, alpha=spec.alpha,
                            alpha_learnable=spec.alpha_learnable)


# ---------------------------------------------------------------------------
# assembled model

class Model:
    """input-MLP -> GNN stack -> (late feature concat) -> output-MLP."""

    def __init__(self, ops: GraphOperators | None, features: np.ndarray,
                 input_linears, cells, output_linears,
                 activation: str = "relu", dropout_p: float = 0.0,
                 late_features: np.ndarray | None = None):
        self.ops = ops
        self.features = features
        self.input_linears = input_linears      # list of (W, b)
        self.cells = cells                      # list of _Layer
        self.output_linears = output_linears
        self.activation = activation
        self.dropout_p = dropout_p
        self.late_features = late_features

    def parameters(self) -> list[Tensor]:
        params = []
        for w, b in self.input_linears:
            params += [w, b]
        for cell in self.cells:
            params += cell.params()
        for w, b in self.output_linears:
            params += [w, b]
        return params

    def snapshot(self) -> list[np.ndarray]:
        return [p.values.copy() for p in self.parameters()]

    def restore(self, snap: list[np.ndarray]) -> None:
        for p, values in zip(self.parameters(), snap):
            p.values[...] = values

    def forward(self, training: bool = False, rng: np.random.Generator | None = None) -> Tensor:
        if rng is None:
            rng = np.random.default_rng(0)
        act = ACTIVATIONS[self.activation]
        h = Tensor(self.features)
        for w, b in self.input_linears:
            h = act(ad.add_bias(ad.matmul(h, w), b))
        if self.cells:
            boundary = len(self.output_linears) > 0
            for i, cell in enumerate(self.cells):
                h = cell.forward(self.ops, h)
                if i < len(self.cells) - 1 or boundary:
                    h = ad.dropout(act(h), self.dropout_p, training, rng)
        elif self.input_linears:
            h = ad.dropout(h, self.dropout_p, training, rng)
        if self.late_features is not None:
            h = ad.concat_cols([h, Tensor(self.late_features)])
        for j, (w, b) in enumerate(self.output_linears):
            h = ad.add_bias(ad.matmul(h, w), b)
            if j < len(self.output_linears) - 1:
                h = act(h)
        return h


def _mlp(dims: list[int], rng) -> list[tuple[Tensor, Tensor]]:
    return [(glorot(a, b, rng), zeros_param(1, b)) for a, b in zip(dims[:-1], dims[1:])]


def build_model(spec: ModelSpec, graph: SparseGraph, features: np.ndarray,
                late_features: np.ndarray | None = None, seed: int = 0,
                bias: bool = True) -> Model:
    """Instantiate a ModelSpec against a graph and an input feature matrix."""
    rng = np.random.default_rng(seed)
    in_width = features.shape[1]
    if len(spec.input_mlp_dims) >= 2 and spec.input_mlp_dims[0] != in_width:
        raise ValueError(f"input MLP expects {spec.input_mlp_dims[0]} features, "
                         f"matrix has {in_width}")
    input_linears = _mlp(spec.input_mlp_dims, rng)
    width = spec.input_mlp_dims[-1] if len(spec.input_mlp_dims) >= 2 else in_width
    ops = GraphOperators(graph)
    cells = []
    last = len(spec.gnn_layers) - 1
    for i, ls in enumerate(spec.gnn_layers):
        if ls.in_dim != width:
            raise ValueError(f"GNN layer {i} expects {ls.in_dim} dims, gets {width}")
        cells.append(make_cell(ls, rng, is_final=(i == last), bias=bias))
        width = ls.out_width(i == last)
    if late_features is not None:
        width += late_features.shape[1]
    if spec.output_mlp_dims:
        if len(spec.output_mlp_dims) < 2:
            raise ValueError("output_mlp_dims must list at least [in, out]")
        if spec.output_mlp_dims[0] != width:
            raise ValueError(f"output MLP expects {spec.output_mlp_dims[0]} dims, "
                             f"stack provides {width}")
    output_linears = _mlp(spec.output_mlp_dims, rng)
    return Model(ops, features, input_linears, cells, output_linears,
                 activation=spec.activation, dropout_p=spec.dropout_p,
                 late_features=late_features)


def forward(model: Model, training: bool = False, seed: int = 0) -> Tensor:
    """Run one forward pass; the seed drives the dropout masks."""
    return model.forward(training=training, rng=np.random.default_rng(seed))


def count_params(model: Model) -> int:
    """Structural count of trainable scalars (weights, biases, attention
    vectors, learnable mixing scalars)."""
    return int(sum(p.size for p in model.parameters()))
