"""Minimal reverse-mode differentiation over dense 2-D double arrays.

Every op returns a fresh Tensor; when any input requires grad, the op links
the output to its inputs with a rule mapping the output gradient to input
gradients. `backward` walks that recording in reverse topological order,
accumulates into a scratch map, and only then flushes into `.grad` — so
calling it twice without zeroing doubles every gradient exactly.

No broadcasting beyond the explicit bias/column-vector ops; no views.
"""

from __future__ import annotations

import numpy as np

from .sparse import SparseGraph, segment_sum, spmm_values


class Tensor:
    """Dense (rows, cols) float64 value with an accumulated-gradient slot."""

    __slots__ = ("values", "grad", "requires_grad", "_inputs", "_rule")

    def __init__(self, values, requires_grad: bool = False):
        arr = np.array(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        if arr.ndim != 2:
            raise ValueError(f"tensors are 2-D; got shape {arr.shape}")
        self.values = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self._inputs: tuple[Tensor, ...] = ()
        self._rule = None

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError("item() needs a 1x1 tensor")
        return float(self.values[0, 0])

    def zero_grad(self):
        if self.grad is not None:
            self.grad.fill(0.0)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"


def _record(out: Tensor, inputs: tuple[Tensor, ...], rule) -> Tensor:
    """Attach a backward rule if any input participates in the graph."""
    if any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.grad = np.zeros_like(out.values)
        out._inputs = inputs
        out._rule = rule
    return out


def backward(loss: Tensor) -> None:
    """Populate .grad on every requires_grad tensor reachable from `loss`.

    Gradients accumulate across calls; the caller zeroes between steps.
    """
    if loss.values.shape != (1, 1):
        raise ValueError("backward expects a scalar (1x1) loss tensor")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._inputs:
            stack.append((parent, False))

    pending: dict[int, np.ndarray] = {id(loss): np.ones((1, 1))}
    for node in reversed(order):
        g = pending.get(id(node))
        if g is None or node._rule is None:
            continue
        for parent, contrib in zip(node._inputs, node._rule(g)):
            if contrib is None or not parent.requires_grad:
                continue
            # rules may hand back (views of) the upstream gradient itself, so
            # accumulation must never write in place
            acc = pending.get(id(parent))
            pending[id(parent)] = contrib if acc is None else acc + contrib
    for node in order:
        g = pending.get(id(node))
        if g is not None:
            node.grad += g


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    out = Tensor(a.values @ b.values)
    return _record(out, (a, b),
                   lambda g: (g @ b.values.T, a.values.T @ g))


def spmm(g: SparseGraph, h: Tensor) -> Tensor:
    """Sparse adjacency times dense features; no gradient to the graph."""
    out = Tensor(spmm_values(g, h.values))
    return _record(out, (h,), lambda gr: (spmm_values(g.transpose(), gr),))


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"add shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.values + b.values)
    return _record(out, (a, b), lambda g: (g, g))


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-broadcast bias: x (N x d) + b (1 x d)."""
    if b.shape != (1, x.shape[1]):
        raise ValueError(f"bias shape {b.shape} incompatible with {x.shape}")
    out = Tensor(x.values + b.values)
    return _record(out, (x, b), lambda g: (g, g.sum(axis=0, keepdims=True)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul shape mismatch: {a.shape} vs {b.shape}")
    out = Tensor(a.values * b.values)
    return _record(out, (a, b), lambda g: (g * b.values, g * a.values))


def mul_colvec(x: Tensor, s: Tensor) -> Tensor:
    """Scale each row of x (E x d) by the matching entry of s (E x 1)."""
    if s.shape != (x.shape[0], 1):
        raise ValueError(f"column vector shape {s.shape} incompatible with {x.shape}")
    out = Tensor(x.values * s.values)
    return _record(out, (x, s),
                   lambda g: (g * s.values, (g * x.values).sum(axis=1, keepdims=True)))


def mul_scalar(x: Tensor, s: Tensor) -> Tensor:
    """Scale x by a learnable 1x1 tensor."""
    if s.shape != (1, 1):
        raise ValueError("mul_scalar needs a 1x1 scale tensor")
    out = Tensor(x.values * s.values[0, 0])
    return _record(out, (x, s),
                   lambda g: (g * s.values[0, 0],
                              np.array([[(g * x.values).sum()]])))


def scale(x: Tensor, c: float) -> Tensor:
    out = Tensor(x.values * c)
    return _record(out, (x,), lambda g: (g * c,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties route the gradient to the first argument."""
    if a.shape != b.shape:
        raise ValueError(f"maximum shape mismatch: {a.shape} vs {b.shape}")
    take_a = a.values >= b.values
    out = Tensor(np.where(take_a, a.values, b.values))
    return _record(out, (a, b), lambda g: (g * take_a, g * ~take_a))


def concat_cols(tensors: list[Tensor]) -> Tensor:
    rows = tensors[0].shape[0]
    if any(t.shape[0] != rows for t in tensors):
        raise ValueError("concat_cols needs equal row counts")
    widths = [t.shape[1] for t in tensors]
    out = Tensor(np.concatenate([t.values for t in tensors], axis=1))
    splits = np.cumsum(widths)[:-1]
    return _record(out, tuple(tensors),
                   lambda g: tuple(np.ascontiguousarray(p) for p in np.split(g, splits, axis=1)))


# ---------------------------------------------------------------------------
# activations

def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.values, 0.0))
    return _record(out, (x,), lambda g: (g * (x.values > 0),))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    out = Tensor(np.where(x.values > 0, x.values, slope * x.values))
    return _record(out, (x,),
                   lambda g: (g * np.where(x.values > 0, 1.0, slope),))


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    neg = alpha * np.expm1(np.minimum(x.values, 0.0))
    out = Tensor(np.where(x.values > 0, x.values, neg))
    return _record(out, (x,),
                   lambda g: (g * np.where(x.values > 0, 1.0, neg + alpha),))


def dropout(x: Tensor, p: float, training: bool, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; the mask is drawn once and reused in backward."""
    if not (0.0 <= p < 1.0):
        raise ValueError(f"dropout probability must be in [0, 1); got {p}")
    if not training or p == 0.0:
        out = Tensor(x.values.copy())
        return _record(out, (x,), lambda g: (g,))
    mask = (rng.random(x.shape) >= p) / (1.0 - p)
    out = Tensor(x.values * mask)
    return _record(out, (x,), lambda g: (g * mask,))


# ---------------------------------------------------------------------------
# neighborhood gather / segment ops (edge-level attention plumbing)

def gather_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(x.values[idx])

    def rule(g):
        gx = np.zeros_like(x.values)
        np.add.at(gx, idx, g)
        return (gx,)
    return _record(out, (x,), rule)


def segment_softmax(scores: Tensor, row_ptr: np.ndarray) -> Tensor:
    """Softmax within each contiguous segment of an (E x 1) score column."""
    if scores.shape[1] != 1:
        raise ValueError("segment_softmax expects an E x 1 tensor")
    s = scores.values[:, 0]
    counts = np.diff(row_ptr)
    seg_max = np.full(len(counts), -np.inf)
    nonempty = np.flatnonzero(counts > 0)
    if len(nonempty):
        seg_max[nonempty] = np.maximum.reduceat(s, row_ptr[nonempty])
    shifted = np.exp(s - np.repeat(np.where(np.isfinite(seg_max), seg_max, 0.0), counts))
    denom = segment_sum(shifted[:, None], row_ptr)[:, 0]
    alpha = shifted / np.repeat(np.where(denom > 0, denom, 1.0), counts)
    out = Tensor(alpha[:, None])

    def rule(g):
        ga = g[:, 0] * alpha
        seg_dot = segment_sum(ga[:, None], row_ptr)[:, 0]
        return ((ga - alpha * np.repeat(seg_dot, counts))[:, None],)
    return _record(out, (scores,), rule)


def segment_rows_sum(x: Tensor, row_ptr: np.ndarray) -> Tensor:
    """Sum rows of x (E x d) over contiguous segments -> (S x d)."""
    counts = np.diff(row_ptr)
    out = Tensor(segment_sum(x.values, row_ptr))
    return _record(out, (x,), lambda g: (np.repeat(g, counts, axis=0),))


# ---------------------------------------------------------------------------
# loss

def masked_softmax_cross_entropy(logits: Tensor, labels: np.ndarray,
                                 mask: np.ndarray) -> Tensor:
    """Mean negative log-softmax of the true class over masked rows."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise ValueError("loss mask selects no rows")
    labels = np.asarray(labels, dtype=np.int64)
    rows = np.flatnonzero(mask)
    z = logits.values[rows]
    z = z - z.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    picked = logp[np.arange(len(rows)), labels[rows]]
    out = Tensor(np.array([[-picked.mean()]]))

    def rule(g):
        grad = np.zeros_like(logits.values)
        softmax = np.exp(logp)
        softmax[np.arange(len(rows)), labels[rows]] -= 1.0
        grad[rows] = softmax * (g[0, 0] / len(rows))
        return (grad,)
    return _record(out, (logits,), rule)


def softmax_rows(values: np.ndarray) -> np.ndarray:
    """Plain (non-recorded) row softmax for predictions."""
    z = values - values.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# numerical check

def grad_check(f, params: list[Tensor], h: float = 1e-6, max_coords: int = 64,
               seed: int = 0) -> float:
    """Compare analytic gradients of the scalar f() against central differences.

    Checks a seeded subsample of up to `max_coords` coordinates per parameter
    and returns the maximum relative error.
    """
    for p in params:
        p.zero_grad()
    backward(f())
    analytic = [p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, ga in zip(params, analytic):
        flat = p.values.reshape(-1)
        n = flat.size
        coords = np.arange(n) if n <= max_coords else rng.choice(n, size=max_coords, replace=False)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = f().item()
            flat[c] = orig - h
            f_minus = f().item()
            flat[c] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = ga.reshape(-1)[c]
            denom = max(abs(numeric), abs(a), 1e-8)
            worst = max(worst, abs(numeric - a) / denom)
    return worst
