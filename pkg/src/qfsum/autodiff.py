"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is fixed and covers exactly what a small encoder-decoder
transformer needs: matrix multiply, transpose, elementwise add/multiply,
constant add, scalar scale, row softmax, layer norm, GELU, embedding
lookup, column slice/concat, sum, and token-level cross entropy.
Every op records its inputs, so ``backward`` can walk the graph in
reverse topological order and accumulate gradients into ``Tensor.grad``.
"""

from __future__ import annotations

import math
from typing import Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    """A dense float64 array plus the record of the op that produced it.

    Tensors are immutable values once created: ops never modify their
    inputs, and ``data`` should not be mutated while a graph that uses
    the tensor is still alive. Gradients are written into ``grad`` by
    ``backward``.
    """

    __slots__ = ("data", "grad", "op", "inputs", "_backward", "name")

    def __init__(self, data, op: str = "leaf", inputs: Sequence["Tensor"] = (),
                 name: str | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.op = op
        self.inputs = tuple(inputs)
        self._backward = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        label = self.name or self.op
        return f"Tensor({label}, shape={self.data.shape})"


def tensor(data, name: str | None = None) -> Tensor:
    """Wrap raw data as a leaf tensor."""
    return Tensor(data, name=name)


def topo_order(root: Tensor) -> list[Tensor]:
    """All nodes reachable from ``root``, inputs before consumers."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for inp in node.inputs:
            if id(inp) not in seen:
                stack.append((inp, False))
    return order


def backward(loss: Tensor) -> list[Tensor]:
    """Accumulate d(loss)/d(node) into ``grad`` for every reachable node.

    The loss must be scalar. Existing grads on reachable nodes are reset
    first, so repeated calls do not leak state between graphs. Returns
    the topological order that was walked (leaves first).
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order = topo_order(loss)
    for node in order:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward(node.grad)
    return order


# ---------------------------------------------------------------------------
# ops
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(f"matmul needs matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} vs {b.shape}")
    out = Tensor(a.data @ b.data, op="matmul", inputs=(a, b))

    def _bwd(g):
        a.grad += g @ b.data.T
        b.grad += a.data.T @ g

    out._backward = _bwd
    return out


def transpose(a: Tensor) -> Tensor:
    out = Tensor(a.data.T, op="transpose", inputs=(a,))

    def _bwd(g):
        a.grad += g.T

    out._backward = _bwd
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also accepts a 1-D bias broadcast over rows."""
    if a.shape == b.shape:
        broadcast = False
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        broadcast = True
    else:
        raise ShapeError(f"add shapes incompatible: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data, op="add", inputs=(a, b))

    def _bwd(g):
        a.grad += g
        b.grad += g.sum(axis=0) if broadcast else g

    out._backward = _bwd
    return out


def add_const(a: Tensor, c) -> Tensor:
    """Add a constant array or scalar (no gradient flows into it)."""
    c = np.asarray(c, dtype=np.float64)
    out = Tensor(a.data + c, op="add_const", inputs=(a,))
    if out.shape != a.shape:
        raise ShapeError(f"constant of shape {c.shape} broadcasts {a.shape} to {out.shape}")

    def _bwd(g):
        a.grad += g

    out._backward = _bwd
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data, op="mul", inputs=(a, b))

    def _bwd(g):
        a.grad += g * b.data
        b.grad += g * a.data

    out._backward = _bwd
    return out


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    out = Tensor(a.data * s, op="scale", inputs=(a,))

    def _bwd(g):
        a.grad += g * s

    out._backward = _bwd
    return out


def sum_all(a: Tensor) -> Tensor:
    out = Tensor(a.data.sum(), op="sum", inputs=(a,))

    def _bwd(g):
        a.grad += g

    out._backward = _bwd
    return out


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by subtracting the row max."""
    if a.data.ndim not in (1, 2):
        raise ShapeError(f"softmax_rows needs a vector or matrix, got shape {a.shape}")
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p, op="softmax_rows", inputs=(a,))

    def _bwd(g):
        a.grad += p * (g - (g * p).sum(axis=-1, keepdims=True))

    out._backward = _bwd
    return out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization to zero mean / unit variance, then affine."""
    if eps <= 0:
        raise ValueError(f"layer_norm eps must be > 0, got {eps}")
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm affine shapes {gamma.shape}/{beta.shape} do not match width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu) * inv
    out = Tensor(gamma.data * xhat + beta.data, op="layer_norm", inputs=(x, gamma, beta))

    def _bwd(g):
        reduce_axes = tuple(range(g.ndim - 1))
        gamma.grad += (g * xhat).sum(axis=reduce_axes)
        beta.grad += g.sum(axis=reduce_axes)
        dxhat = g * gamma.data
        x.grad += inv * (dxhat
                         - dxhat.mean(axis=-1, keepdims=True)
                         - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))

    out._backward = _bwd
    return out


_GELU_C = math.sqrt(2.0 / math.pi)


def gelu(x: Tensor) -> Tensor:
    """GELU activation (tanh approximation)."""
    u = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(u)
    out = Tensor(0.5 * x.data * (1.0 + t), op="gelu", inputs=(x,))

    def _bwd(g):
        du = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        x.grad += g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du)

    out._backward = _bwd
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` for the given integer ids."""
    ids = np.asarray(ids, dtype=np.intp)
    if ids.ndim != 1:
        raise ShapeError(f"embedding ids must be 1-D, got shape {ids.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range for table with {table.shape[0]} rows")
    out = Tensor(table.data[ids], op="embedding", inputs=(table,))

    def _bwd(g):
        np.add.at(table.grad, ids, g)

    out._backward = _bwd
    return out


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start:stop) of a matrix, or elements of a vector."""
    if a.data.ndim == 2:
        out = Tensor(a.data[:, start:stop], op="slice_cols", inputs=(a,))

        def _bwd(g):
            a.grad[:, start:stop] += g
    elif a.data.ndim == 1:
        out = Tensor(a.data[start:stop], op="slice_cols", inputs=(a,))

        def _bwd(g):
            a.grad[start:stop] += g
    else:
        raise ShapeError(f"slice_cols needs a vector or matrix, got shape {a.shape}")
    out._backward = _bwd
    return out


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError(f"slice_rows needs a matrix, got shape {a.shape}")
    out = Tensor(a.data[start:stop], op="slice_rows", inputs=(a,))

    def _bwd(g):
        a.grad[start:stop] += g

    out._backward = _bwd
    return out


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_cols needs at least one tensor")
    widths = [p.shape[1] for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=1),
                 op="concat_cols", inputs=parts)

    def _bwd(g):
        off = 0
        for p, w in zip(parts, widths):
            p.grad += g[:, off:off + w]
            off += w

    out._backward = _bwd
    return out


def cross_entropy(logits: Tensor, targets: np.ndarray, pad_id: int) -> Tensor:
    """Mean negative log-likelihood over non-pad target positions.

    ``logits`` is (t, vocab); ``targets`` is t token ids. Positions whose
    target equals ``pad_id`` do not contribute. An all-pad target gives a
    zero loss by definition.
    """
    targets = np.asarray(targets, dtype=np.intp)
    if logits.data.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy got logits {logits.shape} and targets {targets.shape}")
    vocab = logits.shape[1]
    bad = targets[(targets < 0) | (targets >= vocab)]
    if bad.size:
        raise IndexError(f"target id {int(bad[0])} outside vocabulary of size {vocab}")

    keep = targets != pad_id
    count = int(keep.sum())
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    if count == 0:
        loss = 0.0
    else:
        loss = -logp[np.arange(targets.size), targets][keep].mean()
    out = Tensor(np.float64(loss), op="cross_entropy", inputs=(logits,))

    def _bwd(g):
        if count == 0:
            return
        d = np.exp(logp)
        d[np.arange(targets.size), targets] -= 1.0
        d[~keep] = 0.0
        logits.grad += (float(g) / count) * d

    out._backward = _bwd
    return out
