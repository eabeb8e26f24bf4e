"""Minimal reverse-mode differentiation over dense 2-D float64 matrices.

A :class:`Graph` is a tape: every operation appends one node, and
:meth:`Graph.backward` walks the tape in exact reverse append order.  There
is no broadcasting; every shape coercion is explicit so each backward rule
stays easy to audit.

Usage::

    g = Graph()
    w = Tensor(np.eye(2), requires_grad=True)
    y = g.matmul(x, w)
    loss, probs = g.softmax_xent(y, labels)
    g.backward(loss)
    w.grad
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, DataError, DimensionError, UsageError

__all__ = [
    "Tensor",
    "Graph",
    "Node",
    "GradCheckReport",
    "grad_check",
    "softmax",
    "BACKWARD",
]


def _as_matrix(data) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"tensors are 2-D, got array with shape {arr.shape}")
    return np.ascontiguousarray(arr)


class Tensor:
    """Dense row-major matrix, optionally carrying a gradient buffer."""

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = _as_matrix(data)
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(self.data) if self.requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}({self.rows}x{self.cols}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    ctx: dict = field(default_factory=dict)


def _shape_str(t: Tensor) -> str:
    return f"{t.rows}x{t.cols}"


def _require_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {_shape_str(a)} and {_shape_str(b)} differ")


# Backward rules: (node, upstream gradient) -> one gradient per input.
# Kept in a module-level table so each rule can be inspected (or broken on
# purpose by mutation tests) in isolation.

def _matmul_backward(node: Node, g: np.ndarray):
    a, b = node.inputs
    return g @ b.data.T, a.data.T @ g


def _transpose_backward(node: Node, g: np.ndarray):
    return (g.T,)


def _hadamard_backward(node: Node, g: np.ndarray):
    a, b = node.inputs
    return g * b.data, g * a.data


def _add_backward(node: Node, g: np.ndarray):
    return g, g


def _scale_backward(node: Node, g: np.ndarray):
    return (g * node.ctx["c"],)


def _concat_cols_backward(node: Node, g: np.ndarray):
    p = node.ctx["split"]
    return g[:, :p], g[:, p:]


def _sigmoid_backward(node: Node, g: np.ndarray):
    s = node.output.data
    return (g * s * (1.0 - s),)


def _tanh_backward(node: Node, g: np.ndarray):
    t = node.output.data
    return (g * (1.0 - t * t),)


def _softmax_xent_backward(node: Node, g: np.ndarray):
    probs, onehot = node.ctx["probs"], node.ctx["onehot"]
    m = probs.shape[0]
    return (g[0, 0] * (probs - onehot) / m,)


BACKWARD: dict[str, Callable] = {
    "matmul": _matmul_backward,
    "transpose": _transpose_backward,
    "hadamard": _hadamard_backward,
    "add": _add_backward,
    "scale": _scale_backward,
    "concat_cols": _concat_cols_backward,
    "sigmoid": _sigmoid_backward,
    "tanh": _tanh_backward,
    "softmax_xent": _softmax_xent_backward,
}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_UNARY = {"sigmoid": _sigmoid, "tanh": np.tanh}


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with row-max subtraction."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, m: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1 or y.shape[0] != m:
        raise DimensionError(f"expected {m} labels, got shape {y.shape}")
    if not np.all((y == 0) | (y == 1)):
        bad = y[~((y == 0) | (y == 1))][0]
        raise DataError(f"label {bad!r} is outside {{0,1}}")
    return y.astype(np.int64)


class Graph:
    """Tape of operations recorded during one forward pass."""

    def __init__(self) -> None:
        self.nodes: list[Node] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def _record(self, op: str, inputs: tuple[Tensor, ...], data: np.ndarray, **ctx) -> Tensor:
        out = Tensor(data, requires_grad=any(t.requires_grad for t in inputs))
        self.nodes.append(Node(op, inputs, out, ctx))
        return out

    def matmul(self, a: Tensor, b: Tensor) -> Tensor:
        if a.cols != b.rows:
            raise DimensionError(f"matmul: shapes {_shape_str(a)} and {_shape_str(b)} do not chain")
        return self._record("matmul", (a, b), a.data @ b.data)

    def transpose(self, a: Tensor) -> Tensor:
        return self._record("transpose", (a,), a.data.T.copy())

    def hadamard(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("hadamard", a, b)
        return self._record("hadamard", (a, b), a.data * b.data)

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        _require_same_shape("add", a, b)
        return self._record("add", (a, b), a.data + b.data)

    def scale(self, a: Tensor, c: float) -> Tensor:
        c = float(c)
        if not np.isfinite(c):
            raise ConfigError(f"scale factor must be finite, got {c}")
        return self._record("scale", (a,), a.data * c, c=c)

    def concat_cols(self, a: Tensor, b: Tensor) -> Tensor:
        if a.rows != b.rows:
            raise DimensionError(f"concat_cols: row counts {a.rows} and {b.rows} differ")
        return self._record("concat_cols", (a, b), np.hstack([a.data, b.data]), split=a.cols)

    def apply_unary(self, a: Tensor, fn: str) -> Tensor:
        try:
            f = _UNARY[fn]
        except KeyError:
            raise ConfigError(f"unknown unary function {fn!r}; expected one of {sorted(_UNARY)}") from None
        return self._record(fn, (a,), f(a.data))

    def sigmoid(self, a: Tensor) -> Tensor:
        return self.apply_unary(a, "sigmoid")

    def tanh(self, a: Tensor) -> Tensor:
        return self.apply_unary(a, "tanh")

    def softmax_xent(self, logits: Tensor, labels) -> tuple[Tensor, Tensor]:
        """Mean cross-entropy of row-wise softmax against binary labels.

        Returns ``(loss, probs)``; ``loss`` is a 1x1 tape tensor, ``probs`` a
        detached m x 2 tensor.
        """
        if logits.cols != 2:
            raise DimensionError(f"softmax_xent: expected m x 2 logits, got {_shape_str(logits)}")
        m = logits.rows
        y = _check_labels(labels, m)
        z = logits.data - logits.data.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=1, keepdims=True))
        log_probs = z - log_norm
        probs = np.exp(log_probs)
        onehot = np.zeros_like(probs)
        onehot[np.arange(m), y] = 1.0
        loss = -log_probs[np.arange(m), y].sum() / m
        out = self._record("softmax_xent", (logits,), np.array([[loss]]), probs=probs, onehot=onehot)
        return out, Tensor(probs)

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into ``t.grad`` for every tensor requiring grad."""
        if loss.shape != (1, 1):
            raise UsageError(f"backward needs a scalar (1x1) loss, got {_shape_str(loss)}")
        if not loss.requires_grad:
            return
        loss.grad[0, 0] = 1.0
        for node in reversed(self.nodes):
            out = node.output
            if not out.requires_grad:
                continue
            grads = BACKWARD[node.op](node, out.grad)
            for t, gt in zip(node.inputs, grads):
                if t.requires_grad:
                    t.grad += gt


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float
    worst: tuple[str, int, int] | None = None

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tol


def _named(params) -> list[tuple[str, Tensor]]:
    if hasattr(params, "named_tensors"):
        return list(params.named_tensors())
    if isinstance(params, dict):
        return list(params.items())
    return [(t.name or f"t{i}", t) for i, t in enumerate(params)]


def grad_check(
    build: Callable[[Graph], Tensor],
    params,
    step: float = 1e-6,
    tol: float = 1e-4,
    max_entries: int = 500,
    seed: int = 0,
    floor: float = 1e-5,
) -> GradCheckReport:
    """Compare analytic gradients with central finite differences.

    ``build`` maps a fresh :class:`Graph` to a scalar loss. ``params`` is a
    ModelParams, a name->Tensor dict or a sequence of tensors. Above
    ``max_entries`` trainable entries a seeded random subsample is checked.
    Relative error is ``|a - n| / max(|a|, |n|, floor)``; the floor keeps
    finite-difference roundoff (about ``eps * |loss| / step``, ~1e-10 at the
    default step) from dominating entries whose true gradient is ~1e-6.
    """
    if step <= 0:
        raise ConfigError(f"step must be positive, got {step}")
    named = [(n, t) for n, t in _named(params) if t.requires_grad]
    for _, t in named:
        t.zero_grad()
    g = Graph()
    loss = build(g)
    if loss.shape != (1, 1):
        raise UsageError(f"grad_check needs a scalar loss, got {_shape_str(loss)}")
    g.backward(loss)

    entries = [(k, i, j) for k, (_, t) in enumerate(named) for i in range(t.rows) for j in range(t.cols)]
    if len(entries) > max_entries:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[p] for p in sorted(pick)]

    def value() -> float:
        return float(build(Graph()).data[0, 0])

    worst, max_err = None, 0.0
    for k, i, j in entries:
        name, t = named[k]
        orig = t.data[i, j]
        t.data[i, j] = orig + step
        plus = value()
        t.data[i, j] = orig - step
        minus = value()
        t.data[i, j] = orig
        numeric = (plus - minus) / (2.0 * step)
        analytic = t.grad[i, j]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        if worst is None or err > max_err:
            max_err, worst = err, (name, i, j)
    return GradCheckReport(max_rel_error=max_err, n_checked=len(entries), tol=tol, worst=worst)

