"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records a straight-line program of primitive array
operations; :meth:`Tape.backward` replays it in reverse to accumulate
exact gradients. The primitive set is deliberately tiny: enough for
small feed-forward networks, an unrolled explicit integrator, and the
loss assembly around them. There is no broadcasting beyond scaling by
a Python float; operand shapes must match exactly.

Shape conventions: scalars have shape ``()``; matrices are 2-D. The
"hinge" kind is the same max(x, 0) map as "relu" and exists so clamp
compositions read as what they are.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError, NumericError

# Primitive op kinds accepted by Tape.record.
OP_KINDS = (
    "add",
    "subtract",
    "multiply",
    "matmul",
    "relu",
    "sigmoid",
    "hinge",
    "square",
    "sum",
    "scale",
)

_UNARY = {"relu", "sigmoid", "hinge", "square", "sum", "scale"}


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Tensor:
    """Immutable array value, optionally tracked on a tape."""

    __slots__ = ("data", "node_id")

    def __init__(self, data: np.ndarray, node_id: int = -1):
        self.data = data
        self.node_id = node_id

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node={self.node_id})"


class _Node:
    __slots__ = ("kind", "parents", "value", "alpha")

    def __init__(self, kind, parents, value, alpha=None):
        self.kind = kind
        self.parents = parents
        self.value = value
        self.alpha = alpha


class Tape:
    """Single-writer record of primitive operations.

    With ``record=False`` the same arithmetic runs but nothing is
    stored, giving a fast forward-only evaluation path that is
    bit-identical to the recorded one.
    """

    def __init__(self, record: bool = True, checked: bool = True):
        self.nodes: list[_Node] = []
        self.recording = record
        self.checked = checked

    # -- construction -------------------------------------------------

    def _make(self, kind, parents, value, alpha=None) -> Tensor:
        # asarray keeps 0-d scalars 0-d (ascontiguousarray would promote them).
        value = np.asarray(value, dtype=np.float64, order="C")
        if self.checked and not np.all(np.isfinite(value)):
            raise NumericError(f"non-finite values produced by '{kind}'")
        if not self.recording:
            return Tensor(value)
        self.nodes.append(_Node(kind, parents, value, alpha))
        return Tensor(value, len(self.nodes) - 1)

    def leaf(self, value) -> Tensor:
        """Enter a constant or parameter array onto the tape."""
        return self._make("leaf", (), np.asarray(value, dtype=np.float64))

    def record(self, kind: str, *inputs: Tensor, scale: float | None = None) -> Tensor:
        """Apply a primitive op and append the result to the tape.

        ``scale`` is only meaningful (and required) for kind="scale".
        """
        if kind not in OP_KINDS:
            raise ContractError(f"unknown op kind '{kind}'")
        expected = 1 if kind in _UNARY else 2
        if len(inputs) != expected:
            raise ContractError(f"'{kind}' takes {expected} input(s), got {len(inputs)}")
        a = inputs[0]
        if kind == "scale":
            if scale is None:
                raise ContractError("'scale' requires a scale= constant")
            value = a.data * float(scale)
        elif kind in ("relu", "hinge"):
            value = np.maximum(a.data, 0.0)
        elif kind == "sigmoid":
            value = _sigmoid(a.data)
        elif kind == "square":
            value = a.data * a.data
        elif kind == "sum":
            value = np.asarray(np.sum(a.data))
        else:
            b = inputs[1]
            if kind == "matmul":
                if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
                    raise DimensionError(
                        f"matmul shapes do not conform: {a.shape} @ {b.shape}"
                    )
                value = a.data @ b.data
            else:
                if a.shape != b.shape:
                    raise DimensionError(
                        f"'{kind}' requires equal shapes, got {a.shape} vs {b.shape}"
                    )
                if kind == "add":
                    value = a.data + b.data
                elif kind == "subtract":
                    value = a.data - b.data
                else:  # multiply
                    value = a.data * b.data
        parents = tuple(t.node_id for t in inputs)
        if self.recording and any(p < 0 for p in parents):
            raise ContractError("inputs must be tensors tracked on this tape")
        return self._make(kind, parents, value, alpha=scale)

    # -- convenience wrappers ------------------------------------------

    def add(self, a, b):
        return self.record("add", a, b)

    def sub(self, a, b):
        return self.record("subtract", a, b)

    def mul(self, a, b):
        return self.record("multiply", a, b)

    def matmul(self, a, b):
        return self.record("matmul", a, b)

    def relu(self, a):
        return self.record("relu", a)

    def sigmoid(self, a):
        return self.record("sigmoid", a)

    def hinge(self, a):
        return self.record("hinge", a)

    def square(self, a):
        return self.record("square", a)

    def sum(self, a):
        return self.record("sum", a)

    def scale(self, a, alpha: float):
        return self.record("scale", a, scale=alpha)

    # -- reverse sweep -------------------------------------------------

    def backward(self, output: Tensor) -> dict[int, np.ndarray]:
        """Gradients of a scalar output w.r.t. every leaf on the tape."""
        if output.shape != ():
            raise ContractError(f"backward requires a scalar output, got shape {output.shape}")
        return self.backward_from({output.node_id: np.asarray(1.0)})

    def backward_from(self, seeds: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
        """Reverse sweep from externally supplied output adjoints.

        ``seeds`` maps node ids to adjoint arrays of the node's shape.
        Used to chain gradients that were computed outside the tape
        (e.g. through an optimization-layer sensitivity solve).
        """
        if not self.recording:
            raise ContractError("cannot run backward on a non-recording tape")
        adjoint: list[np.ndarray | None] = [None] * len(self.nodes)
        for node_id, g in seeds.items():
            if node_id < 0 or node_id >= len(self.nodes):
                raise ContractError(f"seed node id {node_id} is not on the tape")
            g = np.asarray(g, dtype=np.float64)
            if g.shape != self.nodes[node_id].value.shape:
                raise DimensionError(
                    f"seed gradient shape {g.shape} does not match node shape "
                    f"{self.nodes[node_id].value.shape}"
                )
            adjoint[node_id] = g.copy() if adjoint[node_id] is None else adjoint[node_id] + g

        for nid in range(len(self.nodes) - 1, -1, -1):
            g = adjoint[nid]
            if g is None:
                continue
            node = self.nodes[nid]
            if node.kind == "leaf":
                continue
            contribs = self._local_grads(node, g)
            for pid, pg in zip(node.parents, contribs):
                if adjoint[pid] is None:
                    adjoint[pid] = pg.copy()
                else:
                    adjoint[pid] += pg

        grads: dict[int, np.ndarray] = {}
        for nid, node in enumerate(self.nodes):
            if node.kind == "leaf":
                grads[nid] = (
                    adjoint[nid] if adjoint[nid] is not None else np.zeros_like(node.value)
                )
        return grads

    def _local_grads(self, node: _Node, g: np.ndarray):
        kind = node.kind
        if kind == "add":
            return (g, g)
        if kind == "subtract":
            return (g, -g)
        if kind == "multiply":
            a, b = (self.nodes[p].value for p in node.parents)
            return (g * b, g * a)
        if kind == "matmul":
            a, b = (self.nodes[p].value for p in node.parents)
            return (g @ b.T, a.T @ g)
        if kind in ("relu", "hinge"):
            a = self.nodes[node.parents[0]].value
            # Subgradient at the kink is fixed to 0.
            return (g * (a > 0.0),)
        if kind == "sigmoid":
            s = node.value
            return (g * s * (1.0 - s),)
        if kind == "square":
            a = self.nodes[node.parents[0]].value
            return (g * 2.0 * a,)
        if kind == "sum":
            a = self.nodes[node.parents[0]].value
            return (np.broadcast_to(g, a.shape).copy(),)
        if kind == "scale":
            return (g * node.alpha,)
        raise ContractError(f"no gradient rule for '{kind}'")


def check_gradient(func, point: np.ndarray, step: float = 1e-5) -> float:
    """Compare tape gradients against central finite differences.

    ``func(tape, x)`` must build and return a scalar Tensor from the
    single input tensor ``x``. Returns the maximum over components of
    ``|a - b| / max(1, |a|, |b|)`` where ``a`` is the tape gradient and
    ``b`` the finite-difference estimate.
    """
    if step <= 0:
        raise ContractError("step must be positive")
    point = np.asarray(point, dtype=np.float64)

    tape = Tape()
    x = tape.leaf(point)
    out = func(tape, x)
    if out.shape != ():
        raise ContractError("check_gradient requires a scalar-valued function")
    analytic = tape.backward(out)[x.node_id]

    def value_at(p: np.ndarray) -> float:
        t = Tape(record=False)
        return func(t, t.leaf(p)).item()

    worst = 0.0
    flat = point.ravel()
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = step
        bump = bump.reshape(point.shape)
        fd = (value_at(point + bump) - value_at(point - bump)) / (2.0 * step)
        a = float(analytic.ravel()[i])
        err = abs(a - fd) / max(1.0, abs(a), abs(fd))
        worst = max(worst, err)
    return worst
