"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Operations record themselves on the active Tape (a with-block); running
them outside a tape computes values only, which is what inference uses.
Gradients are obtained by walking the tape backwards, so tape order is
the topological order by construction. Training runs in float32; tests
build float64 graphs so finite-difference checks are tight.

Broadcasting is deliberately limited to adding a bias vector to matrix
rows; everything else requires exact shape agreement.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

VJP = Callable[[np.ndarray], list[tuple["Tensor", np.ndarray]]]


class ShapeError(ValueError):
    def __init__(self, op: str, *shapes: tuple):
        super().__init__(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


class Tensor:
    """A dense array node. Leaves carry parameters; op results carry a vjp."""

    __slots__ = ("data", "_vjp")

    def __init__(self, data, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else np.float32)
        self._vjp: VJP | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype})"


def tensor(data, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


_ACTIVE_TAPE: "Tape | None" = None


class Tape:
    """Append-only record of op results, in creation (topological) order."""

    def __init__(self):
        self.nodes: list[Tensor] = []

    def __enter__(self) -> "Tape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise RuntimeError("a tape is already recording")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None
        return False

    def gradients(self, loss: Tensor, leaves: Sequence[Tensor]) -> list[np.ndarray]:
        """Gradient of a scalar loss w.r.t. each requested leaf tensor."""
        table = backward(self, loss)
        return [
            table.get(leaf, np.zeros_like(leaf.data)) for leaf in leaves
        ]


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Walk the tape in reverse, accumulating gradients across fan-out.

    Returns a table mapping every reached leaf tensor to its gradient.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be scalar, got shape {loss.data.shape}")
    grads: dict[Tensor, np.ndarray] = {loss: np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(node, None)
        if g is None or node._vjp is None:
            continue
        for parent, parent_grad in node._vjp(g):
            if parent in grads:
                grads[parent] = grads[parent] + parent_grad
            else:
                grads[parent] = parent_grad
    return grads


def _record(data: np.ndarray, vjp: VJP) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    if _ACTIVE_TAPE is not None:
        out._vjp = vjp
        _ACTIVE_TAPE.nodes.append(out)
    else:
        out._vjp = None
    return out


def _check_same_dtype(op: str, *tensors: Tensor):
    dtypes = {t.data.dtype for t in tensors}
    if len(dtypes) > 1:
        raise ShapeError(op, *[t.data.dtype for t in tensors])


# ---------------------------------------------------------------------------
# forward ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError("matmul", a.data.shape, b.data.shape)
    _check_same_dtype("matmul", a, b)
    out = a.data @ b.data

    def vjp(g):
        return [(a, g @ b.data.T), (b, a.data.T @ g)]

    return _record(out, vjp)


def bmm(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix multiply: (B,n,m) @ (B,m,k) -> (B,n,k)."""
    if (
        a.data.ndim != 3
        or b.data.ndim != 3
        or a.data.shape[0] != b.data.shape[0]
        or a.data.shape[2] != b.data.shape[1]
    ):
        raise ShapeError("bmm", a.data.shape, b.data.shape)
    _check_same_dtype("bmm", a, b)
    out = a.data @ b.data

    def vjp(g):
        return [(a, g @ b.data.swapaxes(1, 2)), (b, a.data.swapaxes(1, 2) @ g)]

    return _record(out, vjp)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also allows adding a bias vector to matrix rows."""
    _check_same_dtype("add", a, b)
    if a.data.shape == b.data.shape:
        out = a.data + b.data

        def vjp(g):
            return [(a, g), (b, g)]

        return _record(out, vjp)
    if a.data.ndim == 2 and b.data.ndim == 1 and a.data.shape[1] == b.data.shape[0]:
        out = a.data + b.data

        def vjp(g):
            return [(a, g), (b, g.sum(axis=0))]

        return _record(out, vjp)
    raise ShapeError("add", a.data.shape, b.data.shape)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ShapeError("mul", a.data.shape, b.data.shape)
    _check_same_dtype("mul", a, b)
    out = a.data * b.data

    def vjp(g):
        return [(a, g * b.data), (b, g * a.data)]

    return _record(out, vjp)


def scale(a: Tensor, factor: float) -> Tensor:
    factor = a.data.dtype.type(factor)
    out = a.data * factor

    def vjp(g):
        return [(a, g * factor)]

    return _record(out, vjp)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("concat", ())
    _check_same_dtype("concat", *tensors)
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *[t.data.shape for t in tensors]) from None
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    parents = list(tensors)

    def vjp(g):
        pieces = []
        for t, start, stop in zip(parents, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            pieces.append((t, g[tuple(index)]))
        return pieces

    return _record(out, vjp)


def stack(tensors: Sequence[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise ShapeError("stack", ())
    _check_same_dtype("stack", *tensors)
    shapes = {t.data.shape for t in tensors}
    if len(shapes) > 1:
        raise ShapeError("stack", *shapes)
    out = np.stack([t.data for t in tensors], axis=axis)
    parents = list(tensors)

    def vjp(g):
        slabs = np.moveaxis(g, axis, 0)
        return [(t, slabs[i]) for i, t in enumerate(parents)]

    return _record(out, vjp)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    if math.prod(shape) != a.data.size:
        raise ShapeError("reshape", a.data.shape, shape)
    original = a.data.shape
    out = a.data.reshape(shape)

    def vjp(g):
        return [(a, g.reshape(original))]

    return _record(out, vjp)


def sigmoid(a: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        out = 1.0 / (1.0 + np.exp(-a.data))

    def vjp(g):
        return [(a, g * out * (1.0 - out))]

    return _record(out.astype(a.data.dtype, copy=False), vjp)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)

    def vjp(g):
        return [(a, g * (1.0 - out * out))]

    return _record(out, vjp)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax (max-shifted) along one axis."""
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    exp = np.exp(shifted)
    out = exp / exp.sum(axis=axis, keepdims=True)

    def vjp(g):
        inner = (g * out).sum(axis=axis, keepdims=True)
        return [(a, out * (g - inner))]

    return _record(out, vjp)


def embedding_gather(table: Tensor, ids) -> Tensor:
    """Select rows of an embedding table; grad scatters back with np.add.at."""
    ids = np.asarray(ids, dtype=np.int64)
    if table.data.ndim != 2:
        raise ShapeError("embedding_gather", table.data.shape)
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding_gather: id out of range 0..{table.data.shape[0] - 1}"
        )
    out = table.data[ids]

    def vjp(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, table.data.shape[1]))
        return [(table, full)]

    return _record(out, vjp)


def cross_entropy(logits: Tensor, target_ids) -> Tensor:
    """Per-row negative log-likelihood via a stable log-sum-exp.

    Accepts a single logit vector with an integer target, or a (B, V)
    batch with a length-B id vector; the batched form returns the
    per-row loss vector.
    """
    single = logits.data.ndim == 1
    rows = logits.data[None, :] if single else logits.data
    if rows.ndim != 2:
        raise ShapeError("cross_entropy", logits.data.shape)
    targets = np.asarray(target_ids, dtype=np.int64).reshape(-1)
    if targets.shape[0] != rows.shape[0]:
        raise ShapeError("cross_entropy", logits.data.shape, targets.shape)
    if targets.size and (targets.min() < 0 or targets.max() >= rows.shape[1]):
        raise IndexError("cross_entropy: target id out of range")
    shifted = rows - rows.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(rows.shape[0]), targets]
    losses = log_z - picked
    out = losses[0].reshape(()) if single else losses

    def vjp(g):
        probs = np.exp(shifted)
        probs /= probs.sum(axis=1, keepdims=True)
        probs[np.arange(rows.shape[0]), targets] -= 1.0
        grad = probs * np.reshape(g, (-1, 1))
        return [(logits, grad[0] if single else grad)]

    return _record(out.astype(logits.data.dtype, copy=False), vjp)


def sum_all(a: Tensor) -> Tensor:
    out = np.asarray(a.data.sum(), dtype=a.data.dtype)

    def vjp(g):
        return [(a, np.full(a.data.shape, g, dtype=a.data.dtype))]

    return _record(out, vjp)


# ---------------------------------------------------------------------------
# optimization


def clip_gradients(grads: Sequence[np.ndarray], max_norm: float) -> float:
    """Scale gradients in place so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if total > max_norm and total > 0.0:
        factor = max_norm / total
        for g in grads:
            g *= factor
    return total


class Adam:
    """Adam with bias correction; updates parameter data in place."""

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, params: Sequence[Tensor], grads: Sequence[np.ndarray]):
        if len(params) != len(grads):
            raise ValueError("params and grads differ in length")
        if self._m is None:
            self._m = [np.zeros_like(p.data) for p in params]
            self._v = [np.zeros_like(p.data) for p in params]
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1**self.step_count
        correction2 = 1.0 - b2**self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            if g.shape != p.data.shape:
                raise ShapeError("adam_step", g.shape, p.data.shape)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            m_hat = m / correction1
            v_hat = v / correction2
            p.data -= (self.learning_rate * m_hat / (np.sqrt(v_hat) + self.epsilon)).astype(
                p.data.dtype, copy=False
            )


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: Adam) -> Adam:
    """Apply one Adam update; params are modified in place, state advances."""
    state.step(params, grads)
    return state
