"""Dense float64 tensors with a reverse-mode differentiation tape.

Operations record themselves on the tape that is active in the current
context (see ``Tape``). Outside a tape they only compute values. Each tape
belongs to one thread of execution; tensors produced by a finished pass can
be handed to other threads freely.
"""

import contextvars
import logging
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


class DimensionError(ValueError):
    """Raised when operand shapes violate an operation's shape contract."""
    pass


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or infinite values."""
    pass


class ContractError(RuntimeError):
    """Raised when backward is called outside its contract."""
    pass


class LabelIndexError(IndexError):
    """Raised when a class index falls outside [0, C)."""
    pass


BackwardRule = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_ACTIVE_TAPE: contextvars.ContextVar["Tape | None"] = contextvars.ContextVar(
    "acedg_active_tape", default=None
)


def _check_finite(values: np.ndarray, where: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(f"{where} produced non-finite values")


class Tensor:
    """A dense float64 array plus its gradient and tape position.

    ``node_id`` is the tensor's position in the tape it was last recorded on;
    it is meaningless once that tape is discarded.
    """

    __slots__ = ("values", "grad", "requires_grad", "node_id", "_tape")

    def __init__(self, values: object, requires_grad: bool = False) -> None:
        array = np.array(values, dtype=np.float64)
        _check_finite(array, "tensor construction")
        self.values: np.ndarray = array
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.node_id: int | None = None
        self._tape: Tape | None = None

    @classmethod
    def _wrap(cls, values: np.ndarray) -> "Tensor":
        tensor = cls.__new__(cls)
        tensor.values = values
        tensor.grad = None
        tensor.requires_grad = False
        tensor.node_id = None
        tensor._tape = None
        return tensor

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def size(self) -> int:
        return int(self.values.size)

    def item(self) -> float:
        if self.values.size != 1:
            raise DimensionError(f"item() needs a single value, got shape {self.shape}")
        return float(self.values.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor | float") -> "Tensor":
        return add(self, other)

    def __radd__(self, other: float) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: "Tensor | float") -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: float) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: "Tensor | float") -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: float) -> "Tensor":
        return mul(other, self)

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


def tensor(values: object) -> Tensor:
    """Create a constant (non-differentiable) tensor."""
    return Tensor(values, requires_grad=False)


def parameter(values: object) -> Tensor:
    """Create a leaf tensor that receives gradients."""
    return Tensor(values, requires_grad=True)


def ones(shape: Sequence[int]) -> Tensor:
    return Tensor._wrap(np.ones(tuple(shape), dtype=np.float64))


@dataclass(frozen=True)
class TapeRecord:
    """One recorded operation: input node ids (-1 for constants), output id, rule."""

    name: str
    inputs: tuple[int, ...]
    output: int
    backward: BackwardRule


class Tape:
    """Ordered record of operations for one forward pass.

    Use as a context manager; operations executed inside the ``with`` block
    are recorded. Records are appended in execution order, so every record's
    inputs precede it.
    """

    def __init__(self) -> None:
        self.records: list[TapeRecord] = []
        self._nodes: list[Tensor] = []
        self._produced: set[int] = set()
        self._token: contextvars.Token | None = None

    def __enter__(self) -> "Tape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, *exc_info: object) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.records)

    def _node(self, t: Tensor) -> int:
        if t._tape is not self:
            t._tape = self
            t.node_id = len(self._nodes)
            self._nodes.append(t)
        assert t.node_id is not None
        return t.node_id

    def _record(self, name: str, inputs: Sequence[Tensor], output: Tensor, rule: BackwardRule) -> None:
        ids = tuple(self._node(t) if t.requires_grad else -1 for t in inputs)
        output.requires_grad = True
        out_id = self._node(output)
        self._produced.add(out_id)
        self.records.append(TapeRecord(name, ids, out_id, rule))

    @property
    def leaves(self) -> list[Tensor]:
        """Tensors requiring gradients that no recorded operation produced."""
        return [
            t for i, t in enumerate(self._nodes)
            if t.requires_grad and i not in self._produced
        ]

    def backward(self, loss: Tensor) -> None:
        """Replay backward rules in reverse order, populating leaf gradients.

        Every leaf seen by this tape gets ``grad`` assigned: the accumulated
        gradient if the loss reaches it, zeros otherwise. Previous ``grad``
        values are overwritten.

        Raises:
            ContractError: If the loss is not a scalar, was not recorded on
                this tape, or the tape is empty
        """
        if loss.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.records:
            raise ContractError("backward called on an empty tape")
        if loss._tape is not self or loss.node_id is None:
            raise ContractError("loss was not recorded on this tape")

        grads: list[np.ndarray | None] = [None] * len(self._nodes)
        grads[loss.node_id] = np.ones_like(loss.values)

        for record in reversed(self.records):
            upstream = grads[record.output]
            if upstream is None:
                continue
            for node_id, contribution in zip(record.inputs, record.backward(upstream)):
                if node_id < 0 or contribution is None:
                    continue
                current = grads[node_id]
                grads[node_id] = contribution if current is None else current + contribution

        for i, node in enumerate(self._nodes):
            if not node.requires_grad or i in self._produced:
                continue
            g = grads[i]
            if g is None:
                node.grad = np.zeros_like(node.values)
            else:
                _check_finite(g, "backward")
                node.grad = np.array(g, dtype=np.float64).reshape(node.values.shape)


def backward(loss: Tensor) -> None:
    """Backpropagate from a scalar loss through the tape it was recorded on.

    Raises:
        ContractError: If the loss is non-scalar or carries no tape
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._tape is None:
        raise ContractError("loss carries no differentiation record")
    loss._tape.backward(loss)


def active_tape() -> "Tape | None":
    return _ACTIVE_TAPE.get()


@contextmanager
def no_tape() -> Iterator[None]:
    """Evaluate operations without recording them."""
    token = _ACTIVE_TAPE.set(None)
    try:
        yield
    finally:
        _ACTIVE_TAPE.reset(token)


def _emit(name: str, inputs: Sequence[Tensor], values: np.ndarray, rule: BackwardRule) -> Tensor:
    _check_finite(values, name)
    out = Tensor._wrap(values)
    tape = _ACTIVE_TAPE.get()
    if tape is not None and any(t.requires_grad for t in inputs):
        tape._record(name, inputs, out, rule)
    return out


def _as_tensor(x: "Tensor | float | int | np.ndarray") -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _check_broadcast(a: Tensor, b: Tensor, name: str) -> None:
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise DimensionError(f"{name}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    # only scalar broadcasting exists, so the target is a scalar
    return np.asarray(grad.sum()).reshape(shape)


# ---------------------------------------------------------------------------
# Linear algebra
# ---------------------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a (m x k) and b (k x n).

    Raises:
        DimensionError: If either operand is not 2-D or inner sizes differ
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.values, b.values

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return g @ bv.T, av.T @ g

    return _emit("matmul", (a, b), av @ bv, rule)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map x @ weight.T + bias for x (m x in), weight (out x in), bias (out,)."""
    if (
        x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1
        or x.shape[1] != weight.shape[1] or bias.shape[0] != weight.shape[0]
    ):
        raise DimensionError(
            f"linear: incompatible shapes x={x.shape} weight={weight.shape} bias={bias.shape}"
        )
    xv, wv = x.values, weight.values

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return g @ wv, g.T @ xv, g.sum(axis=0)

    return _emit("linear", (x, weight, bias), xv @ wv.T + bias.values, rule)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    target = tuple(int(s) for s in shape)
    if int(np.prod(target, dtype=np.int64)) != a.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {target}")
    source = a.shape
    return _emit("reshape", (a,), a.values.reshape(target).copy(), lambda g: (g.reshape(source),))


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along the first axis."""
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    trailing = parts[0].shape[1:]
    if any(p.ndim == 0 or p.shape[1:] != trailing for p in parts):
        raise DimensionError("concat: trailing shapes differ")
    bounds = np.cumsum([0] + [p.shape[0] for p in parts])

    def rule(g: np.ndarray) -> tuple[np.ndarray, ...]:
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(parts)))

    return _emit("concat", tuple(parts), np.concatenate([p.values for p in parts], axis=0), rule)


def take_rows(a: Tensor, index: Sequence[int] | np.ndarray) -> Tensor:
    """Gather entries of the first axis; repeated indices accumulate gradient."""
    idx = np.asarray(index, dtype=np.int64)
    if a.ndim == 0:
        raise DimensionError("take_rows needs at least a 1-D tensor")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[0]):
        raise DimensionError(f"take_rows: index out of range for first axis {a.shape[0]}")
    source = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros(source, dtype=np.float64)
        np.add.at(out, idx, g)
        return (out,)

    return _emit("take_rows", (a,), a.values[idx], rule)


def pick(a: Tensor, columns: Sequence[int] | np.ndarray) -> Tensor:
    """Select one column per row of a 2-D tensor, giving a 1-D tensor."""
    cols = np.asarray(columns, dtype=np.int64)
    if a.ndim != 2 or cols.shape != (a.shape[0],):
        raise DimensionError(f"pick: need one column per row of {a.shape}, got {cols.shape}")
    if cols.size and (cols.min() < 0 or cols.max() >= a.shape[1]):
        raise DimensionError(f"pick: column index out of range for width {a.shape[1]}")
    rows = np.arange(a.shape[0])
    source = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        out = np.zeros(source, dtype=np.float64)
        out[rows, cols] = g
        return (out,)

    return _emit("pick", (a,), a.values[rows, cols], rule)


# ---------------------------------------------------------------------------
# Elementwise
# ---------------------------------------------------------------------------

def add(a: "Tensor | float", b: "Tensor | float") -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    _check_broadcast(ta, tb, "add")
    sa, sb = ta.shape, tb.shape
    return _emit("add", (ta, tb), ta.values + tb.values,
                 lambda g: (_reduce_to(g, sa), _reduce_to(g, sb)))


def sub(a: "Tensor | float", b: "Tensor | float") -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    _check_broadcast(ta, tb, "sub")
    sa, sb = ta.shape, tb.shape
    return _emit("sub", (ta, tb), ta.values - tb.values,
                 lambda g: (_reduce_to(g, sa), _reduce_to(-g, sb)))


def mul(a: "Tensor | float", b: "Tensor | float") -> Tensor:
    ta, tb = _as_tensor(a), _as_tensor(b)
    _check_broadcast(ta, tb, "mul")
    av, bv = ta.values, tb.values

    def rule(g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return _reduce_to(g * bv, av.shape), _reduce_to(g * av, bv.shape)

    return _emit("mul", (ta, tb), av * bv, rule)


def scale(a: Tensor, k: float) -> Tensor:
    factor = float(k)
    return _emit("scale", (a,), a.values * factor, lambda g: (g * factor,))


def relu(a: Tensor) -> Tensor:
    """max(a, 0) elementwise; derivative at 0 is 0."""
    mask = a.values > 0
    return _emit("relu", (a,), np.where(mask, a.values, 0.0), lambda g: (g * mask,))


def hinge(a: Tensor) -> Tensor:
    """Max-with-zero for hinge losses; subgradient at the kink is 0."""
    mask = a.values > 0
    return _emit("max_with_zero", (a,), np.where(mask, a.values, 0.0), lambda g: (g * mask,))


def absolute(a: Tensor) -> Tensor:
    """|a| elementwise; subgradient at 0 is 0."""
    sign = np.sign(a.values)
    return _emit("abs", (a,), np.abs(a.values), lambda g: (g * sign,))


ELEMENTWISE_OPS: dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "relu": relu,
    "abs": absolute,
    "scale": scale,
    "max-with-zero": hinge,
}


def elementwise(op: str, *args: object) -> Tensor:
    """Dispatch an elementwise operation by name.

    Raises:
        KeyError: If the operation name is unknown
    """
    try:
        fn = ELEMENTWISE_OPS[op]
    except KeyError:
        raise KeyError(f"Unknown elementwise operation: {op}") from None
    return fn(*args)


# ---------------------------------------------------------------------------
# Reductions and losses
# ---------------------------------------------------------------------------

def total(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    source = a.shape
    return _emit("sum", (a,), np.asarray(a.values.sum()),
                 lambda g: (np.broadcast_to(g, source).copy(),))


def sum_axis(a: Tensor, axis: int) -> Tensor:
    """Sum a 2-D tensor along one axis."""
    if a.ndim != 2 or axis not in (0, 1):
        raise DimensionError(f"sum_axis needs a 2-D tensor and axis 0 or 1, got {a.shape}, {axis}")
    source = a.shape

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        return (np.broadcast_to(np.expand_dims(g, axis), source).copy(),)

    return _emit("sum_axis", (a,), a.values.sum(axis=axis), rule)


def softmax_cross_entropy(logits: Tensor, labels: Sequence[int] | np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits).

    Raises:
        DimensionError: If logits are not b x C with one label per row
        LabelIndexError: If a label lies outside [0, C)
    """
    y = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or y.shape != (logits.shape[0],) or logits.shape[0] == 0:
        raise DimensionError(f"softmax_cross_entropy: logits {logits.shape} vs labels {y.shape}")
    batch, classes = logits.shape
    if y.min() < 0 or y.max() >= classes:
        raise LabelIndexError(f"labels must lie in [0, {classes})")

    shifted = logits.values - logits.values.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    normalizer = exp.sum(axis=1, keepdims=True)
    log_probs = shifted - np.log(normalizer)
    rows = np.arange(batch)
    loss = -log_probs[rows, y].mean()

    def rule(g: np.ndarray) -> tuple[np.ndarray]:
        probs = exp / normalizer
        probs[rows, y] -= 1.0
        return (probs * (g / batch),)

    return _emit("softmax_cross_entropy", (logits,), np.asarray(loss), rule)
