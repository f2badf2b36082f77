import contextvars
import itertools
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.exceptions import NumericalError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_node_ids = itertools.count()
_active_tape: contextvars.ContextVar[Optional["Tape"]] = contextvars.ContextVar("active_tape", default=None)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    """
    Dense 64-bit array that can take part in a recorded computation.

    Tensors created while a `Tape` is active, from inputs that require gradients,
    are recorded on that tape. `grad` is filled in by `gradient()` for the tensors
    it was asked about.
    """

    def __init__(self, data: ArrayLike, requires_grad: bool = False, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.name = name
        self.node_id = next(_node_ids)
        self.tape: Optional["Tape"] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=False, name=self.name)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # Operator sugar; the primitives live in ops.py
    def __add__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        from . import ops
        return ops.div(self, other)

    def __neg__(self) -> "Tensor":
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import ops
        return ops.matmul(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        from . import ops
        return ops.mean(self, axis=axis, keepdims=keepdims)


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    """Wraps constants so primitives can treat every operand alike."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, requires_grad=False)


@dataclass
class TapeEntry:
    op: str
    inputs: Tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    saved: Dict[str, Any] = field(default_factory=dict)


class Tape:
    """
    Ordered record of primitive operations.

    Use as a context manager; primitives executed inside the block are appended in
    execution order, so every input precedes its consumer. Tapes are per-context
    (contextvars), so threads each recording their own tape never interfere.
    """

    def __init__(self):
        self.entries: List[TapeEntry] = []
        self._token: Optional[contextvars.Token] = None

    def __enter__(self) -> "Tape":
        self._token = _active_tape.set(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._token is not None:
            _active_tape.reset(self._token)
            self._token = None

    def __len__(self) -> int:
        return len(self.entries)

    def record(self, entry: TapeEntry) -> None:
        entry.output.tape = self
        self.entries.append(entry)

    def backward(self, output: Tensor) -> Dict[int, np.ndarray]:
        """Reverse sweep from `output`; returns gradients keyed by node id."""
        grads: Dict[int, np.ndarray] = {output.node_id: np.ones_like(output.data)}
        for entry in reversed(self.entries):
            upstream = grads.get(entry.output.node_id)
            if upstream is None:
                continue
            input_grads = entry.backward(upstream)
            for inp, g in zip(entry.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                g = unbroadcast(np.asarray(g, dtype=np.float64), inp.shape)
                if inp.node_id in grads:
                    grads[inp.node_id] = grads[inp.node_id] + g
                else:
                    grads[inp.node_id] = g
        return grads


def active_tape() -> Optional[Tape]:
    return _active_tape.get()


def unbroadcast(grad: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
    """Sums out broadcast dimensions so `grad` matches `to_shape`."""
    if grad.shape == tuple(to_shape):
        return grad
    while grad.ndim > len(to_shape):
        grad = grad.sum(axis=0)
    for dim, size in enumerate(to_shape):
        if size == 1 and grad.shape[dim] != 1:
            grad = grad.sum(axis=dim, keepdims=True)
    return grad.reshape(to_shape)


def make_output(op: str, data: np.ndarray, inputs: Sequence[Tensor], backward: BackwardFn,
                saved: Optional[Dict[str, Any]] = None) -> Tensor:
    """Wraps a primitive's forward value and records it when a tape is active."""
    if not np.all(np.isfinite(data)) and all(np.all(np.isfinite(t.data)) for t in inputs):
        raise NumericalError("operation produced non-finite values from finite inputs", stage=op)
    requires_grad = any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=False)
    tape = _active_tape.get()
    if tape is not None and requires_grad:
        out.requires_grad = True
        tape.record(TapeEntry(op=op, inputs=tuple(inputs), output=out, backward=backward, saved=saved or {}))
    return out
