"""
Differentiable primitives.

Each primitive computes its forward value with numpy and hands a backward closure
to `make_output`, which records it on the active tape. Backward closures return
one gradient per input, shaped like the broadcast output; the tape sums
broadcast dimensions back out.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .tensor import ArrayLike, Tensor, as_tensor, make_output
from ..utils.exceptions import InvalidInputError, NumericalError, ShapeError

Operand = Union[Tensor, ArrayLike]


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError as e:
        raise ShapeError(op, [a.shape, b.shape], "operands cannot be broadcast together") from e


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _broadcast_shape("add", a, b)

    def backward(g):
        return np.broadcast_to(g, shape), np.broadcast_to(g, shape)

    return make_output("add", a.data + b.data, (a, b), backward)


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    shape = _broadcast_shape("sub", a, b)

    def backward(g):
        return np.broadcast_to(g, shape), -np.broadcast_to(g, shape)

    return make_output("sub", a.data - b.data, (a, b), backward)


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    a_data, b_data = a.data, b.data

    def backward(g):
        return g * b_data, g * a_data

    return make_output("mul", a_data * b_data, (a, b), backward)


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)
    if np.any(b.data == 0):
        raise NumericalError("division by zero", stage="div")
    a_data, b_data = a.data, b.data

    def backward(g):
        return g / b_data, -g * a_data / (b_data * b_data)

    return make_output("div", a_data / b_data, (a, b), backward)


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return make_output("neg", -a.data, (a,), lambda g: (-g,))


def scale(a: Operand, factor: float) -> Tensor:
    a = as_tensor(a)
    factor = float(factor)
    return make_output("scale", a.data * factor, (a,), lambda g: (g * factor,), saved={"factor": factor})


def matmul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", [a.shape, b.shape], "inner dimensions must agree and operands be at least 2-D")
    a_data, b_data = a.data, b.data

    def backward(g):
        grad_a = np.matmul(g, np.swapaxes(b_data, -1, -2))
        grad_b = np.matmul(np.swapaxes(a_data, -1, -2), g)
        return grad_a, grad_b

    return make_output("matmul", np.matmul(a_data, b_data), (a, b), backward)


def relu(a: Operand) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return make_output("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def exp(a: Operand) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return make_output("exp", out, (a,), lambda g: (g * out,))


def log(a: Operand) -> Tensor:
    a = as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericalError("log of a non-positive value", stage="log")
    a_data = a.data
    return make_output("log", np.log(a_data), (a,), lambda g: (g / a_data,))


def sum(a: Operand, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    in_shape = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape),)

    return make_output("sum", np.sum(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def mean(a: Operand, axis: Optional[int] = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    if a.size == 0:
        raise ShapeError("mean", [a.shape], "mean of an empty tensor")
    in_shape = a.shape
    count = a.size if axis is None else in_shape[axis]

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, in_shape) / count,)

    return make_output("mean", np.mean(a.data, axis=axis, keepdims=keepdims), (a,), backward)


def max(a: Operand, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Maximum along `axis`; the gradient flows to the first maximal entry."""
    a = as_tensor(a)
    idx = np.argmax(a.data, axis=axis)
    out = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis)
    in_shape = a.shape

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axis)
        grad = np.zeros(in_shape)
        np.put_along_axis(grad, np.expand_dims(idx, axis), g, axis=axis)
        return (grad,)

    return make_output("max", out if keepdims else np.squeeze(out, axis=axis), (a,), backward)


def reshape(a: Operand, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    in_shape = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError as e:
        raise ShapeError("reshape", [in_shape, tuple(shape)], "element counts differ") from e
    return make_output("reshape", out, (a,), lambda g: (g.reshape(in_shape),))


def concat(tensors: Sequence[Operand], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise InvalidInputError("concat needs at least one tensor")
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError("concat", [t.shape for t in tensors], "non-concatenated dimensions differ") from e
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return make_output("concat", out, tensors, backward)


def softmax(a: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - np.sum(g * out, axis=axis, keepdims=True)),)

    return make_output("softmax", out, (a,), backward)


def log_softmax(a: Operand, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    shifted = a.data - np.max(a.data, axis=axis, keepdims=True)
    out = shifted - np.log(np.sum(np.exp(shifted), axis=axis, keepdims=True))
    probs = np.exp(out)

    def backward(g):
        return (g - probs * np.sum(g, axis=axis, keepdims=True),)

    return make_output("log_softmax", out, (a,), backward)


def embedding(weight: Tensor, ids: np.ndarray) -> Tensor:
    """Gathers rows of `weight` for an integer index array of any shape."""
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise InvalidInputError(f"embedding index out of range [0, {weight.shape[0]})")
    if weight.ndim != 2:
        raise ShapeError("embedding", [weight.shape, ids.shape], "weight must be 2-D")
    w_shape = weight.shape

    def backward(g):
        grad = np.zeros(w_shape)
        np.add.at(grad, ids.reshape(-1), g.reshape(-1, w_shape[1]))
        return (grad,)

    return make_output("embedding", weight.data[ids], (weight,), backward, saved={"ids": ids})


def nll(logits: Operand, targets: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of integer `targets` under softmax(`logits`), fused."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise ShapeError("nll", [logits.shape, targets.shape], "expects (N, M) logits and N targets")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise InvalidInputError("nll target outside the class range")
    n = logits.shape[0]
    shifted = logits.data - np.max(logits.data, axis=1, keepdims=True)
    log_probs = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    rows = np.arange(n)
    value = -np.mean(log_probs[rows, targets])

    def backward(g):
        grad = np.exp(log_probs)
        grad[rows, targets] -= 1.0
        return (grad * (g / n),)

    return make_output("nll", np.asarray(value), (logits,), backward, saved={"log_probs": log_probs})


def unfold1d(a: Operand, width: int) -> Tensor:
    """(B, L, D) -> (B, L - width + 1, width * D): concatenated sliding windows over positions."""
    a = as_tensor(a)
    if a.ndim != 3 or width < 1 or a.shape[1] < width:
        raise ShapeError("unfold1d", [a.shape], f"needs (B, L, D) input with L >= {width}")
    b, length, d = a.shape
    positions = length - width + 1
    out = np.concatenate([a.data[:, j:j + positions, :] for j in range(width)], axis=2)

    def backward(g):
        grad = np.zeros((b, length, d))
        for j in range(width):
            grad[:, j:j + positions, :] += g[:, :, j * d:(j + 1) * d]
        return (grad,)

    return make_output("unfold1d", out, (a,), backward, saved={"width": width})


