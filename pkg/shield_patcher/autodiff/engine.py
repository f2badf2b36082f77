import inspect
import logging
from typing import Callable, Dict, Iterable, Mapping, Union

import numpy as np

from .tensor import Tape, Tensor
from ..utils.exceptions import InvalidInputError, NumericalError

logger = logging.getLogger(__name__)


def evaluate(graph: Callable[..., Tensor], inputs: Mapping[str, Tensor]) -> Tensor:
    """
    Runs `graph` on named tensor bindings under a fresh tape.

    The returned tensor carries the populated tape as `.tape` (when any input
    requires gradients), ready for `gradient`.

    Raises:
        InvalidInputError: if a binding names no parameter of `graph`, or a
                           required parameter is left unbound.
        ShapeError: propagated from the first primitive whose operands mismatch.
    """
    params = inspect.signature(graph).parameters
    accepts_any = any(p.kind is inspect.Parameter.VAR_KEYWORD for p in params.values())
    if not accepts_any:
        unknown = sorted(set(inputs) - set(params))
        if unknown:
            raise InvalidInputError(f"Unknown input name(s): {', '.join(unknown)}")
    missing = sorted(
        name for name, p in params.items()
        if p.default is inspect.Parameter.empty
        and p.kind in (inspect.Parameter.POSITIONAL_OR_KEYWORD, inspect.Parameter.KEYWORD_ONLY)
        and name not in inputs
    )
    if missing:
        raise InvalidInputError(f"Unbound input name(s): {', '.join(missing)}")

    with Tape():
        out = graph(**inputs)
    if not isinstance(out, Tensor):
        raise InvalidInputError(f"Graph returned {type(out).__name__}, expected Tensor")
    return out


def gradient(scalar_output: Tensor, wrt: Iterable[Tensor]) -> Dict[Tensor, np.ndarray]:
    """
    Exact reverse-mode gradients of a single-element tensor.

    Tensors in `wrt` that are not on any path to the output get zeros. Each
    tensor's `.grad` is also set to the returned array.
    """
    if scalar_output.size != 1:
        raise InvalidInputError(f"gradient needs a scalar output, got shape {scalar_output.shape}")
    wrt = list(wrt)
    if scalar_output.tape is not None:
        node_grads = scalar_output.tape.backward(scalar_output)
    else:
        node_grads = {scalar_output.node_id: np.ones_like(scalar_output.data)}

    result: Dict[Tensor, np.ndarray] = {}
    for t in wrt:
        g = node_grads.get(t.node_id)
        g = np.zeros_like(t.data) if g is None else np.array(g, dtype=np.float64).reshape(t.shape)
        t.grad = g
        result[t] = g
    return result


def finite_difference_gradient(loss_fn: Callable[[Tensor], Union[Tensor, float]], point: Tensor,
                               step: float = 1e-5) -> Tensor:
    """
    Central differences (f(x + h e_k) - f(x - h e_k)) / 2h for every coordinate k of `point`.

    Raises:
        NumericalError: a loss evaluation was not finite; `index` names the coordinate.
    """
    if step <= 0:
        raise InvalidInputError(f"finite-difference step must be positive, got {step}")
    base = point.data.astype(np.float64)
    flat = base.reshape(-1)
    grad = np.zeros_like(flat)

    def evaluate_at(values: np.ndarray, k: int) -> float:
        out = loss_fn(Tensor(values.reshape(base.shape)))
        value = out.item() if isinstance(out, Tensor) else float(out)
        if not np.isfinite(value):
            raise NumericalError("loss evaluation was not finite", stage="finite_difference_gradient", index=k)
        return value

    for k in range(flat.size):
        plus = flat.copy()
        minus = flat.copy()
        plus[k] += step
        minus[k] -= step
        grad[k] = (evaluate_at(plus, k) - evaluate_at(minus, k)) / (2.0 * step)
    return Tensor(grad.reshape(base.shape))
