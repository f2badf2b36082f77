import logging
from dataclasses import dataclass, field
from typing import List, Mapping, Sequence, Union

import numpy as np

from .tensor import Tensor
from ..utils.exceptions import InvalidInputError, ShapeError

logger = logging.getLogger(__name__)

Gradients = Union[Sequence[np.ndarray], Mapping[Tensor, np.ndarray]]


@dataclass
class AdamState:
    """Adam moments and hyper-parameters for one ordered list of parameters."""
    lr: float = 0.005
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **hyper) -> "AdamState":
        state = cls(**hyper)
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
        return state


def _ordered(params: Sequence[Tensor], grads: Gradients) -> List[np.ndarray]:
    if isinstance(grads, Mapping):
        return [np.asarray(grads.get(p, np.zeros_like(p.data))) for p in params]
    grads = [np.asarray(g) for g in grads]
    if len(grads) != len(params):
        raise InvalidInputError(f"{len(grads)} gradients for {len(params)} parameters")
    return grads


def adam_step(params: Sequence[Tensor], grads: Gradients, state: AdamState) -> List[Tensor]:
    """Applies one bias-corrected Adam update in place and returns the parameters."""
    params = list(params)
    grads = _ordered(params, grads)
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError("adam_step", [p.shape, g.shape], f"gradient does not match parameter {p.name or ''}".strip())
    if not state.m:
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    for p, m in zip(params, state.m):
        if m.shape != p.shape:
            raise ShapeError("adam_step", [p.shape, m.shape], "optimizer state belongs to other parameters")

    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for i, (p, g) in enumerate(zip(params, grads)):
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g
        update = state.lr * (state.m[i] / correction1) / (np.sqrt(state.v[i] / correction2) + state.eps)
        try:
            p.data -= update
        except ValueError as e:
            raise InvalidInputError(f"parameter {p.name or i} is read-only (frozen)") from e
    return params


def global_norm(grads: Gradients) -> float:
    values = grads.values() if isinstance(grads, Mapping) else grads
    return float(np.sqrt(sum(float(np.sum(np.square(g))) for g in values)))


def clip_global_norm(grads: Gradients, max_norm: float) -> Gradients:
    """Scales every gradient by max_norm / norm when the joint L2 norm exceeds `max_norm`."""
    if max_norm <= 0:
        raise InvalidInputError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm <= max_norm:
        return grads
    factor = max_norm / norm
    logger.debug(f"Clipping gradients: norm {norm:.4f} > {max_norm}")
    if isinstance(grads, Mapping):
        return {k: np.asarray(g) * factor for k, g in grads.items()}
    return [np.asarray(g) * factor for g in grads]
