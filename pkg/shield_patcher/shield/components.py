"""
Stochastic-ensemble equations: Gumbel noise, Gumbel-Softmax weights and the
weighted aggregation of head logits. Every function accepts a single example
(vectors) or a batch (leading batch axis).
"""
import hashlib
from typing import Sequence, Tuple, Union

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..utils.exceptions import InvalidInputError, ShapeError

_U_MIN = 1e-12
_U_MAX = 1.0 - 1e-12


def gumbel_from_uniform(u: Union[np.ndarray, float]) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), _U_MIN, _U_MAX)
    return -np.log(-np.log(u))


def sample_gumbel(shape: Tuple[int, ...], rng: np.random.Generator) -> Tensor:
    """Standard Gumbel draws g = -log(-log u), u ~ U(0, 1) clamped away from 0 and 1."""
    return Tensor(gumbel_from_uniform(rng.random(shape)))


def input_seed(token_ids: Sequence[int], seed: int) -> int:
    """Stable 64-bit hash of a token-id sequence, XOR the global seed."""
    digest = hashlib.blake2b(np.asarray(token_ids, dtype=np.int64).tobytes(), digest_size=8).digest()
    return int.from_bytes(digest, "little") ^ (seed & 0xFFFFFFFFFFFFFFFF)


def sample_alpha(w, tau: float, g) -> Tensor:
    """
    alpha = softmax((w + g) / tau) over the head axis.

    The softmax is shifted by its row maximum, so it never overflows. In float64
    a small tau still saturates: once a gap between two scores exceeds about
    745 * tau the smaller weight underflows to exactly 0 and the largest rounds
    to 1. Order is then preserved only weakly (ties at 0). Use `log_alpha` when
    a strict order is needed.
    """
    return ops.exp(log_alpha(w, tau, g))


def log_alpha(w, tau: float, g) -> Tensor:
    """log softmax((w + g) / tau); finite and ordered strictly like w + g for any tau > 0."""
    if tau <= 0:
        raise InvalidInputError(f"temperature must be positive, got {tau}")
    return ops.log_softmax(ops.scale(ops.add(w, g), 1.0 / tau), axis=-1)


def aggregate(alpha, w, head_logits) -> Tensor:
    """
    y = (1/K) sum_j alpha_j * w_j * head_logits_j.

    `alpha` and `w` are (K,) or (B, K); `head_logits` is (K, M) or (B, K, M).
    """
    alpha, w, head_logits = as_tensor(alpha), as_tensor(w), as_tensor(head_logits)
    if alpha.shape != w.shape or head_logits.shape[:-1] != alpha.shape:
        raise ShapeError("aggregate", [alpha.shape, w.shape, head_logits.shape],
                         "alpha and w must match the head axis of the logits")
    k = alpha.shape[-1]
    coef = ops.reshape(ops.mul(alpha, w), alpha.shape + (1,))
    return ops.scale(ops.sum(ops.mul(coef, head_logits), axis=-2), 1.0 / k)
