import logging
from typing import Callable, List, Optional

import numpy as np

from ..autodiff import Tape, Tensor, finite_difference_gradient, gradient, ops
from ..textmodel.base_model import pad_batch
from ..utils.exceptions import InvalidInputError, NumericalError
from .components import sample_gumbel
from .model import ShieldBatch, ShieldModel, head_outputs, shield_logits

logger = logging.getLogger(__name__)


def draw_training_noise(model: ShieldModel, batch_size: int, rng: np.random.Generator) -> Optional[np.ndarray]:
    """Fresh training-phase Gumbel draws; none for the noise-free variant."""
    if model.variant == "me-only":
        return None
    return sample_gumbel((batch_size, model.num_heads), rng).data


def loss_se(model: ShieldModel, batch: ShieldBatch, rng: Optional[np.random.Generator] = None,
            noise: Optional[np.ndarray] = None, beta: Optional[np.ndarray] = None) -> Tensor:
    """
    Mean NLL of the patched logits with relaxed beta and tau_train.

    Pass `noise` (B, K) to hold the Gumbel draws fixed; otherwise they are drawn
    from `rng`.
    """
    if len(batch) == 0:
        raise InvalidInputError("loss_se needs a non-empty batch")
    if noise is None and model.variant != "me-only":
        noise = draw_training_noise(model, len(batch), rng if rng is not None else model.draw_rng())
    y, _, _ = shield_logits(model, Tensor(batch.features), noise, phase="train", beta=beta)
    loss = ops.nll(y, batch.labels)
    if not np.isfinite(loss.item()):
        raise NumericalError("loss_se is not finite", stage="loss_se")
    return loss


def gradient_diversity(gradients: List[np.ndarray]) -> float:
    """
    Sum over head pairs n < m of cos(g_n, g_m) - ||g_n - g_m||^2, where the
    cosine with a zero vector counts as 0.
    """
    total = 0.0
    for n in range(len(gradients)):
        for m in range(n + 1, len(gradients)):
            a, b = gradients[n], gradients[m]
            norms = np.linalg.norm(a) * np.linalg.norm(b)
            cos = float(np.dot(a, b) / norms) if norms > 0 else 0.0
            total += cos - float(np.sum((a - b) ** 2))
    return total


def head_input_gradients(model: ShieldModel, batch: ShieldBatch,
                         beta: Optional[np.ndarray] = None) -> List[List[np.ndarray]]:
    """
    For each example i and head j, the gradient of head j's standalone NLL with
    respect to example i's token embeddings, flattened. Returned as [i][j].
    """
    beta = model.beta.data if beta is None else beta
    base = model.base
    ids, mask = pad_batch(batch.token_ids, base.min_length())
    emb = Tensor(base.embed(ids).data, requires_grad=True, name="embeddings")
    lengths = mask.sum(axis=1).astype(int)
    per_head = []
    with Tape():
        features = base.encode(emb, mask)
        outputs = head_outputs(model, features, "train", beta)
        for out in outputs:
            # summed, so each example's embedding gradient is its own loss gradient
            summed = ops.scale(ops.nll(out, batch.labels), float(len(batch)))
            per_head.append(gradient(summed, [emb])[emb])
    return [[g[i, :lengths[i], :].reshape(-1) for g in per_head] for i in range(len(batch))]


def loss_experts(model: ShieldModel, batch: ShieldBatch, beta: Optional[np.ndarray] = None) -> float:
    """Gradient-diversity term summed over the batch; 0 for a single head."""
    if len(batch) == 0:
        raise InvalidInputError("loss_experts needs a non-empty batch")
    if model.num_heads < 2:
        return 0.0
    value = sum(gradient_diversity(grads) for grads in head_input_gradients(model, batch, beta))
    if not np.isfinite(value):
        raise NumericalError("loss_experts is not finite", stage="loss_experts")
    return float(value)


def loss_me(model: ShieldModel, batch: ShieldBatch, gamma: float, rng: Optional[np.random.Generator] = None,
            noise: Optional[np.ndarray] = None, beta: Optional[np.ndarray] = None) -> Tensor:
    """loss_se + gamma * loss_experts on the same batch and noise draws."""
    se = loss_se(model, batch, rng, noise=noise, beta=beta)
    if gamma == 0:
        return se
    return ops.add(se, gamma * loss_experts(model, batch, beta=beta))


def grad_beta(model: ShieldModel, batch: ShieldBatch, gamma: float, rng: Optional[np.random.Generator] = None,
              loss_fn: Optional[Callable[[Tensor], float]] = None) -> np.ndarray:
    """
    Central finite-difference gradient of loss_me with respect to beta.

    The Gumbel draws are taken once and reused for all 2*K*T evaluations.
    `loss_fn` replaces the objective (it receives the perturbed beta).

    Raises:
        InvalidInputError: the model has already been discretized.
        NumericalError: a non-finite evaluation; `index` is the (head, candidate) entry.
    """
    if model.phase != "train":
        raise InvalidInputError("grad_beta requires the relaxed (training) phase")
    if loss_fn is None:
        noise = draw_training_noise(model, len(batch), rng if rng is not None else model.draw_rng())

        def loss_fn(beta: Tensor) -> float:
            try:
                return loss_me(model, batch, gamma, noise=noise, beta=beta.data).item()
            except NumericalError:
                return float("nan")

    try:
        grad = finite_difference_gradient(loss_fn, model.beta.detach(), step=model.config.fd_step)
    except NumericalError as e:
        index = divmod(e.index, model.num_candidates) if isinstance(e.index, int) else e.index
        logger.error(f"Non-finite objective while differentiating beta at entry {index}")
        raise NumericalError(e.message, stage="grad_beta", index=index) from e
    return grad.data
