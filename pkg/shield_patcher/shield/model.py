import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor, as_tensor, ops
from ..models.shield_models import Phase, ShieldConfig, Variant
from ..textmodel.base_model import BaseClassifier, precompute_features
from ..utils.exceptions import InvalidInputError, ShapeError
from .components import aggregate, gumbel_from_uniform, input_seed, sample_alpha, sample_gumbel

logger = logging.getLogger(__name__)

Layer = Tuple[Tensor, Tensor]


@dataclass
class ShieldBatch:
    """Frozen base features, gold labels and the token ids they came from."""
    features: np.ndarray
    labels: np.ndarray
    token_ids: List[List[int]]

    def __len__(self) -> int:
        return len(self.labels)


class ShieldModel:
    """
    A frozen base classifier whose last layer is replaced by K gated expert heads.

    `heads[j][t]` is candidate t of head j, a list of (weight, bias) layers mapping
    the Q base features to M logits. `beta` (K x T) holds the selection logits;
    while `phase` is "train" every head is the relaxed candidate mixture, after
    `discretize` each head is its argmax candidate.
    """

    def __init__(self, base: BaseClassifier, config: ShieldConfig, variant: Variant = "full"):
        self.base = base
        self.config = config
        self.variant = variant
        self.phase: Phase = "train"
        self.heads: List[List[List[Layer]]] = []
        self.beta = Tensor(np.zeros((config.num_heads, config.num_candidates)), name="beta")
        q, k, m = base.feature_dim, config.num_heads, base.num_classes
        self.gate_w = Tensor(np.zeros((k * m + q, k)), requires_grad=True, name="gate_w")
        self.gate_b = Tensor(np.zeros(k), requires_grad=True, name="gate_b")
        self._rng = np.random.default_rng(config.seed)

    @property
    def num_heads(self) -> int:
        return self.config.num_heads

    @property
    def num_candidates(self) -> int:
        return self.config.num_candidates

    @property
    def feature_dim(self) -> int:
        return self.base.feature_dim

    @property
    def num_classes(self) -> int:
        return self.base.num_classes

    def parameters(self) -> List[Tensor]:
        """Gate and candidate tensors, i.e. everything step A trains (beta excluded)."""
        params = [self.gate_w, self.gate_b]
        for head in self.heads:
            for candidate in head:
                for w, b in candidate:
                    params.extend((w, b))
        return params

    def selected(self) -> List[int]:
        return [int(i) for i in np.argmax(self.beta.data, axis=1)]

    def snapshot(self) -> List[np.ndarray]:
        return [p.data.copy() for p in self.parameters()] + [self.beta.data.copy()]

    def restore(self, snapshot: List[np.ndarray]) -> None:
        for p, values in zip(self.parameters() + [self.beta], snapshot):
            p.data = values.copy()

    def draw_rng(self) -> np.random.Generator:
        """Model-owned stream used when a caller supplies none; not shareable across threads."""
        return self._rng


def _init_layer(rng: np.random.Generator, fan_in: int, fan_out: int, name: str) -> Layer:
    bound = 1.0 / np.sqrt(fan_in)
    return (Tensor(rng.uniform(-bound, bound, size=(fan_in, fan_out)), requires_grad=True, name=f"{name}_w"),
            Tensor(rng.uniform(-bound, bound, size=fan_out), requires_grad=True, name=f"{name}_b"))


def _init_candidate(rng: np.random.Generator, depth: int, q: int, h: int, m: int, name: str) -> List[Layer]:
    widths = [q] + [h] * depth + [m]
    return [_init_layer(rng, widths[i], widths[i + 1], f"{name}_l{i}") for i in range(len(widths) - 1)]


def patch(base: BaseClassifier, config: ShieldConfig, seed: Optional[int] = None,
          variant: Variant = "full") -> ShieldModel:
    """
    Wraps a frozen base classifier in K expert heads and a gate.

    Weights and biases are drawn uniformly from +-1/sqrt(fan_in); beta starts at
    zero, i.e. a uniform mixture over candidates.

    Raises:
        InvalidInputError: if `base` is not frozen.
    """
    if not base.frozen:
        raise InvalidInputError("SHIELD can only patch a frozen base model; train it first")
    if seed is not None and seed != config.seed:
        config = config.model_copy(update={"seed": seed})
    model = ShieldModel(base, config, variant)
    rng = np.random.default_rng(config.seed)
    q, m, h = base.feature_dim, base.num_classes, config.hidden_width
    for j in range(config.num_heads):
        model.heads.append([_init_candidate(rng, depth, q, h, m, f"head{j}_cand{t}")
                            for t, depth in enumerate(config.depths)])
    gate_w, gate_b = _init_layer(rng, config.num_heads * m + q, config.num_heads, "gate")
    model.gate_w, model.gate_b = gate_w, gate_b
    logger.info(f"Patched base model: K={config.num_heads}, T={config.num_candidates}, "
                f"depths={config.depths}, variant={variant}")
    return model


def _candidate_forward(layers: List[Layer], x: Tensor) -> Tensor:
    for i, (w, b) in enumerate(layers):
        x = ops.add(ops.matmul(x, w), b)
        if i < len(layers) - 1:
            x = ops.relu(x)
    return x


def _beta_weights(beta: np.ndarray) -> np.ndarray:
    shifted = np.exp(beta - beta.max(axis=1, keepdims=True))
    return shifted / shifted.sum(axis=1, keepdims=True)


def head_outputs(model: ShieldModel, features: Tensor, phase: Phase, beta: np.ndarray) -> List[Tensor]:
    """One (B, M) logit tensor per head."""
    outputs = []
    if phase == "inference":
        for head, t in zip(model.heads, np.argmax(beta, axis=1)):
            outputs.append(_candidate_forward(head[int(t)], features))
        return outputs
    weights = _beta_weights(beta)
    inv_t = 1.0 / model.num_candidates
    for j, head in enumerate(model.heads):
        mixed = None
        for t, candidate in enumerate(head):
            term = ops.scale(_candidate_forward(candidate, features), weights[j, t] * inv_t)
            mixed = term if mixed is None else ops.add(mixed, term)
        outputs.append(mixed)
    return outputs


def _as_batch(features) -> Tuple[Tensor, bool]:
    features = as_tensor(features)
    if features.ndim == 1:
        return ops.reshape(features, (1, features.shape[0])), True
    return features, False


def _check_features(model: ShieldModel, features: Tensor, op: str) -> None:
    if features.ndim != 2 or features.shape[1] != model.feature_dim:
        raise ShapeError(op, [features.shape], f"expects {model.feature_dim} base features")


def stack_heads(outputs: List[Tensor]) -> Tensor:
    """K tensors of shape (B, M) -> (B, K, M)."""
    b, m = outputs[0].shape
    return ops.concat([ops.reshape(o, (b, 1, m)) for o in outputs], axis=1)


def head_forward(model: ShieldModel, features, mode: Optional[Phase] = None,
                 beta: Optional[np.ndarray] = None) -> Tensor:
    """
    Logits of every head: (K, M) for a Q-vector, (B, K, M) for a (B, Q) batch.

    In "train" mode head j is (1/T) * sum_t softmax(beta_j)_t * o_jt(features);
    in "inference" mode it is the argmax candidate alone, with no 1/T factor.
    """
    feats, single = _as_batch(features)
    _check_features(model, feats, "head_forward")
    stacked = stack_heads(head_outputs(model, feats, mode or model.phase,
                                      model.beta.data if beta is None else beta))
    if single:
        return ops.reshape(stacked, stacked.shape[1:])
    return stacked


def gate_weights(model: ShieldModel, head_logits, features) -> Tensor:
    """w = W^T concat(flatten(head_logits), features) + b; (K,) or (B, K)."""
    head_logits, features = as_tensor(head_logits), as_tensor(features)
    single = features.ndim == 1
    if single:
        head_logits = ops.reshape(head_logits, (1,) + head_logits.shape)
        features = ops.reshape(features, (1, features.shape[0]))
    if head_logits.ndim != 3 or head_logits.shape[0] != features.shape[0]:
        raise ShapeError("gate_weights", [head_logits.shape, features.shape], "head logits and features disagree")
    b = head_logits.shape[0]
    flat = ops.reshape(head_logits, (b, head_logits.shape[1] * head_logits.shape[2]))
    gate_in = ops.concat([flat, features], axis=1)
    if gate_in.shape[1] != model.gate_w.shape[0]:
        raise ShapeError("gate_weights", [gate_in.shape, model.gate_w.shape], "gate input width mismatch")
    w = ops.add(ops.matmul(gate_in, model.gate_w), model.gate_b)
    return ops.reshape(w, (model.num_heads,)) if single else w


def draw_noise(model: ShieldModel, token_ids: Sequence[Sequence[int]], rng: Optional[np.random.Generator]) -> np.ndarray:
    """(B, K) Gumbel noise according to the configured noise mode."""
    k = model.num_heads
    mode = model.config.noise_mode
    if mode == "zero":
        return np.zeros((len(token_ids), k))
    if mode == "input-seeded":
        return np.stack([gumbel_from_uniform(np.random.default_rng(input_seed(ids, model.config.seed)).random(k))
                         for ids in token_ids]) if token_ids else np.zeros((0, k))
    rng = rng if rng is not None else model.draw_rng()
    return sample_gumbel((len(token_ids), k), rng).data


def shield_logits(model: ShieldModel, features: Tensor, noise: Optional[np.ndarray], phase: Optional[Phase] = None,
                  beta: Optional[np.ndarray] = None) -> Tuple[Tensor, Tensor, Tensor]:
    """Batched patched logits with explicit noise; returns (y, alpha, w)."""
    phase = phase or model.phase
    beta = model.beta.data if beta is None else beta
    _check_features(model, features, "shield_logits")
    stacked = stack_heads(head_outputs(model, features, phase, beta))
    w = gate_weights(model, stacked, features)
    if model.variant == "me-only":
        alpha = Tensor(np.full(w.shape, 1.0 / model.num_heads))
    else:
        tau = model.config.tau_train if phase == "train" else model.config.tau_infer
        alpha = sample_alpha(w, tau, np.zeros(w.shape) if noise is None else noise)
    return aggregate(alpha, w, stacked), alpha, w


def forward_shield(model: ShieldModel, example: Sequence[int],
                   rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, Dict[str, Any]]:
    """
    Patched logits (M,) for one example plus diagnostics: alpha, w, the
    candidate chosen by each head, and the head with the largest alpha.
    """
    features = as_tensor(model.base.features([example]).data)
    noise = None if model.variant == "me-only" else draw_noise(model, [example], rng)
    y, alpha, w = shield_logits(model, features, noise)
    diagnostics = {
        "alpha": alpha.data[0].copy(),
        "w": w.data[0].copy(),
        "selected_candidates": model.selected(),
        "top_head": int(np.argmax(alpha.data[0])),
    }
    return y.data[0].copy(), diagnostics


def predict_proba(model: ShieldModel, sequences: Sequence[Sequence[int]],
                  rng: Optional[np.random.Generator] = None, batch_size: int = 256) -> np.ndarray:
    """Class probabilities; noise is drawn per example in sequence order."""
    out = []
    for start in range(0, len(sequences), batch_size):
        chunk = sequences[start:start + batch_size]
        features = as_tensor(precompute_features(model.base, chunk))
        noise = None if model.variant == "me-only" else draw_noise(model, chunk, rng)
        y, _, _ = shield_logits(model, features, noise)
        out.append(ops.softmax(y, axis=-1).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.num_classes))


def predict_labels(model: ShieldModel, sequences: Sequence[Sequence[int]],
                   rng: Optional[np.random.Generator] = None) -> List[int]:
    return [int(i) for i in np.argmax(predict_proba(model, sequences, rng), axis=1)]


def make_batch(model: ShieldModel, token_ids: Sequence[Sequence[int]], labels: Sequence[int],
               features: Optional[np.ndarray] = None) -> ShieldBatch:
    if len(token_ids) == 0:
        raise InvalidInputError("a SHIELD batch must not be empty")
    if features is None:
        features = precompute_features(model.base, token_ids)
    return ShieldBatch(features=np.asarray(features), labels=np.asarray(labels, dtype=np.int64),
                       token_ids=[list(t) for t in token_ids])


def discretize(model: ShieldModel) -> ShieldModel:
    """Fixes each head to its argmax(beta) candidate and switches to inference."""
    model.phase = "inference"
    logger.info(f"Discretized selection logits; candidates per head: {model.selected()}")
    return model


def candidate_param_count(depth: int, q: int, h: int, m: int) -> int:
    return q * h + h + (depth - 1) * (h * h + h) + h * m + m


def closed_form_patch_params(config: ShieldConfig, q: int, m: int) -> int:
    k, t = config.num_heads, config.num_candidates
    heads = k * sum(candidate_param_count(d, q, config.hidden_width, m) for d in config.depths)
    return heads + (k * m + q) * k + k + k * t


def count_params(model: ShieldModel) -> Dict[str, float]:
    """Base and patch sizes from the tensors' shapes, and patch/base."""
    base = model.base.num_parameters()
    added = sum(p.size for p in model.parameters()) + model.beta.size
    return {"base": base, "patch": added, "ratio": added / base}


def ablation_variant(model: ShieldModel, which: str) -> ShieldModel:
    """
    A freshly patched variant over the same base and seed.

    "se-only": one fixed candidate per head (two hidden layers), gamma 0, no
    architecture step, stochastic alpha kept. "me-only": full architecture search
    and diversity loss, but alpha is the uniform vector and no noise is drawn.
    """
    key = which.lower().replace("_", "-")
    if key == "se-only":
        config = model.config.model_copy(update={"num_candidates": 1, "candidate_depths": [2], "gamma": 0.0})
        return patch(model.base, config, variant="se-only")
    if key == "me-only":
        return patch(model.base, model.config, variant="me-only")
    raise InvalidInputError(f"Unknown ablation variant '{which}'; expected 'se-only' or 'me-only'")
