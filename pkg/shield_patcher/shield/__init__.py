from .components import aggregate, gumbel_from_uniform, input_seed, log_alpha, sample_alpha, sample_gumbel
from .losses import gradient_diversity, grad_beta, head_input_gradients, loss_experts, loss_me, loss_se
from .model import (
    ShieldBatch,
    ShieldModel,
    ablation_variant,
    closed_form_patch_params,
    count_params,
    discretize,
    draw_noise,
    forward_shield,
    gate_weights,
    head_forward,
    make_batch,
    patch,
    predict_labels,
    predict_proba,
)
from .trainer import train_shield

__all__ = [
    "aggregate", "gumbel_from_uniform", "input_seed", "log_alpha", "sample_alpha", "sample_gumbel",
    "gradient_diversity", "grad_beta", "head_input_gradients", "loss_experts", "loss_me", "loss_se",
    "ShieldBatch", "ShieldModel", "ablation_variant", "closed_form_patch_params", "count_params",
    "discretize", "draw_noise", "forward_shield", "gate_weights", "head_forward", "make_batch",
    "patch", "predict_labels", "predict_proba", "train_shield",
]
