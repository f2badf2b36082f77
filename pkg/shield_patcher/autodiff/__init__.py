from .tensor import Tape, TapeEntry, Tensor, as_tensor
from .engine import evaluate, finite_difference_gradient, gradient
from .optim import AdamState, adam_step, clip_global_norm, global_norm
from . import ops

__all__ = [
    "Tape", "TapeEntry", "Tensor", "as_tensor",
    "evaluate", "gradient", "finite_difference_gradient",
    "AdamState", "adam_step", "clip_global_norm", "global_norm",
    "ops",
]
