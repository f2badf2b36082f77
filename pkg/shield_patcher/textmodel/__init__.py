from .base_model import BaseClassifier, forward_base, pad_batch, precompute_features, predict_proba
from .metrics import weighted_f1
from .synthetic import generate_synthetic, keyword_oracle, signal_words
from .trainer import EnsembleClassifier, predict_labels, train_base, train_ensemble_baseline

__all__ = [
    "BaseClassifier", "forward_base", "pad_batch", "precompute_features", "predict_proba",
    "weighted_f1", "generate_synthetic", "keyword_oracle", "signal_words",
    "EnsembleClassifier", "predict_labels", "train_base", "train_ensemble_baseline",
]
