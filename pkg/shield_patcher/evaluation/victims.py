"""
Query-only views of the trained models, in the shape `run_attack` expects:
factory(example index, rng) -> classify(tokens) -> probabilities.
"""
from typing import List

import numpy as np

from ..attacks.runner import VictimFactory
from ..models.text_models import Vocabulary
from ..shield.model import ShieldModel, forward_shield
from ..textmodel.base_model import BaseClassifier, predict_proba
from ..textmodel.trainer import EnsembleClassifier


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def base_victim(model: BaseClassifier, vocabulary: Vocabulary) -> VictimFactory:
    def factory(index: int, rng: np.random.Generator):
        def classify(tokens: List[str]) -> np.ndarray:
            return predict_proba(model, [vocabulary.encode(tokens)])[0]
        return classify
    return factory


def ensemble_victim(ensemble: EnsembleClassifier, vocabulary: Vocabulary) -> VictimFactory:
    def factory(index: int, rng: np.random.Generator):
        def classify(tokens: List[str]) -> np.ndarray:
            return ensemble.predict_proba([vocabulary.encode(tokens)])[0]
        return classify
    return factory


def shield_victim(model: ShieldModel, vocabulary: Vocabulary) -> VictimFactory:
    """Each session's noise comes from its own rng, so the shared model is never mutated."""
    def factory(index: int, rng: np.random.Generator):
        def classify(tokens: List[str]) -> np.ndarray:
            logits, _ = forward_shield(model, vocabulary.encode(tokens), rng)
            return _softmax(logits)
        return classify
    return factory
