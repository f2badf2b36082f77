import logging
from typing import Dict, Optional, Sequence

import numpy as np

from ..models.attack_models import AttackResult
from ..utils.exceptions import InvalidInputError

logger = logging.getLogger(__name__)


def accuracy_under_attack(clean_predictions: Sequence[int], results: Sequence[AttackResult],
                          gold: Sequence[int]) -> float:
    """
    Fraction of all examples that are predicted correctly on clean input and
    whose attack failed. Clean errors count as 0 whatever the attack did.
    """
    if not (len(clean_predictions) == len(results) == len(gold)):
        raise InvalidInputError(f"misaligned inputs: {len(clean_predictions)} predictions, "
                                f"{len(results)} attack results, {len(gold)} gold labels")
    if len(gold) == 0:
        raise InvalidInputError("accuracy_under_attack needs at least one example")
    for i, (res, y) in enumerate(zip(results, gold)):
        if res.gold != y:
            raise InvalidInputError(f"attack result {i} (example {res.example_index}) has gold {res.gold}, expected {y}")
    survived = sum(1 for p, res, y in zip(clean_predictions, results, gold) if p == y and not res.success)
    return survived / len(gold)


def clean_accuracy(predictions: Sequence[int], gold: Sequence[int]) -> float:
    if len(predictions) != len(gold) or len(gold) == 0:
        raise InvalidInputError("clean accuracy needs equally long, non-empty inputs")
    return float(np.mean(np.asarray(predictions) == np.asarray(gold)))


def query_statistics(results: Sequence[AttackResult]) -> Dict[str, Optional[float]]:
    """Mean/median queries over successful attacks and mean over all attacks."""
    successful = [r.queries_used for r in results if r.success and not r.clean_misclassified]
    everything = [r.queries_used for r in results]
    return {
        "mean_queries_success": float(np.mean(successful)) if successful else None,
        "median_queries_success": float(np.median(successful)) if successful else None,
        "mean_queries": float(np.mean(everything)) if everything else 0.0,
    }


def relative_improvement(defended: float, base: float) -> Optional[float]:
    """(defended - base) / base; undefined when the base accuracy is 0."""
    if base == 0:
        return None
    return (defended - base) / base
