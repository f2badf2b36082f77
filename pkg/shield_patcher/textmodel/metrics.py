from typing import Sequence

from sklearn.metrics import f1_score

from ..utils.exceptions import InvalidInputError


def weighted_f1(predictions: Sequence[int], gold: Sequence[int], num_classes: int) -> float:
    """Support-weighted mean of per-class F1 over the classes 0..num_classes-1."""
    if len(predictions) == 0:
        raise InvalidInputError("weighted_f1 needs at least one prediction")
    if len(predictions) != len(gold):
        raise InvalidInputError(f"{len(predictions)} predictions for {len(gold)} gold labels")
    if any(not 0 <= int(y) < num_classes for y in list(predictions) + list(gold)):
        raise InvalidInputError(f"labels must lie in [0, {num_classes})")
    return float(f1_score(list(gold), list(predictions), labels=list(range(num_classes)),
                          average="weighted", zero_division=0))
