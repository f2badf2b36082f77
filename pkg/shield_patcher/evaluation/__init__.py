from .metrics import accuracy_under_attack, clean_accuracy, query_statistics, relative_improvement
from .victims import base_victim, ensemble_victim, shield_victim

__all__ = [
    "accuracy_under_attack", "clean_accuracy", "query_statistics", "relative_improvement",
    "base_victim", "ensemble_victim", "shield_victim",
]
