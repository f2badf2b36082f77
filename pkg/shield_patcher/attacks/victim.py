import logging
from typing import Callable, List, Sequence

import numpy as np

from ..utils.exceptions import BudgetExhausted, InvalidInputError

logger = logging.getLogger(__name__)

Classify = Callable[[List[str]], np.ndarray]


class VictimHandle:
    """
    Query-only access to a classifier: token strings in, class probabilities out.

    Every call to `query` costs exactly one query. `reserve(n)` sets aside n
    queries that only `query(..., reserved=True)` may spend, so a search can
    never eat the final verification.
    """

    def __init__(self, classify: Classify, budget: int):
        if budget < 1:
            raise InvalidInputError(f"query budget must be at least 1, got {budget}")
        self._classify = classify
        self.budget = budget
        self.queries = 0
        self.reserved = 0

    @property
    def remaining(self) -> int:
        return self.budget - self.queries

    @property
    def search_remaining(self) -> int:
        return self.remaining - self.reserved

    def reserve(self, count: int) -> bool:
        """Sets aside `count` queries; False (and nothing reserved) when they do not fit."""
        if count > self.remaining:
            return False
        self.reserved = count
        return True

    def query(self, tokens: Sequence[str], reserved: bool = False) -> np.ndarray:
        if reserved:
            if self.reserved <= 0:
                raise BudgetExhausted(self.budget)
            self.reserved -= 1
        elif self.search_remaining <= 0:
            raise BudgetExhausted(self.budget)
        self.queries += 1
        return np.asarray(self._classify(list(tokens)), dtype=np.float64)


def attack_score(victim: VictimHandle, tokens: Sequence[str], gold: int) -> float:
    """1 - P(gold); costs one query."""
    return 1.0 - float(victim.query(tokens)[gold])
