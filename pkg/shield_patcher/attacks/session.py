import logging
import math
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from ..models.attack_models import AttackConfig, AttackResult
from ..models.text_models import Vocabulary
from ..utils.exceptions import BudgetExhausted, InvalidInputError
from .transforms import char_transforms, word_candidates
from .victim import VictimHandle

logger = logging.getLogger(__name__)

CandidateFn = Callable[[str], List[str]]


def perturbation_cap(length: int, fraction: float) -> int:
    return max(1, math.ceil(fraction * length))


def candidate_fn(config: AttackConfig, vocabulary: Vocabulary, embedding: Optional[np.ndarray]) -> CandidateFn:
    """Maps a token string to its substitutes for the configured engine."""
    if config.engine == "greedy-char":
        return lambda token: char_transforms(token, config.char_transforms, config.min_token_length)
    if embedding is None:
        raise InvalidInputError(f"engine '{config.engine}' needs the victim's embedding matrix")

    def words(token: str) -> List[str]:
        token_id = vocabulary.lookup(token)
        ids = word_candidates(embedding, token_id, config.num_candidates, config.min_similarity) if token_id > 1 else []
        return vocabulary.decode(ids)

    return words


def open_session(victim: VictimHandle, tokens: Sequence[str], gold: int, config: AttackConfig,
                 example_index: int) -> Tuple[float, Optional[AttackResult]]:
    """
    Spends the baseline query. Returns (baseline score, finished result or None);
    a result comes back when the clean input is already misclassified or no
    verification query can be reserved.
    """
    probs = victim.query(tokens)
    score = 1.0 - float(probs[gold])
    base = dict(example_index=example_index, engine=config.engine, gold=gold, original_tokens=list(tokens),
                perturbed_tokens=list(tokens), budget=victim.budget)
    if int(np.argmax(probs)) != gold:
        return score, AttackResult(success=True, clean_misclassified=True, queries_used=victim.queries,
                                   score_trace=[score], **base)
    if not victim.reserve(config.verification_queries):
        return score, AttackResult(success=False, queries_used=victim.queries, score_trace=[score], **base)
    return score, None


def verify(victim: VictimHandle, tokens: Sequence[str], gold: int, config: AttackConfig) -> bool:
    """Fresh reserved queries on the final sequence; majority mode needs a strict majority of flips."""
    flips = 0
    for _ in range(config.verification_queries):
        if int(np.argmax(victim.query(tokens, reserved=True))) != gold:
            flips += 1
    return flips * 2 > config.verification_queries


def close_session(victim: VictimHandle, original: Sequence[str], best: Sequence[str], gold: int,
                  config: AttackConfig, example_index: int, trace: List[float]) -> AttackResult:
    changed = list(best) != list(original)
    success = False
    if changed:
        try:
            success = verify(victim, best, gold, config)
        except BudgetExhausted:
            logger.warning(f"example {example_index}: verification queries were not available")
    return AttackResult(example_index=example_index, engine=config.engine, gold=gold,
                        original_tokens=list(original), perturbed_tokens=list(best), success=success,
                        queries_used=victim.queries, budget=victim.budget, score_trace=trace)
