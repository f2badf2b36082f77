import logging
from typing import List, Optional, Sequence

import numpy as np

from ..models.attack_models import AttackConfig, AttackResult
from ..models.text_models import UNK_TOKEN, Vocabulary
from ..utils.exceptions import BudgetExhausted, InvalidInputError
from .session import candidate_fn, close_session, open_session, perturbation_cap
from .victim import VictimHandle, attack_score

logger = logging.getLogger(__name__)


def importance_ranking(victim: VictimHandle, tokens: Sequence[str], gold: int,
                       baseline: Optional[float] = None) -> List[int]:
    """
    Positions ordered by how much replacing the token with the unknown token
    raises the attack score, ties to the leftmost. Costs len(tokens) queries plus
    one for the baseline unless `baseline` is given. If the budget runs out, only
    the positions scored so far are ranked.
    """
    try:
        if baseline is None:
            baseline = attack_score(victim, tokens, gold)
    except BudgetExhausted:
        return []
    gains = []
    for i in range(len(tokens)):
        masked = list(tokens)
        masked[i] = UNK_TOKEN
        try:
            gains.append(attack_score(victim, masked, gold) - baseline)
        except BudgetExhausted:
            break
    return sorted(range(len(gains)), key=lambda i: (-gains[i], i))


def greedy_attack(victim: VictimHandle, tokens: Sequence[str], gold: int, config: AttackConfig,
                  vocabulary: Optional[Vocabulary] = None, embedding: Optional[np.ndarray] = None,
                  example_index: int = 0) -> AttackResult:
    """
    Greedy substitution in importance order.

    For each ranked position every candidate is scored and the best one is kept
    when it raises the score; the search stops when the kept sequence flips the
    label, the budget is spent or the perturbation cap is reached. One reserved
    query verifies the final sequence.
    """
    if config.engine not in ("greedy-char", "greedy-word"):
        raise InvalidInputError(f"greedy_attack cannot run engine '{config.engine}'")
    candidates_for = candidate_fn(config, vocabulary or Vocabulary(), embedding)
    score, finished = open_session(victim, tokens, gold, config, example_index)
    if finished is not None:
        return finished

    current = list(tokens)
    trace = [score]
    cap = perturbation_cap(len(tokens), config.max_perturb_fraction)
    changed = 0
    exhausted = False
    for position in importance_ranking(victim, tokens, gold, baseline=score):
        if changed >= cap or exhausted:
            break
        best_score, best_token, flipped = score, None, False
        for cand in candidates_for(tokens[position]):
            trial = list(current)
            trial[position] = cand
            try:
                probs = victim.query(trial)
            except BudgetExhausted:
                exhausted = True
                break
            trial_score = 1.0 - float(probs[gold])
            if trial_score > best_score:
                best_score, best_token = trial_score, cand
                flipped = int(np.argmax(probs)) != gold
        if best_token is None:
            continue
        current[position] = best_token
        score = best_score
        trace.append(score)
        changed += 1
        if flipped:
            break
    if exhausted:
        logger.debug(f"example {example_index}: search budget spent after {victim.queries} queries")
    return close_session(victim, tokens, current, gold, config, example_index, trace)
