import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional

import numpy as np
from tqdm import tqdm

from ..models.attack_models import AttackConfig, AttackResult
from ..models.text_models import Dataset
from ..utils.exceptions import InvalidInputError
from .genetic import genetic_attack
from .greedy import greedy_attack
from .victim import Classify, VictimHandle

logger = logging.getLogger(__name__)

# (example index, victim-side rng) -> classify callback
VictimFactory = Callable[[int, np.random.Generator], Classify]


def _streams(seed: int, index: int):
    victim_seq, attacker_seq = np.random.SeedSequence([seed, index]).spawn(2)
    return np.random.default_rng(victim_seq), np.random.default_rng(attacker_seq)


def attack_example(victim_factory: VictimFactory, dataset: Dataset, index: int, config: AttackConfig,
                   seed: int = 0, embedding: Optional[np.ndarray] = None) -> AttackResult:
    """One attack session; failures come back as a result with `error` set."""
    example = dataset.examples[index]
    tokens = dataset.vocabulary.decode(example.token_ids)
    victim_rng, attacker_rng = _streams(seed, index)
    victim = VictimHandle(victim_factory(index, victim_rng), config.budget)
    try:
        if config.engine == "genetic-word":
            return genetic_attack(victim, tokens, example.label, config, attacker_rng,
                                  vocabulary=dataset.vocabulary, embedding=embedding, example_index=index)
        return greedy_attack(victim, tokens, example.label, config, vocabulary=dataset.vocabulary,
                             embedding=embedding, example_index=index)
    except Exception as e:
        logger.warning(f"Attack on example {index} failed: {type(e).__name__}: {e}")
        logger.debug("Traceback of the failed session", exc_info=True)
        return AttackResult(example_index=index, engine=config.engine, gold=example.label,
                            original_tokens=tokens, perturbed_tokens=tokens, success=False,
                            queries_used=min(victim.queries, config.budget), budget=config.budget,
                            error=f"{type(e).__name__}: {e}")


def run_attack(victim_factory: VictimFactory, dataset: Dataset, config: AttackConfig, workers: int = 1,
               seed: int = 0, embedding: Optional[np.ndarray] = None,
               show_progress: bool = False) -> List[AttackResult]:
    """
    Attacks every example of `dataset`, in dataset order.

    Each session gets its own victim and attacker random streams derived from
    (seed, example index), so results do not depend on `workers`.
    """
    if workers < 1:
        raise InvalidInputError(f"workers must be at least 1, got {workers}")
    if len(dataset) == 0:
        return []
    logger.info(f"Running {config.engine} (budget {config.budget}) on {len(dataset)} examples with {workers} worker(s)")

    def one(index: int) -> AttackResult:
        return attack_example(victim_factory, dataset, index, config, seed, embedding)

    indices = range(len(dataset))
    progress = dict(total=len(dataset), desc=config.engine, disable=not show_progress)
    if workers == 1:
        return [one(i) for i in tqdm(indices, **progress)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(tqdm(executor.map(one, indices), **progress))
