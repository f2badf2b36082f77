import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..models.attack_models import AttackConfig, AttackResult
from ..models.text_models import Vocabulary
from ..utils.exceptions import BudgetExhausted, InvalidInputError
from .session import candidate_fn, close_session, open_session, perturbation_cap
from .victim import VictimHandle

logger = logging.getLogger(__name__)


class _Population:
    """Individuals (token lists) with their fitness and whether they flipped the label."""

    def __init__(self):
        self.members: List[List[str]] = []
        self.fitness: List[float] = []
        self.flipped: List[bool] = []

    def add(self, tokens: List[str], fitness: float, flipped: bool) -> None:
        self.members.append(tokens)
        self.fitness.append(fitness)
        self.flipped.append(flipped)

    def ranked(self) -> List[int]:
        return sorted(range(len(self.members)), key=lambda i: -self.fitness[i])


def _mutate(individual: List[str], substitutes: Dict[int, List[str]],
           rng: np.random.Generator) -> List[str]:
    positions = sorted(substitutes)
    pos = positions[int(rng.integers(len(positions)))]
    options = substitutes[pos]
    child = list(individual)
    child[pos] = options[int(rng.integers(len(options)))]
    return child


def _enforce_cap(child: List[str], original: Sequence[str], cap: int, rng: np.random.Generator) -> List[str]:
    changed = [i for i, (a, b) in enumerate(zip(child, original)) if a != b]
    if len(changed) <= cap:
        return child
    for i in rng.choice(changed, size=len(changed) - cap, replace=False):
        child[int(i)] = original[int(i)]
    return child


def genetic_attack(victim: VictimHandle, tokens: Sequence[str], gold: int, config: AttackConfig,
                   rng: np.random.Generator, vocabulary: Optional[Vocabulary] = None,
                   embedding: Optional[np.ndarray] = None, example_index: int = 0) -> AttackResult:
    """
    Population search over word substitutions.

    The initial population holds random single-word substitutions. Each generation
    keeps the `elitism` fittest, then breeds the rest by fitness-proportional
    parent selection, uniform token-wise crossover and, with probability
    `mutation_rate`, one random substitution. Fitness is the attack score. The
    best individual ever seen is verified at the end; the score trace records the
    best fitness after every generation. Generations continue until a member
    flips the label or the search budget is spent, unless `max_generations`
    caps them; a population made only of elites stops after seeding.
    """
    if config.engine != "genetic-word":
        raise InvalidInputError(f"genetic_attack cannot run engine '{config.engine}'")
    candidates_for = candidate_fn(config, vocabulary or Vocabulary(), embedding)
    score, finished = open_session(victim, tokens, gold, config, example_index)
    if finished is not None:
        return finished

    original = list(tokens)
    substitutes = {i: c for i, c in ((i, candidates_for(t)) for i, t in enumerate(original)) if c}
    if not substitutes:
        return close_session(victim, original, original, gold, config, example_index, [score])
    cap = perturbation_cap(len(original), config.max_perturb_fraction)

    def evaluate(individual: List[str]) -> Tuple[float, bool]:
        probs = victim.query(individual)
        return 1.0 - float(probs[gold]), int(np.argmax(probs)) != gold

    best, best_fitness, trace = original, score, [score]
    population = _Population()
    try:
        for _ in range(config.population_size):
            individual = _mutate(original, substitutes, rng)
            fitness, flipped = evaluate(individual)
            population.add(individual, fitness, flipped)
            if fitness > best_fitness:
                best, best_fitness = individual, fitness
            if flipped:
                break
        trace.append(best_fitness)

        generation = 0
        while config.max_generations is None or generation < config.max_generations:
            if any(population.flipped) or config.elitism >= config.population_size:
                break
            generation += 1
            order = population.ranked()
            nxt = _Population()
            for i in order[:config.elitism]:
                nxt.add(population.members[i], population.fitness[i], population.flipped[i])
            weights = np.clip(np.asarray(population.fitness), 0.0, None)
            probs = weights / weights.sum() if weights.sum() > 0 else None
            while len(nxt.members) < config.population_size:
                p1, p2 = rng.choice(len(population.members), size=2, p=probs)
                mask = rng.random(len(original)) < 0.5
                child = [a if keep else b for a, b, keep in
                         zip(population.members[p1], population.members[p2], mask)]
                if rng.random() < config.mutation_rate:
                    child = _mutate(child, substitutes, rng)
                child = _enforce_cap(child, original, cap, rng)
                fitness, flipped = evaluate(child)
                nxt.add(child, fitness, flipped)
                if fitness > best_fitness:
                    best, best_fitness = child, fitness
                if flipped:
                    break
            population = nxt
            trace.append(best_fitness)
    except BudgetExhausted:
        logger.debug(f"example {example_index}: genetic search spent its budget after {victim.queries} queries")
        if trace[-1] != best_fitness:
            trace.append(best_fitness)
    return close_session(victim, original, best, gold, config, example_index, trace)
