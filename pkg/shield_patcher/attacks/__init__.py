from .genetic import genetic_attack
from .greedy import greedy_attack, importance_ranking
from .runner import attack_example, run_attack
from .transforms import char_transforms, word_candidates
from .victim import VictimHandle, attack_score

__all__ = [
    "genetic_attack", "greedy_attack", "importance_ranking", "attack_example", "run_attack",
    "char_transforms", "word_candidates", "VictimHandle", "attack_score",
]
