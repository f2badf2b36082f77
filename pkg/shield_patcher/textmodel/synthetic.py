import itertools
import logging
from typing import List, Sequence, Tuple

import numpy as np

from ..models.text_models import Dataset, Example, SyntheticCorpusSpec, Vocabulary
from ..utils.exceptions import DatasetError

logger = logging.getLogger(__name__)

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def _lexicon(size: int, seed: int) -> List[str]:
    """`size` distinct pronounceable pseudo-words, deterministically shuffled."""
    syllables = [c + v for c in _CONSONANTS for v in _VOWELS]
    words: List[str] = []
    for n_syllables in itertools.count(2):
        words.extend("".join(parts) for parts in itertools.product(syllables, repeat=n_syllables))
        if len(words) >= size:
            break
    order = np.random.default_rng(seed).permutation(len(words))
    return [words[i] for i in order[:size]]


def signal_words(spec: SyntheticCorpusSpec) -> List[List[str]]:
    """The disjoint signal-word sets, one per class."""
    lexicon = _lexicon(spec.vocab_size, spec.seed)
    s = spec.signal_tokens_per_class
    return [lexicon[c * s:(c + 1) * s] for c in range(spec.num_classes)]


def keyword_oracle(tokens: Sequence[str], signals: List[List[str]]) -> int:
    """Class whose signal words occur most often (first class on ties)."""
    counts = [sum(1 for t in tokens if t in set(words)) for words in signals]
    return int(np.argmax(counts))


def generate_synthetic(spec: SyntheticCorpusSpec) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Generates train/validation/test splits whose label is the class with the most
    signal words in the sentence.

    Distractor signal words from other classes appear with probability `spec.noise`
    per position but never tie or outnumber the gold class, so a keyword-counting
    oracle is always correct. All three splits share one Vocabulary holding the
    whole lexicon.
    """
    n_signal = spec.num_classes * spec.signal_tokens_per_class
    if n_signal >= spec.vocab_size:
        raise DatasetError(
            f"{spec.num_classes} classes x {spec.signal_tokens_per_class} signal words "
            f"leave no filler words in a vocabulary of {spec.vocab_size}")

    lexicon = _lexicon(spec.vocab_size, spec.seed)
    signals = [lexicon[c * spec.signal_tokens_per_class:(c + 1) * spec.signal_tokens_per_class]
               for c in range(spec.num_classes)]
    fillers = lexicon[n_signal:]
    vocabulary = Vocabulary()
    for word in lexicon:
        vocabulary.add(word)

    streams = np.random.SeedSequence(spec.seed).spawn(3)
    splits = []
    for tag, size, stream in zip(("train", "validation", "test"), spec.split_sizes, streams):
        rng = np.random.default_rng(stream)
        examples = [_sample_example(rng, spec, signals, fillers, vocabulary) for _ in range(size)]
        splits.append(Dataset(examples=examples, num_classes=spec.num_classes, split=tag,
                              label_names=[f"class_{c}" for c in range(spec.num_classes)],
                              vocabulary=vocabulary))
    logger.info(f"Generated synthetic corpus: sizes {spec.split_sizes}, vocabulary {len(vocabulary)}, seed {spec.seed}")
    return splits[0], splits[1], splits[2]


def _sample_example(rng: np.random.Generator, spec: SyntheticCorpusSpec, signals: List[List[str]],
                    fillers: List[str], vocabulary: Vocabulary) -> Example:
    label = int(rng.integers(spec.num_classes))
    length = int(rng.integers(spec.min_length, spec.max_length + 1))
    n_gold = min(length, int(rng.integers(1, 4)))
    gold_positions = set(int(p) for p in rng.choice(length, size=n_gold, replace=False))
    counts = [0] * spec.num_classes
    words = []
    for pos in range(length):
        if pos in gold_positions:
            words.append(signals[label][int(rng.integers(len(signals[label])))])
            continue
        if spec.noise > 0 and rng.random() < spec.noise:
            other = int(rng.integers(spec.num_classes - 1))
            other = other + 1 if other >= label else other
            if counts[other] + 1 < n_gold:
                counts[other] += 1
                words.append(signals[other][int(rng.integers(len(signals[other])))])
                continue
        words.append(fillers[int(rng.integers(len(fillers)))])
    return Example(token_ids=vocabulary.encode(words), label=label, text=" ".join(words))
