import numpy as np
import pytest

from shield_patcher.models.text_models import Dataset, Example, Vocabulary

WORDS = ["good", "fine", "bad", "movie", "plot", "actor", "scene", "music", "story", "ending", "cast", "film"]


def keyword_classify(tokens):
    """P(class 1) rises with each 'good' and falls with each 'bad'; ties go to class 0."""
    score = sum(1 for t in tokens if t == "good") - sum(1 for t in tokens if t == "bad")
    p1 = 1.0 / (1.0 + np.exp(-2.0 * score))
    return np.array([1.0 - p1, p1])


def stubborn_classify(original):
    """Never flips; confidence in class 1 drops a little for every changed position."""
    def classify(tokens):
        changed = sum(1 for a, b in zip(tokens, original) if a != b)
        p1 = 0.95 - 0.01 * changed
        return np.array([1.0 - p1, p1])
    return classify


@pytest.fixture
def vocabulary():
    return Vocabulary(id_to_token=["<pad>", "<unk>"] + WORDS)


@pytest.fixture
def embedding(vocabulary):
    """'good' is close to 'fine' and 'bad'; every other word is orthogonal to the rest."""
    size = len(vocabulary)
    emb = np.zeros((size, size))
    for i in range(2, size):
        emb[i, i] = 1.0
    good, fine, bad = (vocabulary.lookup(w) for w in ("good", "fine", "bad"))
    emb[fine] = 0.0
    emb[fine, good], emb[fine, fine] = 0.9, 0.1
    emb[bad] = 0.0
    emb[bad, good], emb[bad, bad] = 0.8, 0.6
    return emb


@pytest.fixture
def keyword_dataset(vocabulary):
    sentences = [["good", "movie", "plot"], ["the", "good", "actor", "scene"], ["bad", "music"],
                 ["story", "good", "ending", "good", "cast"]]
    labels = [1, 1, 0, 1]
    examples = [Example(token_ids=vocabulary.encode(s), label=y, text=" ".join(s)) for s, y in zip(sentences, labels)]
    return Dataset(examples=examples, num_classes=2, split="test", vocabulary=vocabulary)
