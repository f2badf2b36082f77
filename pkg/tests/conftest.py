import numpy as np
import pytest

from shield_patcher.models.shield_models import ShieldConfig
from shield_patcher.models.text_models import SyntheticCorpusSpec
from shield_patcher.shield import patch, train_shield
from shield_patcher.textmodel import BaseClassifier, generate_synthetic, train_base

TINY_CORPUS = SyntheticCorpusSpec(vocab_size=60, num_classes=2, signal_tokens_per_class=6, min_length=4,
                                  max_length=8, noise=0.0, train_size=160, validation_size=40, test_size=30, seed=0)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end runs of the full pipeline")


@pytest.fixture(scope="session")
def tiny_corpus():
    """(train, validation, test) of a small two-class keyword corpus."""
    return generate_synthetic(TINY_CORPUS)


@pytest.fixture(scope="session")
def trained_base(tiny_corpus):
    train, validation, _ = tiny_corpus
    model = BaseClassifier(len(train.vocabulary), train.num_classes, embedding_dim=16, hidden_dim=16, seed=0)
    model, _ = train_base(model, train, validation, epochs=20, batch_size=16, lr=0.02, patience=20, seed=0)
    return model


@pytest.fixture(scope="session")
def tiny_shield_config():
    return ShieldConfig(num_heads=3, num_candidates=2, hidden_width=8, gamma=0.5, tau_train=0.5, tau_infer=0.5,
                        epochs=10, batch_size=32, lr=0.02, patience=10, beta_batches=1, seed=0)


@pytest.fixture
def patched(trained_base, tiny_shield_config):
    """A fresh, untrained patch on the shared base model."""
    return patch(trained_base, tiny_shield_config)


@pytest.fixture(scope="session")
def trained_shield(trained_base, tiny_corpus, tiny_shield_config):
    train, validation, _ = tiny_corpus
    model, _ = train_shield(patch(trained_base, tiny_shield_config), train, validation,
                            rng=np.random.default_rng(0))
    return model
