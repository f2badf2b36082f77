import numpy as np
import pytest

from shield_patcher.textmodel import (
    BaseClassifier, EnsembleClassifier, predict_labels, train_base, train_ensemble_baseline, weighted_f1,
)
from shield_patcher.utils.exceptions import InvalidInputError, NumericalError


def test_trained_base_beats_chance(trained_base, tiny_corpus):
    _, _, test = tiny_corpus
    preds = predict_labels(trained_base, test)
    assert weighted_f1(preds, test.labels, test.num_classes) > 0.6
    assert trained_base.frozen


def test_training_is_deterministic_for_a_seed(tiny_corpus):
    train, validation, _ = tiny_corpus
    runs = []
    for _ in range(2):
        model = BaseClassifier(len(train.vocabulary), 2, embedding_dim=8, hidden_dim=8, seed=3)
        train_base(model, train, validation, epochs=2, batch_size=32, seed=3)
        runs.append(model.state_dict())
    for name in runs[0]:
        np.testing.assert_array_equal(runs[0][name], runs[1][name])


def test_history_records_every_epoch(tiny_corpus):
    train, validation, _ = tiny_corpus
    model = BaseClassifier(len(train.vocabulary), 2, embedding_dim=8, hidden_dim=8, seed=1)
    _, history = train_base(model, train, validation, epochs=3, batch_size=32, patience=5, seed=1)
    assert [e.epoch for e in history.epochs] == [1, 2, 3]
    assert all(np.isfinite(e.train_loss) and np.isfinite(e.validation_loss) for e in history.epochs)


def test_zero_epochs_only_freezes(tiny_corpus):
    train, validation, _ = tiny_corpus
    model = BaseClassifier(len(train.vocabulary), 2, embedding_dim=8, hidden_dim=8, seed=1)
    before = model.state_dict()
    _, history = train_base(model, train, validation, epochs=0)
    assert history.epochs == []
    assert model.frozen
    np.testing.assert_array_equal(model.state_dict()["head_w"], before["head_w"])


def test_training_a_frozen_model_is_rejected(trained_base, tiny_corpus):
    train, validation, _ = tiny_corpus
    with pytest.raises(InvalidInputError, match="frozen"):
        train_base(trained_base, train, validation, epochs=1)


def test_class_count_mismatch_is_rejected(tiny_corpus):
    train, validation, _ = tiny_corpus
    model = BaseClassifier(len(train.vocabulary), 3, embedding_dim=8, hidden_dim=8)
    with pytest.raises(InvalidInputError, match="class counts"):
        train_base(model, train, validation, epochs=1)


def test_divergence_reports_epoch_and_batch(tiny_corpus):
    train, validation, _ = tiny_corpus
    model = BaseClassifier(len(train.vocabulary), 2, embedding_dim=8, hidden_dim=8, seed=1)
    model.params["head_b"].data[:] = np.inf
    with pytest.raises(NumericalError) as excinfo:
        train_base(model, train, validation, epochs=1, batch_size=32)
    assert excinfo.value.stage == "train_base"
    assert excinfo.value.index == (1, 0)


def test_ensemble_members_use_consecutive_seeds(tiny_corpus):
    train, validation, _ = tiny_corpus
    ensemble, _ = train_ensemble_baseline(3, train, validation, epochs=1, batch_size=64, seed=10,
                                          embedding_dim=8, hidden_dim=8)
    assert [m.seed for m in ensemble.members] == [10, 11, 12]
    assert all(m.frozen for m in ensemble.members)
    assert ensemble.num_parameters() == 3 * ensemble.members[0].num_parameters()


def test_ensemble_averages_member_logits(trained_base):
    ensemble = EnsembleClassifier([trained_base, trained_base])
    single = EnsembleClassifier([trained_base])
    seqs = [[2, 3, 4], [5, 6]]
    np.testing.assert_allclose(ensemble.predict_proba(seqs), single.predict_proba(seqs))


def test_ensemble_needs_members():
    with pytest.raises(InvalidInputError):
        EnsembleClassifier([])
    with pytest.raises(InvalidInputError):
        train_ensemble_baseline(0, None, None)
