import pytest
from pydantic import ValidationError

from shield_patcher.models.attack_models import AttackConfig, AttackResult
from shield_patcher.models.experiment_models import DatasetSource, ExperimentConfig
from shield_patcher.models.shield_models import ShieldConfig
from shield_patcher.models.text_models import Dataset, Example, SyntheticCorpusSpec, Vocabulary


def test_shield_depths_default_to_one_through_t():
    assert ShieldConfig(num_candidates=4).depths == [1, 2, 3, 4]
    assert ShieldConfig(num_candidates=2, candidate_depths=[2, 2]).depths == [2, 2]


@pytest.mark.parametrize("kwargs", [
    {"num_candidates": 2, "candidate_depths": [1]},
    {"num_candidates": 1, "candidate_depths": [0]},
    {"tau_infer": -1.0},
    {"num_heads": 0},
    {"noise_mode": "gaussian"},
])
def test_invalid_shield_config(kwargs):
    with pytest.raises(ValidationError):
        ShieldConfig(**kwargs)


def test_attack_config_verification_queries():
    assert AttackConfig().verification_queries == 1
    assert AttackConfig(verification="majority", majority_votes=3).verification_queries == 3
    with pytest.raises(ValidationError):
        AttackConfig(population_size=2, elitism=3)
    with pytest.raises(ValidationError):
        AttackConfig(engine="beam-word")


def test_attack_result_cannot_overspend():
    with pytest.raises(ValidationError, match="exceeds budget"):
        AttackResult(example_index=0, engine="greedy-char", gold=0, original_tokens=["a"],
                     perturbed_tokens=["a"], queries_used=11, budget=10)


def test_vocabulary_reserves_pad_and_unk():
    vocab = Vocabulary()
    assert vocab.add("movie") == 2 and vocab.add("movie") == 2
    assert vocab.lookup("unseen") == 1
    assert vocab.encode(["movie", "unseen"]) == [2, 1]
    with pytest.raises(ValidationError):
        Vocabulary(id_to_token=["movie", "<unk>"])
    with pytest.raises(ValidationError):
        Vocabulary(id_to_token=["<pad>", "<unk>", "a", "a"])


def test_dataset_checks_labels_and_ids():
    vocab = Vocabulary(id_to_token=["<pad>", "<unk>", "a"])
    with pytest.raises(ValidationError):
        Dataset(examples=[Example(token_ids=[2], label=2)], num_classes=2, vocabulary=vocab)
    with pytest.raises(ValidationError):
        Dataset(examples=[Example(token_ids=[3], label=0)], num_classes=2, vocabulary=vocab)
    with pytest.raises(ValidationError):
        Example(token_ids=[], label=0)
    data = Dataset(examples=[Example(token_ids=[2], label=1), Example(token_ids=[1, 2], label=1)],
                   num_classes=2, vocabulary=vocab)
    assert data.class_distribution() == {0: 0, 1: 2}
    assert len(data.subset([1])) == 1


def test_synthetic_spec_lengths():
    with pytest.raises(ValidationError):
        SyntheticCorpusSpec(min_length=10, max_length=5)


def test_dataset_source_paths():
    assert DatasetSource(csv_path="all.csv").uses_csv
    with pytest.raises(ValidationError):
        DatasetSource(train_path="a.csv", validation_path="b.csv")
    with pytest.raises(ValidationError):
        DatasetSource(csv_path="all.csv", train_path="a.csv", validation_path="b.csv", test_path="c.csv")


def test_experiment_config_ranges():
    with pytest.raises(ValidationError):
        ExperimentConfig(tau_grid=[])
    with pytest.raises(ValidationError):
        ExperimentConfig(seeds=[])
    with pytest.raises(ValidationError):
        ExperimentConfig(budget_percentages=[150])
