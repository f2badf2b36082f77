import json

import pytest

from shield_patcher.utils.config_loader import config_hash, deep_merge, load_experiment_config
from shield_patcher.utils.exceptions import ConfigurationError


def test_bundled_defaults():
    config = load_experiment_config()
    assert config.seeds == [0, 1, 2, 3, 4]
    assert config.shield.num_heads == 5 and config.shield.num_candidates == 3
    assert config.shield.gamma == 0.5 and config.shield.tau_train == 0.1
    assert [a.engine for a in config.attacks] == ["greedy-word", "greedy-char", "genetic-word"]
    assert all(a.budget == 2000 for a in config.attacks)
    assert config.dataset.synthetic is not None and not config.dataset.uses_csv


def test_user_file_then_overrides(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"shield": {"gamma": 1.0, "num_heads": 2}, "seeds": [7, 8]}), encoding="utf-8")
    config = load_experiment_config(str(path), {"seeds": [3], "shield": {"num_heads": None, "noise_mode": "zero"}})
    assert config.seeds == [3]
    assert config.shield.gamma == 1.0
    assert config.shield.num_heads == 2
    assert config.shield.noise_mode == "zero"
    assert config.shield.tau_infer == 0.1


def test_missing_file():
    with pytest.raises(ConfigurationError, match="not found"):
        load_experiment_config("/nonexistent/config.json")


def test_malformed_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{oops", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="decoding JSON"):
        load_experiment_config(str(path))


def test_non_object_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigurationError, match="JSON object"):
        load_experiment_config(str(path))


@pytest.mark.parametrize("override, field", [
    ({"shield": {"tau_train": 0}}, "shield.tau_train"),
    ({"workers": 0}, "workers"),
    ({"budget_percentages": [0, 50]}, "budget_percentages"),
    ({"shield": {"num_candidates": 2, "candidate_depths": [1, 2, 3]}}, "shield"),
    ({"dataset": {"train_path": "a.csv"}}, "dataset"),
])
def test_invalid_values_name_the_field(override, field):
    with pytest.raises(ConfigurationError, match=field):
        load_experiment_config(overrides=override)


def test_deep_merge_does_not_mutate_inputs():
    base = {"a": {"b": 1, "c": [1]}, "d": 2}
    merged = deep_merge(base, {"a": {"b": 5}, "e": 3})
    assert merged == {"a": {"b": 5, "c": [1]}, "d": 2, "e": 3}
    assert base == {"a": {"b": 1, "c": [1]}, "d": 2}


def test_config_hash_tracks_values():
    a = load_experiment_config()
    b = load_experiment_config(overrides={"seeds": [0]})
    assert config_hash(a) == config_hash(load_experiment_config())
    assert config_hash(a) != config_hash(b)
    assert len(config_hash(a)) == 64
