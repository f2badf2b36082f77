import json
import os

import pandas as pd
import pytest

from shield_patcher.evaluation.reports import ATTACK_COLUMNS, CLEAN_COLUMNS, write_rows_csv
from shield_patcher.experiment import ExperimentRunner, _stage
from shield_patcher.models.attack_models import AttackConfig
from shield_patcher.models.experiment_models import BaseTrainingConfig, DatasetSource, ExperimentConfig
from shield_patcher.utils.exceptions import (
    CheckpointError, DatasetError, ExperimentError, NumericalError,
)

from .conftest import TINY_CORPUS


@pytest.fixture
def tiny_config(tmp_path, tiny_shield_config):
    return ExperimentConfig(
        dataset=DatasetSource(synthetic=TINY_CORPUS),
        base=BaseTrainingConfig(embedding_dim=8, hidden_dim=8, epochs=3, batch_size=32, lr=0.02, ensemble_size=2),
        shield=tiny_shield_config.model_copy(update={"epochs": 2}),
        attacks=[AttackConfig(engine="greedy-char", budget=40), AttackConfig(engine="greedy-word", budget=40)],
        seeds=[0], out_dir=str(tmp_path / "runs"), attack_examples=3,
    )


@pytest.fixture
def echoed():
    return []


@pytest.fixture
def runner(tiny_config, echoed):
    return ExperimentRunner(tiny_config, show_progress=False, echo=echoed.append)


def test_stage_wraps_package_errors():
    with pytest.raises(ExperimentError) as info:
        with _stage("Training"):
            raise NumericalError("loss is nan", stage="train_base")
    assert info.value.stage == "Training"
    assert isinstance(info.value.original_exception, NumericalError)


def test_stage_passes_experiment_errors_and_foreign_errors_through():
    inner = ExperimentError("inner", stage="Inner")
    with pytest.raises(ExperimentError) as info:
        with _stage("Outer"):
            raise inner
    assert info.value is inner
    with pytest.raises(KeyError):
        with _stage("Outer"):
            raise KeyError("x")


def test_paths_follow_seed_layout(runner, tiny_config):
    assert runner.seed_dir(3) == os.path.join(tiny_config.out_dir, "seed_3")
    assert runner.checkpoint_path(3, "shield_full") == os.path.join(tiny_config.out_dir, "seed_3", "shield_full.json")


def test_load_data_is_cached(runner):
    first = runner.load_data()
    assert runner.load_data() is first
    assert [len(d) for d in first] == [160, 40, 30]


def test_load_data_from_single_csv(tmp_path, runner, tiny_config):
    paths = runner.cmd_gen_data(str(tmp_path / "data"))
    config = tiny_config.model_copy(update={"dataset": DatasetSource(synthetic=None, csv_path=paths[0])})
    train, validation, test = ExperimentRunner(config, show_progress=False).load_data()
    assert len(train) + len(validation) + len(test) == 160
    assert validation.vocabulary is train.vocabulary


def test_load_data_from_explicit_splits(tmp_path, runner, tiny_config):
    paths = runner.cmd_gen_data(str(tmp_path / "data"))
    source = DatasetSource(synthetic=None, train_path=paths[0], validation_path=paths[1], test_path=paths[2])
    train, validation, test = ExperimentRunner(tiny_config.model_copy(update={"dataset": source})).load_data()
    assert [len(d) for d in (train, validation, test)] == [160, 40, 30]
    assert test.split == "test"


def test_missing_csv_is_a_dataset_stage_error(tmp_path, tiny_config):
    source = DatasetSource(synthetic=None, csv_path=str(tmp_path / "missing.csv"))
    with pytest.raises(ExperimentError) as info:
        ExperimentRunner(tiny_config.model_copy(update={"dataset": source})).load_data()
    assert info.value.stage == "Dataset Loading"
    assert isinstance(info.value.original_exception, DatasetError)


def test_gen_data_writes_three_splits(runner, tiny_config, echoed):
    paths = runner.cmd_gen_data()
    assert [os.path.basename(p) for p in paths] == ["train.csv", "validation.csv", "test.csv"]
    assert all(p.startswith(os.path.join(tiny_config.out_dir, "data")) for p in paths)
    assert len(pd.read_csv(paths[2])) == 30
    assert echoed == [f"Wrote 160/40/30 examples to {os.path.join(tiny_config.out_dir, 'data')}"]


def test_engines_fall_back_to_defaults(runner):
    assert [a.budget for a in runner._engines(None)] == [40, 40]
    picked = runner._engines(["greedy-word", "genetic-word"])
    assert [(a.engine, a.budget) for a in picked] == [("greedy-word", 40), ("genetic-word", 2000)]


def test_patch_without_base_checkpoint_fails_cleanly(runner):
    with pytest.raises(ExperimentError) as info:
        runner.cmd_patch()
    assert info.value.stage == "Checkpoint Loading"
    assert isinstance(info.value.original_exception, CheckpointError)


def test_clean_metrics_are_merged_per_model(runner):
    row = {"model": "base", "seed": 0, "weighted_f1": 0.5, "accuracy": 0.5, "num_params": 10}
    runner._update_clean_metrics(0, [row])
    runner._update_clean_metrics(0, [dict(row, model="shield_full", num_params=20)])
    runner._update_clean_metrics(0, [dict(row, weighted_f1=0.75)])
    frame = pd.read_csv(os.path.join(runner.seed_dir(0), "clean_metrics.csv"))
    assert sorted(frame["model"]) == ["base", "shield_full"]
    assert frame.set_index("model").loc["base", "weighted_f1"] == 0.75


def test_report_without_results(runner):
    with pytest.raises(ExperimentError) as info:
        runner.cmd_report()
    assert isinstance(info.value.original_exception, DatasetError)


def test_report_aggregates_seed_csvs(runner, tiny_config, echoed):
    seed_dir = runner.seed_dir(0)
    write_rows_csv([{"model": "base", "seed": 0, "weighted_f1": 0.9, "accuracy": 0.9, "num_params": 100},
                    {"model": "shield_full", "seed": 0, "weighted_f1": 0.88, "accuracy": 0.88, "num_params": 150}],
                   os.path.join(seed_dir, "clean_metrics.csv"), CLEAN_COLUMNS)
    base = {"engine": "greedy-char", "seed": 0, "budget": 40, "attacked": 3, "clean_accuracy": 1.0,
            "successes": 2, "mean_queries": 20.0, "errors": 0}
    write_rows_csv([dict(base, model="base", accuracy_under_attack=0.25, mean_queries_success=12.0,
                         median_queries_success=12.0),
                    dict(base, model="shield_full", accuracy_under_attack=0.5, mean_queries_success=None,
                         median_queries_success=None)],
                   os.path.join(seed_dir, "attacks.csv"), ATTACK_COLUMNS)
    with open(runner.checkpoint_path(0, "base"), "w", encoding="utf-8") as f:
        json.dump({"kind": "base", "hash": "abc"}, f)

    report = runner.cmd_report()

    assert report.checkpoint_hashes == {"seed_0/base": "abc"}
    assert report.attacks[1].mean_queries_success is None
    assert [row["model"] for row in report.summary] == ["base", "shield_full"]
    assert report.summary[1]["relative_improvement"] == pytest.approx(1.0)
    summary = pd.read_csv(os.path.join(tiny_config.out_dir, "summary.csv"))
    assert list(summary["model"]) == ["base", "shield_full"]
    with open(os.path.join(tiny_config.out_dir, "report.json"), encoding="utf-8") as f:
        assert json.load(f)["config_hash"] == runner.config_hash
    assert echoed[-1].startswith("noise mode: fresh")


def test_train_then_patch_then_attack(runner, tiny_config):
    rows = runner.cmd_train_base(ensemble=False)
    assert [r["model"] for r in rows] == ["base"]
    assert os.path.exists(runner.checkpoint_path(0, "base"))
    assert not os.path.exists(runner.checkpoint_path(0, "ensemble"))

    fidelity = runner.cmd_patch()[0]
    assert fidelity["patch_params"] > 0 and fidelity["tau"] == tiny_config.shield.tau_infer
    assert os.path.exists(os.path.join(runner.seed_dir(0), "fidelity.csv"))

    attack_rows = runner.cmd_attack(models=["base", "shield_full"], engines=["greedy-char"])
    assert [(r["model"], r["engine"], r["attacked"]) for r in attack_rows] == [
        ("base", "greedy-char", 3), ("shield_full", "greedy-char", 3)]
    with open(os.path.join(runner.seed_dir(0), "attacks", "shield_full_greedy-char.jsonl"), encoding="utf-8") as f:
        records = f.read().splitlines()
    assert len(records) == 3
    assert all(json.loads(r)["queries"] <= 40 for r in records)
    clean = pd.read_csv(os.path.join(runner.seed_dir(0), "clean_metrics.csv"))
    assert sorted(clean["model"]) == ["base", "shield_full"]


def test_attacking_a_model_that_was_never_trained(runner):
    runner.cmd_train_base(ensemble=False)
    with pytest.raises(ExperimentError) as info:
        runner.cmd_attack(models=["ensemble"])
    assert isinstance(info.value.original_exception, CheckpointError)

