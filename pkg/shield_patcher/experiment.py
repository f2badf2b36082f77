import glob
import json
import logging
import math
import os
from contextlib import contextmanager
from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .attacks.runner import VictimFactory, run_attack
from .evaluation.metrics import accuracy_under_attack, clean_accuracy, query_statistics
from .evaluation.reports import (
    ABLATION_COLUMNS, ATTACK_COLUMNS, CLEAN_COLUMNS, CURVE_COLUMNS, SUMMARY_COLUMNS, TAU_COLUMNS,
    format_summary, read_rows_csv, summarize, write_attack_jsonl, write_report, write_rows_csv,
)
from .evaluation.victims import base_victim, ensemble_victim, shield_victim
from .models.attack_models import AttackConfig
from .models.experiment_models import VARIANT_CHECKPOINTS, EvalReport, ExperimentConfig
from .models.text_models import Dataset
from .parsers.dataset_parser import load_csv, split_dataset, write_csv
from .shield import model as shield_model
from .shield.model import ShieldModel, ablation_variant, count_params, patch
from .shield.trainer import train_shield
from .textmodel.base_model import BaseClassifier
from .textmodel.metrics import weighted_f1
from .textmodel.synthetic import generate_synthetic
from .textmodel.trainer import predict_labels, train_base, train_ensemble_baseline
from .utils import checkpoints
from .utils.config_loader import config_hash
from .utils.exceptions import ConfigurationError, DatasetError, ExperimentError, ShieldError

logger = logging.getLogger(__name__)

FIDELITY_COLUMNS = ["model", "seed", "weighted_f1", "accuracy", "num_params", "base_weighted_f1",
                    "base_params", "patch_params", "patch_ratio", "tau"]
_CLEAN_STREAM = 101
_TAU_ENGINES = ("greedy-word", "greedy-char")


@contextmanager
def _stage(name: str) -> Iterator[None]:
    """Re-raises package errors as ExperimentError naming the stage."""
    try:
        yield
    except ExperimentError:
        raise
    except ShieldError as e:
        logger.error(f"Stage '{name}' failed: {e}")
        raise ExperimentError(message=str(e), stage=name, original_exception=e) from e


class ExperimentRunner:
    """
    Runs the experiment commands over every configured seed.

    Per-seed artifacts live under `<out_dir>/seed_<s>/`; cross-seed CSVs and
    reports under `<out_dir>/`.
    """

    def __init__(self, config: ExperimentConfig, show_progress: bool = True,
                 echo: Optional[Callable[[str], None]] = None):
        self.config = config
        self.show_progress = show_progress
        self.echo = echo or print
        self.config_hash = config_hash(config)
        self._data: Optional[Tuple[Dataset, Dataset, Dataset]] = None

    # paths

    @property
    def out_dir(self) -> str:
        return self.config.out_dir

    def seed_dir(self, seed: int) -> str:
        return os.path.join(self.out_dir, f"seed_{seed}")

    def checkpoint_path(self, seed: int, name: str) -> str:
        return os.path.join(self.seed_dir(seed), f"{name}.json")

    # data

    def load_data(self) -> Tuple[Dataset, Dataset, Dataset]:
        """Train/validation/test splits, generated or loaded once per runner."""
        if self._data is not None:
            return self._data
        source = self.config.dataset
        with _stage("Dataset Loading"):
            if source.train_path:
                train = load_csv(source.train_path, source.text_column, source.label_column, split="train")
                kwargs = dict(vocabulary=train.vocabulary, label_names=train.label_names)
                validation = load_csv(source.validation_path, source.text_column, source.label_column,
                                      split="validation", **kwargs)
                test = load_csv(source.test_path, source.text_column, source.label_column, split="test", **kwargs)
            elif source.csv_path:
                full = load_csv(source.csv_path, source.text_column, source.label_column)
                train, validation, test = split_dataset(full, seed=self.config.seeds[0])
            elif source.synthetic is not None:
                train, validation, test = generate_synthetic(source.synthetic)
            else:
                raise ConfigurationError("No dataset source configured")
        self._data = (train, validation, test)
        return self._data

    def _attack_subset(self, dataset: Dataset, limit: Optional[int]) -> Dataset:
        if limit is None or limit >= len(dataset):
            return dataset
        return dataset.subset(range(limit))

    # model loading

    def _load_base(self, seed: int) -> Tuple[BaseClassifier, str]:
        path = self.checkpoint_path(seed, "base")
        with _stage("Checkpoint Loading"):
            model, _, _, digest = checkpoints.load_base(path)
        return model, digest

    def _load_shield(self, seed: int, name: str, base: BaseClassifier) -> ShieldModel:
        with _stage("Checkpoint Loading"):
            model = checkpoints.load_shield(self.checkpoint_path(seed, name), base)
        model.config = model.config.model_copy(update={"noise_mode": self.config.shield.noise_mode})
        return model

    def _load_model(self, seed: int, name: str):
        """Returns (model, victim factory, embedding matrix) for a checkpoint name."""
        _, _, test = self.load_data()
        vocab = test.vocabulary
        if name == "ensemble":
            with _stage("Checkpoint Loading"):
                ensemble = checkpoints.load_ensemble(self.checkpoint_path(seed, "ensemble"))
            return ensemble, ensemble_victim(ensemble, vocab), ensemble.members[0].params["embedding"].data
        base, _ = self._load_base(seed)
        if name == "base":
            return base, base_victim(base, vocab), base.params["embedding"].data
        shield = self._load_shield(seed, name, base)
        return shield, shield_victim(shield, vocab), base.params["embedding"].data

    def _clean_predictions(self, model, dataset: Dataset, seed: int) -> List[int]:
        if isinstance(model, ShieldModel):
            rng = np.random.default_rng(np.random.SeedSequence([seed, _CLEAN_STREAM]))
            return shield_model.predict_labels(model, [ex.token_ids for ex in dataset.examples], rng)
        return predict_labels(model, dataset)

    def _num_params(self, model) -> int:
        if isinstance(model, ShieldModel):
            counts = count_params(model)
            return int(counts["base"] + counts["patch"])
        return int(model.num_parameters())

    def _clean_row(self, name: str, model, dataset: Dataset, seed: int) -> Dict[str, object]:
        preds = self._clean_predictions(model, dataset, seed)
        return {"model": name, "seed": seed,
                "weighted_f1": weighted_f1(preds, dataset.labels, dataset.num_classes),
                "accuracy": clean_accuracy(preds, dataset.labels),
                "num_params": self._num_params(model)}

    def _engines(self, engines: Optional[Sequence[str]]) -> List[AttackConfig]:
        if not engines:
            return list(self.config.attacks)
        configured = {a.engine: a for a in self.config.attacks}
        return [configured.get(e, AttackConfig(engine=e)) for e in engines]

    def _attack(self, name: str, model, factory: VictimFactory, embedding: np.ndarray, dataset: Dataset,
                attack: AttackConfig, seed: int, clean_preds: List[int]) -> Tuple[Dict[str, object], list]:
        with _stage(f"Attack ({name}, {attack.engine})"):
            results = run_attack(factory, dataset, attack, workers=self.config.workers, seed=seed,
                                 embedding=embedding, show_progress=self.show_progress)
            acc = accuracy_under_attack(clean_preds, results, dataset.labels)
        stats = query_statistics(results)
        row = {"model": name, "engine": attack.engine, "seed": seed, "budget": attack.budget,
               "attacked": len(results), "clean_accuracy": clean_accuracy(clean_preds, dataset.labels),
               "accuracy_under_attack": acc,
               "successes": sum(1 for r in results if r.success and not r.clean_misclassified),
               "errors": sum(1 for r in results if r.error), **stats}
        return row, results

    # commands

    def cmd_gen_data(self, out_dir: Optional[str] = None) -> List[str]:
        """Writes the configured splits as CSV files."""
        train, validation, test = self.load_data()
        target = out_dir or os.path.join(self.out_dir, "data")
        paths = []
        with _stage("Dataset Writing"):
            for split in (train, validation, test):
                path = os.path.join(target, f"{split.split}.csv")
                write_csv(split, path)
                paths.append(path)
        self.echo(f"Wrote {len(train)}/{len(validation)}/{len(test)} examples to {target}")
        return paths

    def cmd_train_base(self, ensemble: bool = True) -> List[Dict[str, object]]:
        """Trains, freezes and saves the base model (and ensemble baseline) for every seed."""
        train, validation, test = self.load_data()
        cfg = self.config.base
        rows = []
        for seed in self.config.seeds:
            self.echo(f"[seed {seed}] Training base model ({cfg.encoder} encoder)...")
            with _stage("Base Training"):
                model = BaseClassifier(len(train.vocabulary), train.num_classes, seed=seed, **cfg.model_kwargs())
                model, _ = train_base(model, train, validation, epochs=cfg.epochs, batch_size=cfg.batch_size,
                                      lr=cfg.lr, clip=cfg.clip, patience=cfg.patience, seed=seed,
                                      show_progress=self.show_progress)
                checkpoints.save_base(model, self.checkpoint_path(seed, "base"), train.vocabulary,
                                      train.label_names or [str(c) for c in range(train.num_classes)],
                                      metadata={"seed": seed, "config_hash": self.config_hash})
            seed_rows = [self._clean_row("base", model, test, seed)]
            if ensemble:
                self.echo(f"[seed {seed}] Training ensemble baseline ({cfg.ensemble_size} members)...")
                with _stage("Ensemble Training"):
                    ensemble_model, _ = train_ensemble_baseline(
                        cfg.ensemble_size, train, validation, epochs=cfg.epochs, batch_size=cfg.batch_size,
                        lr=cfg.lr, clip=cfg.clip, patience=cfg.patience, seed=seed,
                        show_progress=self.show_progress, vocab_size=len(train.vocabulary),
                        num_classes=train.num_classes, **cfg.model_kwargs())
                    checkpoints.save_ensemble(ensemble_model, self.checkpoint_path(seed, "ensemble"))
                seed_rows.append(self._clean_row("ensemble", ensemble_model, test, seed))
            self._update_clean_metrics(seed, seed_rows)
            self.echo(f"[seed {seed}] base test weighted-F1 {seed_rows[0]['weighted_f1']:.4f}")
            rows.extend(seed_rows)
        return rows

    def _train_patch(self, base: BaseClassifier, seed: int, tau: Optional[float] = None,
                     variant: str = "full") -> ShieldModel:
        train, validation, _ = self.load_data()
        update = {"seed": seed}
        if tau is not None:
            update.update(tau_train=tau, tau_infer=tau)
        model = patch(base, self.config.shield.model_copy(update=update))
        if variant != "full":
            model = ablation_variant(model, variant)
        with _stage(f"SHIELD Training ({variant})"):
            model, _ = train_shield(model, train, validation, rng=np.random.default_rng(seed),
                                    show_progress=self.show_progress)
        return model

    def _select_tau(self, base: BaseClassifier, seed: int) -> Tuple[ShieldModel, float, List[Dict[str, object]]]:
        _, validation, _ = self.load_data()
        subset = self._attack_subset(validation, self.config.tau_selection_examples)
        candidates = []
        for tau in self.config.tau_grid:
            self.echo(f"[seed {seed}] tau={tau}: training and attacking on validation...")
            model = self._train_patch(base, seed, tau)
            factory = shield_victim(model, validation.vocabulary)
            embedding = base.params["embedding"].data
            clean = self._clean_predictions(model, subset, seed)
            accs = {}
            for attack in self._engines(_TAU_ENGINES):
                row, _ = self._attack("shield_full", model, factory, embedding, subset, attack, seed, clean)
                accs[attack.engine] = row["accuracy_under_attack"]
            val_preds = self._clean_predictions(model, validation, seed)
            f1 = weighted_f1(val_preds, validation.labels, validation.num_classes)
            candidates.append((float(np.mean(list(accs.values()))), f1, tau, model, accs))
        best = max(candidates, key=lambda c: (c[0], c[1], c[2]))
        rows = [{"seed": seed, "tau": c[2], "validation_weighted_f1": c[1],
                 "greedy_word_accuracy": c[4].get("greedy-word"), "greedy_char_accuracy": c[4].get("greedy-char"),
                 "robustness": c[0], "selected": c is best} for c in candidates]
        logger.info(f"Selected tau={best[2]} for seed {seed} (robustness {best[0]:.4f}, F1 {best[1]:.4f})")
        return best[3], best[2], rows

    def cmd_patch(self, tau_grid: bool = False) -> List[Dict[str, object]]:
        """Trains the full SHIELD patch per seed and reports its fidelity against the base."""
        _, _, test = self.load_data()
        rows = []
        for seed in self.config.seeds:
            base, digest = self._load_base(seed)
            if tau_grid:
                model, tau, tau_rows = self._select_tau(base, seed)
                write_rows_csv(tau_rows, os.path.join(self.seed_dir(seed), "tau_grid.csv"), TAU_COLUMNS)
            else:
                self.echo(f"[seed {seed}] Training SHIELD patch...")
                model, tau = self._train_patch(base, seed), self.config.shield.tau_infer
            with _stage("Checkpoint Writing"):
                checkpoints.save_shield(model, self.checkpoint_path(seed, "shield_full"), digest)
            counts = count_params(model)
            row = self._clean_row("shield_full", model, test, seed)
            row.update(base_weighted_f1=self._clean_row("base", base, test, seed)["weighted_f1"],
                       base_params=counts["base"], patch_params=counts["patch"], patch_ratio=counts["ratio"], tau=tau)
            write_rows_csv([row], os.path.join(self.seed_dir(seed), "fidelity.csv"), FIDELITY_COLUMNS)
            self._update_clean_metrics(seed, [{k: row[k] for k in CLEAN_COLUMNS}])
            self.echo(f"[seed {seed}] SHIELD weighted-F1 {row['weighted_f1']:.4f} "
                      f"(base {row['base_weighted_f1']:.4f}), patch/base parameters {counts['ratio']:.3f}")
            rows.append(row)
        return rows

    def cmd_attack(self, models: Sequence[str] = ("base", "shield_full"),
                   engines: Optional[Sequence[str]] = None) -> List[Dict[str, object]]:
        """Attacks each requested model per seed and engine; writes JSONL records and attacks.csv."""
        _, _, test = self.load_data()
        subset = self._attack_subset(test, self.config.attack_examples)
        attacks = self._engines(engines)
        rows: List[Dict[str, object]] = []
        for seed in self.config.seeds:
            seed_rows: List[Dict[str, object]] = []
            clean_rows = []
            for name in models:
                model, factory, embedding = self._load_model(seed, name)
                clean_rows.append(self._clean_row(name, model, test, seed))
                clean_preds = self._clean_predictions(model, subset, seed)
                for attack in attacks:
                    self.echo(f"[seed {seed}] {attack.engine} vs {name}...")
                    row, results = self._attack(name, model, factory, embedding, subset, attack, seed, clean_preds)
                    write_attack_jsonl(results, os.path.join(self.seed_dir(seed), "attacks", f"{name}_{attack.engine}.jsonl"),
                                       self.config_hash, name)
                    seed_rows.append(row)
                    write_rows_csv(seed_rows, os.path.join(self.seed_dir(seed), "attacks.csv"), ATTACK_COLUMNS)
            self._update_clean_metrics(seed, clean_rows)
            rows.extend(seed_rows)
        return rows

    def cmd_budget_curve(self, models: Sequence[str] = ("base", "shield_full"),
                         engines: Optional[Sequence[str]] = None) -> List[Dict[str, object]]:
        """Accuracy under attack at each configured percentage of every engine's budget."""
        _, _, test = self.load_data()
        subset = self._attack_subset(test, self.config.attack_examples)
        rows = []
        for seed in self.config.seeds:
            for name in models:
                model, factory, embedding = self._load_model(seed, name)
                clean_preds = self._clean_predictions(model, subset, seed)
                for attack in self._engines(engines):
                    for pct in self.config.budget_percentages:
                        budget = max(1, math.ceil(attack.budget * pct / 100.0))
                        scaled = attack.model_copy(update={"budget": budget})
                        row, _ = self._attack(name, model, factory, embedding, subset, scaled, seed, clean_preds)
                        rows.append({"model": name, "engine": attack.engine, "pct": pct, "budget": budget,
                                     "accuracy": row["accuracy_under_attack"], "seed": seed})
                        self.echo(f"[seed {seed}] {name} {attack.engine} {pct:g}%: {row['accuracy_under_attack']:.4f}")
        write_rows_csv(rows, os.path.join(self.out_dir, "budget_curve.csv"), CURVE_COLUMNS)
        return rows

    def cmd_ablate(self, engines: Optional[Sequence[str]] = None) -> List[Dict[str, object]]:
        """Trains the SE-only and ME-only variants and attacks them next to the base and full SHIELD."""
        _, _, test = self.load_data()
        subset = self._attack_subset(test, self.config.attack_examples)
        rows = []
        for seed in self.config.seeds:
            base, digest = self._load_base(seed)
            for variant in ("se-only", "me-only"):
                self.echo(f"[seed {seed}] Training {variant} variant...")
                model = self._train_patch(base, seed, variant=variant)
                with _stage("Checkpoint Writing"):
                    checkpoints.save_shield(model, self.checkpoint_path(seed, VARIANT_CHECKPOINTS[variant]), digest)
            if not os.path.exists(self.checkpoint_path(seed, "shield_full")):
                self.echo(f"[seed {seed}] No full patch found; training one...")
                with _stage("Checkpoint Writing"):
                    checkpoints.save_shield(self._train_patch(base, seed),
                                            self.checkpoint_path(seed, "shield_full"), digest)
            for name in ("base", "shield_full", "shield_se_only", "shield_me_only"):
                model, factory, embedding = self._load_model(seed, name)
                f1 = self._clean_row(name, model, test, seed)["weighted_f1"]
                clean_preds = self._clean_predictions(model, subset, seed)
                for attack in self._engines(engines):
                    row, _ = self._attack(name, model, factory, embedding, subset, attack, seed, clean_preds)
                    rows.append({"model": name, "engine": attack.engine, "seed": seed,
                                 "clean_weighted_f1": f1, "accuracy_under_attack": row["accuracy_under_attack"]})
        write_rows_csv(rows, os.path.join(self.out_dir, "ablation.csv"), ABLATION_COLUMNS)
        return rows

    def cmd_report(self, select: str = "mean") -> EvalReport:
        """Aggregates every seed's clean and attack CSVs into summary.csv and report.json."""
        seed_dirs = [self.seed_dir(s) for s in self.config.seeds]
        clean = read_rows_csv(os.path.join(d, "clean_metrics.csv") for d in seed_dirs)
        fidelity = read_rows_csv(os.path.join(d, "fidelity.csv") for d in seed_dirs)
        attacks = read_rows_csv(os.path.join(d, "attacks.csv") for d in seed_dirs)
        if clean.empty and attacks.empty:
            raise ExperimentError(message=f"No per-seed results found under {self.out_dir}", stage="Report",
                                  original_exception=DatasetError(f"missing results in {self.out_dir}"))
        summary = summarize(clean, attacks, select=select)
        write_rows_csv(summary, os.path.join(self.out_dir, "summary.csv"), SUMMARY_COLUMNS)

        param_counts = {}
        if not fidelity.empty:
            first = fidelity.iloc[0]
            param_counts = {"base": float(first["base_params"]), "patch": float(first["patch_params"]),
                            "ratio": float(first["patch_ratio"])}
        report = EvalReport(
            config=self.config.model_dump(), config_hash=self.config_hash,
            noise_mode=self.config.shield.noise_mode, selection=select,
            checkpoint_hashes=self._checkpoint_hashes(), param_counts=param_counts,
            clean=_records(clean, CLEAN_COLUMNS), attacks=_records(attacks, ATTACK_COLUMNS), summary=summary,
        )
        write_report(report, os.path.join(self.out_dir, "report.json"))
        self.echo(format_summary(summary, self.config.shield.noise_mode))
        return report

    def _update_clean_metrics(self, seed: int, rows: List[Dict[str, object]]) -> None:
        """Replaces this seed's clean rows for the given models, keeping the others."""
        path = os.path.join(self.seed_dir(seed), "clean_metrics.csv")
        existing = read_rows_csv([path])
        names = {r["model"] for r in rows}
        kept = [] if existing.empty else _records(existing[~existing["model"].isin(names)], CLEAN_COLUMNS)
        write_rows_csv(kept + rows, path, CLEAN_COLUMNS)

    def _checkpoint_hashes(self) -> Dict[str, str]:
        hashes = {}
        for path in sorted(glob.glob(os.path.join(self.out_dir, "seed_*", "*.json"))):
            key = os.path.relpath(path, self.out_dir)[:-len(".json")].replace(os.sep, "/")
            try:
                with open(path, "r", encoding="utf-8") as f:
                    hashes[key] = json.load(f).get("hash", "")
            except (OSError, ValueError) as e:
                logger.warning(f"Could not read checkpoint hash from {path}: {e}")
        return hashes


def _records(frame: pd.DataFrame, columns: Sequence[str]) -> List[Dict[str, object]]:
    """DataFrame rows as plain dicts, NaN mapped to None."""
    if frame.empty:
        return []
    out = []
    for record in frame[list(columns)].to_dict(orient="records"):
        out.append({k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in record.items()})
    return out
