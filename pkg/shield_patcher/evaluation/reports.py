import json
import logging
import os
from typing import Any, Dict, Iterable, List, Optional, Sequence

import pandas as pd

from ..models.attack_models import AttackResult
from ..models.experiment_models import EvalReport
from .metrics import relative_improvement

logger = logging.getLogger(__name__)

CLEAN_COLUMNS = ["model", "seed", "weighted_f1", "accuracy", "num_params"]
ATTACK_COLUMNS = ["model", "engine", "seed", "budget", "attacked", "clean_accuracy", "accuracy_under_attack",
                  "successes", "mean_queries_success", "median_queries_success", "mean_queries", "errors"]
CURVE_COLUMNS = ["model", "engine", "pct", "budget", "accuracy", "seed"]
ABLATION_COLUMNS = ["model", "engine", "seed", "clean_weighted_f1", "accuracy_under_attack"]
TAU_COLUMNS = ["seed", "tau", "validation_weighted_f1", "greedy_word_accuracy", "greedy_char_accuracy",
               "robustness", "selected"]
SUMMARY_COLUMNS = ["model", "engine", "seeds", "clean_weighted_f1_mean", "clean_weighted_f1_std",
                   "accuracy_under_attack_mean", "accuracy_under_attack_std", "relative_improvement",
                   "mean_queries_success"]


def _ensure_dir(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def write_rows_csv(rows: Iterable[Dict[str, Any]], path: str, columns: Sequence[str]) -> pd.DataFrame:
    """Writes rows with a fixed column order; floats with six decimals."""
    _ensure_dir(path)
    frame = pd.DataFrame(list(rows), columns=list(columns))
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n", float_format="%.6f")
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return frame


def read_rows_csv(paths: Iterable[str]) -> pd.DataFrame:
    frames = [pd.read_csv(p) for p in paths if os.path.exists(p)]
    return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


def write_attack_jsonl(results: Sequence[AttackResult], path: str, config_hash: str, model: str) -> None:
    """One record per attacked example: texts, outcome, queries, engine and config hash."""
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        for r in results:
            record = {
                "model": model,
                "example_index": r.example_index,
                "engine": r.engine,
                "gold": r.gold,
                "original_text": " ".join(r.original_tokens),
                "perturbed_text": " ".join(r.perturbed_tokens),
                "success": r.success,
                "clean_misclassified": r.clean_misclassified,
                "queries": r.queries_used,
                "budget": r.budget,
                "num_perturbed": r.num_perturbed,
                "error": r.error,
                "config_hash": config_hash,
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")


def _std(series: pd.Series) -> float:
    return float(series.std(ddof=1)) if len(series) > 1 else 0.0


def summarize(clean: pd.DataFrame, attacks: pd.DataFrame, select: str = "mean") -> List[Dict[str, Any]]:
    """
    Aggregates per-seed rows into one row per (model, engine).

    With `select="best"` each model keeps only its seed with the highest mean
    accuracy under attack across engines. Relative improvement is measured
    against the base model's mean for the same engine.
    """
    if attacks.empty:
        return []
    if select == "best":
        attacks, clean = _best_seed_only(clean, attacks)
    rows = []
    base_means = attacks[attacks["model"] == "base"].groupby("engine")["accuracy_under_attack"].mean().to_dict()
    for (model, engine), group in attacks.groupby(["model", "engine"], sort=True):
        clean_rows = clean[clean["model"] == model] if not clean.empty else clean
        clean_rows = clean_rows[clean_rows["seed"].isin(group["seed"])] if not clean_rows.empty else clean_rows
        mean_acc = float(group["accuracy_under_attack"].mean())
        improvement = relative_improvement(mean_acc, base_means[engine]) if engine in base_means and model != "base" else None
        queries = group["mean_queries_success"].dropna()
        rows.append({
            "model": model,
            "engine": engine,
            "seeds": len(group),
            "clean_weighted_f1_mean": float(clean_rows["weighted_f1"].mean()) if len(clean_rows) else None,
            "clean_weighted_f1_std": _std(clean_rows["weighted_f1"]) if len(clean_rows) else None,
            "accuracy_under_attack_mean": mean_acc,
            "accuracy_under_attack_std": _std(group["accuracy_under_attack"]),
            "relative_improvement": improvement,
            "mean_queries_success": float(queries.mean()) if len(queries) else None,
        })
    return rows


def _best_seed_only(clean: pd.DataFrame, attacks: pd.DataFrame):
    per_seed = attacks.groupby(["model", "seed"])["accuracy_under_attack"].mean().reset_index()
    # ties go to the smaller seed
    per_seed = per_seed.sort_values(["model", "accuracy_under_attack", "seed"], ascending=[True, False, True])
    best = per_seed.groupby("model").head(1)[["model", "seed"]]
    keep_attacks = attacks.merge(best, on=["model", "seed"])
    keep_clean = clean.merge(best, on=["model", "seed"]) if not clean.empty else clean
    return keep_attacks, keep_clean


def write_report(report: EvalReport, path: str) -> None:
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.model_dump(), f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote report {path}")


def format_summary(rows: List[Dict[str, Any]], noise_mode: Optional[str] = None) -> str:
    """Plain-text table of the summary rows, for the terminal."""
    lines = []
    if noise_mode:
        lines.append(f"noise mode: {noise_mode}")
    lines.append(f"{'model':<16}{'engine':<14}{'acc. under attack':>20}{'clean F1':>12}{'rel. impr.':>12}")
    for row in rows:
        acc = f"{row['accuracy_under_attack_mean']:.3f} ± {row['accuracy_under_attack_std']:.3f}"
        f1 = "-" if row["clean_weighted_f1_mean"] is None else f"{row['clean_weighted_f1_mean']:.3f}"
        impr = "-" if row["relative_improvement"] is None else f"{row['relative_improvement'] * 100:+.1f}%"
        lines.append(f"{row['model']:<16}{row['engine']:<14}{acc:>20}{f1:>12}{impr:>12}")
    return "\n".join(lines)
