from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .attack_models import AttackConfig
from .shield_models import ShieldConfig
from .text_models import SyntheticCorpusSpec

ModelName = Literal["base", "ensemble", "shield_full", "shield_se_only", "shield_me_only"]

MODEL_NAMES: List[str] = ["base", "ensemble", "shield_full", "shield_se_only", "shield_me_only"]
VARIANT_CHECKPOINTS: Dict[str, str] = {"full": "shield_full", "se-only": "shield_se_only", "me-only": "shield_me_only"}


class DatasetSource(BaseModel):
    """Either a synthetic corpus, one CSV split 8:1:1, or three explicit CSV splits."""
    synthetic: Optional[SyntheticCorpusSpec] = Field(default_factory=SyntheticCorpusSpec)
    csv_path: Optional[str] = Field(default=None, description="Single CSV file, split into train/validation/test.")
    train_path: Optional[str] = None
    validation_path: Optional[str] = None
    test_path: Optional[str] = None
    text_column: str = "text"
    label_column: str = "label"

    @model_validator(mode="after")
    def _check_source(self) -> "DatasetSource":
        explicit = [self.train_path, self.validation_path, self.test_path]
        if any(explicit) and not all(explicit):
            raise ValueError("train_path, validation_path and test_path must be given together")
        if self.csv_path and any(explicit):
            raise ValueError("give either csv_path or explicit split paths, not both")
        return self

    @property
    def uses_csv(self) -> bool:
        return bool(self.csv_path or self.train_path)


class BaseTrainingConfig(BaseModel):
    encoder: Literal["mean", "cnn"] = "mean"
    embedding_dim: int = Field(default=64, ge=1)
    hidden_dim: int = Field(default=64, ge=1, description="Feature width Q of the mean-pool encoder.")
    num_filters: int = Field(default=32, ge=1)
    kernel_widths: List[int] = Field(default_factory=lambda: [2, 3, 4])
    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=0.005, gt=0.0)
    clip: float = Field(default=10.0, gt=0.0)
    patience: int = Field(default=3, ge=1)
    ensemble_size: int = Field(default=5, ge=1, description="Members of the classical ensemble baseline.")

    def model_kwargs(self) -> Dict[str, Any]:
        return dict(embedding_dim=self.embedding_dim, hidden_dim=self.hidden_dim, encoder=self.encoder,
                    num_filters=self.num_filters, kernel_widths=tuple(self.kernel_widths))


class ExperimentConfig(BaseModel):
    dataset: DatasetSource = Field(default_factory=DatasetSource)
    base: BaseTrainingConfig = Field(default_factory=BaseTrainingConfig)
    shield: ShieldConfig = Field(default_factory=ShieldConfig)
    attacks: List[AttackConfig] = Field(default_factory=list)
    budget_percentages: List[float] = Field(default_factory=lambda: [25.0, 50.0, 75.0, 100.0])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    out_dir: str = "runs"
    workers: int = Field(default=1, ge=1)
    attack_examples: Optional[int] = Field(default=100, ge=1, description="Test examples attacked per run; None attacks all.")
    tau_grid: List[float] = Field(default_factory=lambda: [1.0, 0.1, 0.01, 0.001])
    tau_selection_examples: int = Field(default=50, ge=1, description="Validation examples attacked per tau candidate.")

    @field_validator("budget_percentages")
    @classmethod
    def _check_percentages(cls, v: List[float]) -> List[float]:
        if any(not 0 < p <= 100 for p in v):
            raise ValueError("budget percentages must lie in (0, 100]")
        return v

    @field_validator("tau_grid")
    @classmethod
    def _check_taus(cls, v: List[float]) -> List[float]:
        if not v or any(t <= 0 for t in v):
            raise ValueError("tau grid must hold positive temperatures")
        return v


class CleanMetrics(BaseModel):
    model: str
    seed: int
    weighted_f1: float = Field(ge=0.0, le=1.0)
    accuracy: float = Field(ge=0.0, le=1.0)
    num_params: int


class AttackSummary(BaseModel):
    model: str
    engine: str
    seed: int
    budget: int
    attacked: int
    clean_accuracy: float = Field(ge=0.0, le=1.0)
    accuracy_under_attack: float = Field(ge=0.0, le=1.0)
    successes: int
    mean_queries_success: Optional[float] = None
    median_queries_success: Optional[float] = None
    mean_queries: float
    errors: int = 0


class EvalReport(BaseModel):
    config: Dict[str, Any]
    config_hash: str
    noise_mode: str
    selection: Literal["mean", "best"] = "mean"
    checkpoint_hashes: Dict[str, str] = Field(default_factory=dict, description="'seed_<s>/<model>' -> content hash.")
    param_counts: Dict[str, float] = Field(default_factory=dict)
    clean: List[CleanMetrics] = Field(default_factory=list)
    attacks: List[AttackSummary] = Field(default_factory=list)
    summary: List[Dict[str, Any]] = Field(default_factory=list, description="Per (model, engine) aggregate rows.")
