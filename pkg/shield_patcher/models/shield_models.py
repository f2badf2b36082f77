from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

NoiseMode = Literal["fresh", "input-seeded", "zero"]
Variant = Literal["full", "se-only", "me-only"]
Phase = Literal["train", "inference"]


class ShieldConfig(BaseModel):
    num_heads: int = Field(default=5, ge=1, description="K, number of expert heads.")
    num_candidates: int = Field(default=3, ge=1, description="T, candidate subnetworks per head.")
    candidate_depths: Optional[List[int]] = Field(
        default=None, description="Hidden-layer count of each candidate; defaults to 1..T.")
    gamma: float = Field(default=0.5, ge=0.0, description="Weight of the expert-diversity loss.")
    tau_train: float = Field(default=0.1, gt=0.0, description="Gumbel-Softmax temperature while training.")
    tau_infer: float = Field(default=0.1, gt=0.0, description="Gumbel-Softmax temperature at inference.")
    hidden_width: int = Field(default=64, ge=1, description="H, width of every candidate hidden layer.")
    noise_mode: NoiseMode = "fresh"
    seed: int = 0

    epochs: int = Field(default=30, ge=0)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=0.005, gt=0.0)
    clip: float = Field(default=10.0, gt=0.0)
    patience: int = Field(default=3, ge=1)
    beta_batches: int = Field(default=8, ge=1, description="Validation mini-batches per architecture step.")
    fd_step: float = Field(default=1e-3, gt=0.0, description="Central-difference step for the selection-logit gradient.")

    @model_validator(mode="after")
    def _check_depths(self) -> "ShieldConfig":
        if self.candidate_depths is not None:
            if len(self.candidate_depths) != self.num_candidates:
                raise ValueError("candidate_depths must list one depth per candidate")
            if any(d < 1 for d in self.candidate_depths):
                raise ValueError("candidate depths must be at least 1")
        return self

    @property
    def depths(self) -> List[int]:
        return list(self.candidate_depths) if self.candidate_depths else list(range(1, self.num_candidates + 1))
