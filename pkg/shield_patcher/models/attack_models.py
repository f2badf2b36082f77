from typing import List, Literal, Optional

from pydantic import BaseModel, Field, model_validator

Engine = Literal["greedy-char", "greedy-word", "genetic-word"]
CharTransform = Literal["swap", "substitute", "delete", "insert"]
VerificationMode = Literal["single", "majority"]

WORD_ENGINES = ("greedy-word", "genetic-word")


class AttackConfig(BaseModel):
    engine: Engine = "greedy-word"
    budget: int = Field(default=2000, ge=1, description="Maximum victim queries per example.")
    num_candidates: int = Field(default=8, ge=0, description="k nearest words tried per position.")
    min_similarity: float = Field(default=0.5, description="Minimum cosine similarity of a word substitute.")
    max_perturb_fraction: float = Field(default=0.3, gt=0.0, le=1.0)
    char_transforms: List[CharTransform] = Field(default_factory=lambda: ["swap", "substitute", "delete", "insert"])
    min_token_length: int = Field(default=3, ge=1)
    population_size: int = Field(default=20, ge=1)
    elitism: int = Field(default=2, ge=0)
    mutation_rate: float = Field(default=0.3, ge=0.0, le=1.0)
    max_generations: Optional[int] = Field(default=None, ge=1,
                                           description="Generation cap; None runs until the budget is spent.")
    verification: VerificationMode = "single"
    majority_votes: int = Field(default=5, ge=1)

    @model_validator(mode="after")
    def _check_population(self) -> "AttackConfig":
        if self.elitism > self.population_size:
            raise ValueError("elitism cannot exceed the population size")
        return self

    @property
    def verification_queries(self) -> int:
        return 1 if self.verification == "single" else self.majority_votes


class AttackResult(BaseModel):
    example_index: int
    engine: Engine
    gold: int
    original_tokens: List[str]
    perturbed_tokens: List[str]
    success: bool = False
    clean_misclassified: bool = Field(default=False, description="The victim already erred on the clean input.")
    queries_used: int = 0
    budget: int
    score_trace: List[float] = Field(default_factory=list, description="Attack score after each accepted step.")
    error: Optional[str] = None

    @model_validator(mode="after")
    def _check_accounting(self) -> "AttackResult":
        if self.queries_used > self.budget:
            raise ValueError(f"queries_used {self.queries_used} exceeds budget {self.budget}")
        return self

    @property
    def num_perturbed(self) -> int:
        return sum(1 for a, b in zip(self.original_tokens, self.perturbed_tokens) if a != b)
