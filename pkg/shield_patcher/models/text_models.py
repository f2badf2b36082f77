from typing import Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"
PAD_ID = 0
UNK_ID = 1
MAX_SEQUENCE_LENGTH = 64

Split = Literal["train", "validation", "test"]


class Vocabulary(BaseModel):
    id_to_token: List[str] = Field(default_factory=lambda: [PAD_TOKEN, UNK_TOKEN],
                                   description="Tokens by id; ids 0 and 1 are padding and unknown.")
    _token_to_id: Dict[str, int] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def _check_reserved(self) -> "Vocabulary":
        if self.id_to_token[:2] != [PAD_TOKEN, UNK_TOKEN]:
            raise ValueError("ids 0 and 1 must be the padding and unknown tokens")
        if len(set(self.id_to_token)) != len(self.id_to_token):
            raise ValueError("vocabulary tokens must be distinct")
        self._token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        return self

    @property
    def token_to_id(self) -> Dict[str, int]:
        return self._token_to_id

    def __len__(self) -> int:
        return len(self.id_to_token)

    def add(self, token: str) -> int:
        if token not in self._token_to_id:
            self._token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self._token_to_id[token]

    def lookup(self, token: str) -> int:
        return self._token_to_id.get(token, UNK_ID)

    def encode(self, tokens: Sequence[str], max_length: int = MAX_SEQUENCE_LENGTH) -> List[int]:
        return [self.lookup(t) for t in tokens[:max_length]]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.id_to_token[i] for i in ids]


class Example(BaseModel):
    token_ids: List[int] = Field(description="Token ids of the (truncated) example.")
    label: int = Field(ge=0, description="Gold label id.")
    text: Optional[str] = Field(default=None, description="Original text, when known.")

    @model_validator(mode="after")
    def _non_empty(self) -> "Example":
        if not self.token_ids:
            raise ValueError("example token sequence must be non-empty")
        return self


class Dataset(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    examples: List[Example] = Field(default_factory=list)
    num_classes: int = Field(ge=1, description="Number of labels M.")
    split: Split = "train"
    label_names: Optional[List[str]] = Field(default=None, description="Label strings by id, when loaded from text labels.")
    vocabulary: Vocabulary = Field(description="Vocabulary the token ids refer to.")

    @model_validator(mode="after")
    def _check_examples(self) -> "Dataset":
        size = len(self.vocabulary)
        for i, ex in enumerate(self.examples):
            if ex.label >= self.num_classes:
                raise ValueError(f"example {i}: label {ex.label} >= num_classes {self.num_classes}")
            if max(ex.token_ids) >= size or min(ex.token_ids) < 0:
                raise ValueError(f"example {i}: token id outside vocabulary of size {size}")
        return self

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def labels(self) -> List[int]:
        return [ex.label for ex in self.examples]

    def class_distribution(self) -> Dict[int, int]:
        counts = {c: 0 for c in range(self.num_classes)}
        for ex in self.examples:
            counts[ex.label] += 1
        return counts

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset(examples=[self.examples[i] for i in indices], num_classes=self.num_classes,
                       split=self.split, label_names=self.label_names, vocabulary=self.vocabulary)

    def label_name(self, label: int) -> str:
        return self.label_names[label] if self.label_names else str(label)


class SyntheticCorpusSpec(BaseModel):
    vocab_size: int = Field(default=3000, ge=8, description="Number of non-reserved words V.")
    num_classes: int = Field(default=2, ge=2, description="Number of labels M.")
    signal_tokens_per_class: int = Field(default=40, ge=1)
    min_length: int = Field(default=8, ge=1)
    max_length: int = Field(default=20, ge=1)
    noise: float = Field(default=0.05, ge=0.0, le=1.0,
                         description="Per-position probability of a distractor signal word from another class.")
    train_size: int = Field(default=2000, gt=0)
    validation_size: int = Field(default=500, gt=0)
    test_size: int = Field(default=500, gt=0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_lengths(self) -> "SyntheticCorpusSpec":
        if self.min_length > self.max_length:
            raise ValueError("min_length must not exceed max_length")
        return self

    @property
    def split_sizes(self) -> Tuple[int, int, int]:
        return self.train_size, self.validation_size, self.test_size


class EpochRecord(BaseModel):
    epoch: int
    train_loss: float
    validation_loss: float
    extra: Dict[str, float] = Field(default_factory=dict)


class TrainingHistory(BaseModel):
    epochs: List[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = None
    stopped_early: bool = False

    @property
    def train_losses(self) -> List[float]:
        return [e.train_loss for e in self.epochs]

    @property
    def validation_losses(self) -> List[float]:
        return [e.validation_loss for e in self.epochs]
