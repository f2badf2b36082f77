import logging
from typing import Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np

from ..autodiff import Tensor, ops
from ..models.text_models import MAX_SEQUENCE_LENGTH, PAD_ID
from ..utils.exceptions import InvalidInputError

logger = logging.getLogger(__name__)

EncoderKind = Literal["mean", "cnn"]
_INVALID_WINDOW = -1e9


def pad_batch(sequences: Sequence[Sequence[int]], min_length: int = 1) -> Tuple[np.ndarray, np.ndarray]:
    """Right-pads id sequences (truncated to the maximum length) into (ids, mask) arrays."""
    seqs = [list(s)[:MAX_SEQUENCE_LENGTH] for s in sequences]
    if any(not s for s in seqs):
        raise InvalidInputError("cannot encode an empty token sequence")
    width = max(min_length, max(len(s) for s in seqs))
    ids = np.full((len(seqs), width), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), width))
    for i, s in enumerate(seqs):
        ids[i, :len(s)] = s
        mask[i, :len(s)] = 1.0
    return ids, mask


class BaseClassifier:
    """
    Embedding -> encoder -> linear head text classifier.

    The encoder output is the Q-dimensional representation that a SHIELD patch
    consumes; `head_w`/`head_b` are the original last layer it replaces.
    """

    def __init__(self, vocab_size: int, num_classes: int, embedding_dim: int = 64, hidden_dim: int = 64,
                 encoder: EncoderKind = "mean", num_filters: int = 32,
                 kernel_widths: Sequence[int] = (2, 3, 4), seed: int = 0):
        if encoder not in ("mean", "cnn"):
            raise InvalidInputError(f"Unknown encoder '{encoder}'")
        self.vocab_size = vocab_size
        self.num_classes = num_classes
        self.embedding_dim = embedding_dim
        self.hidden_dim = hidden_dim
        self.encoder = encoder
        self.num_filters = num_filters
        self.kernel_widths = tuple(kernel_widths)
        self.seed = seed
        self.frozen = False

        rng = np.random.default_rng(seed)
        self.params: Dict[str, Tensor] = {}
        emb = rng.normal(0.0, 1.0 / np.sqrt(embedding_dim), size=(vocab_size, embedding_dim))
        emb[PAD_ID] = 0.0
        self._add("embedding", emb)
        if encoder == "mean":
            self._add("enc_w", _uniform(rng, embedding_dim, (embedding_dim, hidden_dim)))
            self._add("enc_b", np.zeros(hidden_dim))
        else:
            for k in self.kernel_widths:
                self._add(f"conv{k}_w", _uniform(rng, k * embedding_dim, (k * embedding_dim, num_filters)))
                self._add(f"conv{k}_b", np.zeros(num_filters))
        self._add("head_w", _uniform(rng, self.feature_dim, (self.feature_dim, num_classes)))
        self._add("head_b", np.zeros(num_classes))

    def _add(self, name: str, values: np.ndarray) -> None:
        self.params[name] = Tensor(values, requires_grad=True, name=name)

    @property
    def feature_dim(self) -> int:
        if self.encoder == "mean":
            return self.hidden_dim
        return self.num_filters * len(self.kernel_widths)

    def parameters(self) -> List[Tensor]:
        return list(self.params.values())

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def freeze(self) -> None:
        """Marks every parameter constant and read-only."""
        for p in self.params.values():
            p.requires_grad = False
            p.data.flags.writeable = False
        self.frozen = True

    def min_length(self) -> int:
        return max(self.kernel_widths) if self.encoder == "cnn" else 1

    def check_ids(self, ids: np.ndarray) -> None:
        if ids.size and (ids.min() < 0 or ids.max() >= self.vocab_size):
            raise InvalidInputError(f"token id out of range for vocabulary of size {self.vocab_size}")

    def embed(self, ids: np.ndarray) -> Tensor:
        self.check_ids(ids)
        return ops.embedding(self.params["embedding"], ids)

    def encode(self, emb: Tensor, mask: np.ndarray) -> Tensor:
        """(B, L, D) embeddings and (B, L) mask -> (B, Q) features."""
        if self.encoder == "mean":
            summed = ops.sum(ops.mul(emb, mask[:, :, None]), axis=1)
            pooled = ops.div(summed, mask.sum(axis=1, keepdims=True))
            return ops.relu(ops.add(ops.matmul(pooled, self.params["enc_w"]), self.params["enc_b"]))

        lengths = mask.sum(axis=1)
        pooled = []
        for k in self.kernel_widths:
            windows = ops.unfold1d(emb, k)
            conv = ops.relu(ops.add(ops.matmul(windows, self.params[f"conv{k}_w"]), self.params[f"conv{k}_b"]))
            positions = windows.shape[1]
            valid = (np.arange(positions)[None, :] + k <= lengths[:, None]) | (np.arange(positions)[None, :] == 0)
            penalty = np.where(valid, 0.0, _INVALID_WINDOW)[:, :, None]
            pooled.append(ops.max(ops.add(conv, penalty), axis=1))
        return ops.concat(pooled, axis=1)

    def head(self, features: Tensor) -> Tensor:
        return ops.add(ops.matmul(features, self.params["head_w"]), self.params["head_b"])

    def features(self, sequences: Sequence[Sequence[int]]) -> Tensor:
        ids, mask = pad_batch(sequences, self.min_length())
        return self.encode(self.embed(ids), mask)

    def forward(self, sequences: Sequence[Sequence[int]]) -> Tuple[Tensor, Tensor]:
        feats = self.features(sequences)
        return feats, self.head(feats)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            values = np.asarray(state[name], dtype=np.float64)
            if values.shape != p.shape:
                raise InvalidInputError(f"parameter '{name}' has shape {values.shape}, expected {p.shape}")
            writeable = p.data.flags.writeable
            p.data = values.copy()
            p.data.flags.writeable = writeable

    def architecture(self) -> Dict[str, object]:
        return {
            "vocab_size": self.vocab_size, "num_classes": self.num_classes,
            "embedding_dim": self.embedding_dim, "hidden_dim": self.hidden_dim,
            "encoder": self.encoder, "num_filters": self.num_filters,
            "kernel_widths": list(self.kernel_widths), "seed": self.seed,
        }


def _uniform(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def forward_base(model: BaseClassifier, example: Sequence[int]) -> Tuple[np.ndarray, np.ndarray]:
    """Features (Q,) and original-head logits (M,) for one example, without recording."""
    if len(example) == 0:
        raise InvalidInputError("example must contain at least one token")
    feats, logits = model.forward([example])
    return feats.data[0].copy(), logits.data[0].copy()


def predict_proba(model: BaseClassifier, sequences: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(sequences), batch_size):
        _, logits = model.forward(sequences[start:start + batch_size])
        out.append(ops.softmax(logits, axis=-1).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.num_classes))


def precompute_features(model: BaseClassifier, sequences: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
    out = []
    for start in range(0, len(sequences), batch_size):
        out.append(model.features(sequences[start:start + batch_size]).data)
    return np.concatenate(out, axis=0) if out else np.zeros((0, model.feature_dim))
