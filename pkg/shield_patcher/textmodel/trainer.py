import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from ..autodiff import AdamState, Tape, adam_step, clip_global_norm, gradient, ops
from ..models.text_models import Dataset, EpochRecord, TrainingHistory
from ..utils.exceptions import InvalidInputError, NumericalError
from .base_model import BaseClassifier, predict_proba

logger = logging.getLogger(__name__)


class EnsembleClassifier:
    """Classical ensemble baseline: members' logits are averaged."""

    def __init__(self, members: Sequence[BaseClassifier]):
        if not members:
            raise InvalidInputError("an ensemble needs at least one member")
        self.members = list(members)
        self.num_classes = self.members[0].num_classes
        self.vocab_size = self.members[0].vocab_size

    def logits(self, sequences: Sequence[Sequence[int]]):
        outs = [m.forward(sequences)[1] for m in self.members]
        total = outs[0]
        for out in outs[1:]:
            total = ops.add(total, out)
        return ops.scale(total, 1.0 / len(outs))

    def predict_proba(self, sequences: Sequence[Sequence[int]], batch_size: int = 256) -> np.ndarray:
        out = []
        for start in range(0, len(sequences), batch_size):
            out.append(ops.softmax(self.logits(sequences[start:start + batch_size]), axis=-1).data)
        return np.concatenate(out, axis=0) if out else np.zeros((0, self.num_classes))

    def num_parameters(self) -> int:
        return sum(m.num_parameters() for m in self.members)

    def freeze(self) -> None:
        for m in self.members:
            m.freeze()


def _check_compatible(train: Dataset, validation: Dataset, model: BaseClassifier) -> None:
    if train.num_classes != validation.num_classes or train.num_classes != model.num_classes:
        raise InvalidInputError(
            f"class counts disagree: train {train.num_classes}, validation {validation.num_classes}, "
            f"model {model.num_classes}")
    if len(train.vocabulary) != len(validation.vocabulary) or len(train.vocabulary) > model.vocab_size:
        raise InvalidInputError("train and validation splits must share the model's vocabulary")


def _mean_nll(models: Sequence[BaseClassifier], dataset: Dataset, batch_size: int = 256) -> float:
    ensemble = EnsembleClassifier(models)
    seqs = [ex.token_ids for ex in dataset.examples]
    total = 0.0
    for start in range(0, len(seqs), batch_size):
        chunk = seqs[start:start + batch_size]
        loss = ops.nll(ensemble.logits(chunk), dataset.labels[start:start + batch_size])
        total += loss.item() * len(chunk)
    return total / max(len(seqs), 1)


def _fit(models: List[BaseClassifier], train: Dataset, validation: Dataset, epochs: int, batch_size: int,
         lr: float, clip: float, patience: int, seed: int, show_progress: bool) -> TrainingHistory:
    """Jointly minimizes the mean of the members' NLL; restores the best validation epoch."""
    history = TrainingHistory()
    params = [p for m in models for p in m.parameters()]
    state = AdamState.for_params(params, lr=lr)
    rng = np.random.default_rng(seed)
    seqs = [ex.token_ids for ex in train.examples]
    labels = np.asarray(train.labels)

    best_loss = _mean_nll(models, validation)
    best_state = [m.state_dict() for m in models]
    stale = 0
    for epoch in tqdm(range(1, epochs + 1), desc="train-base", disable=not show_progress):
        order = rng.permutation(len(seqs))
        running, seen = 0.0, 0
        for batch_idx, start in enumerate(range(0, len(order), batch_size)):
            idx = order[start:start + batch_size]
            batch = [seqs[i] for i in idx]
            with Tape():
                losses = [ops.nll(m.forward(batch)[1], labels[idx]) for m in models]
                loss = losses[0]
                for extra in losses[1:]:
                    loss = ops.add(loss, extra)
                loss = ops.scale(loss, 1.0 / len(models))
            if not np.isfinite(loss.item()):
                logger.error(f"Base training diverged at epoch {epoch}, batch {batch_idx}")
                raise NumericalError("training loss is not finite", stage="train_base", index=(epoch, batch_idx))
            grads = gradient(loss, params)
            adam_step(params, clip_global_norm(grads, clip), state)
            running += loss.item() * len(idx)
            seen += len(idx)

        val_loss = _mean_nll(models, validation)
        history.epochs.append(EpochRecord(epoch=epoch, train_loss=running / max(seen, 1), validation_loss=val_loss))
        logger.debug(f"epoch {epoch}: train {running / max(seen, 1):.4f} validation {val_loss:.4f}")
        if val_loss < best_loss:
            best_loss, stale = val_loss, 0
            best_state = [m.state_dict() for m in models]
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= patience:
                history.stopped_early = True
                logger.info(f"Early stop after epoch {epoch} (best epoch {history.best_epoch})")
                break

    if epochs > 0 and history.best_epoch is None:
        logger.warning("Validation loss never improved on the initialization; keeping initial parameters")
    for m, st in zip(models, best_state):
        m.load_state_dict(st)
        m.freeze()
    return history


def train_base(model: BaseClassifier, train: Dataset, validation: Dataset, epochs: int = 30,
               batch_size: int = 32, lr: float = 0.005, clip: float = 10.0, patience: int = 3,
               seed: int = 0, show_progress: bool = False) -> Tuple[BaseClassifier, TrainingHistory]:
    """
    Minimizes NLL on `train`, keeps the parameters of the best validation-loss epoch
    and freezes the model.

    Raises:
        NumericalError: a non-finite batch loss; `index` is (epoch, batch).
        InvalidInputError: already frozen model, or splits that disagree with it.
    """
    if model.frozen:
        raise InvalidInputError("model is already frozen")
    _check_compatible(train, validation, model)
    history = _fit([model], train, validation, epochs, batch_size, lr, clip, patience, seed, show_progress)
    logger.info(f"Trained base model ({model.encoder} encoder): {len(history.epochs)} epochs, best {history.best_epoch}")
    return model, history


def train_ensemble_baseline(count: int, train: Dataset, validation: Dataset, epochs: int = 30,
                            batch_size: int = 32, lr: float = 0.005, clip: float = 10.0, patience: int = 3,
                            seed: int = 0, show_progress: bool = False,
                            **model_kwargs) -> Tuple[EnsembleClassifier, TrainingHistory]:
    """
    Trains `count` independently initialized base models (seeds seed..seed+count-1)
    jointly on their averaged NLL. `model_kwargs` are BaseClassifier arguments.
    """
    if count < 1:
        raise InvalidInputError(f"ensemble size must be at least 1, got {count}")
    model_kwargs.setdefault("vocab_size", len(train.vocabulary))
    model_kwargs.setdefault("num_classes", train.num_classes)
    model_kwargs.pop("seed", None)
    members = [BaseClassifier(seed=seed + i, **model_kwargs) for i in range(count)]
    _check_compatible(train, validation, members[0])
    history = _fit(members, train, validation, epochs, batch_size, lr, clip, patience, seed, show_progress)
    logger.info(f"Trained ensemble baseline of {count} members: {len(history.epochs)} epochs")
    return EnsembleClassifier(members), history


def predict_labels(model, dataset: Dataset) -> List[int]:
    """Argmax predictions of a base classifier or ensemble over a dataset."""
    seqs = [ex.token_ids for ex in dataset.examples]
    if isinstance(model, EnsembleClassifier):
        probs = model.predict_proba(seqs)
    else:
        probs = predict_proba(model, seqs)
    return [int(i) for i in np.argmax(probs, axis=1)]
