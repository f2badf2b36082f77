import logging
from typing import Optional, Tuple

import numpy as np
from tqdm import tqdm

from ..autodiff import AdamState, Tape, adam_step, clip_global_norm, gradient
from ..models.text_models import Dataset, EpochRecord, TrainingHistory
from ..textmodel.base_model import precompute_features
from ..utils.exceptions import InvalidInputError, NumericalError
from .losses import draw_training_noise, grad_beta, loss_se
from .model import ShieldBatch, ShieldModel, discretize

logger = logging.getLogger(__name__)

_VALIDATION_NOISE_OFFSET = 7919


def _batch(features: np.ndarray, dataset: Dataset, idx: np.ndarray) -> ShieldBatch:
    return ShieldBatch(features=features[idx], labels=np.asarray([dataset.examples[i].label for i in idx]),
                       token_ids=[dataset.examples[i].token_ids for i in idx])


def _validation_loss(model: ShieldModel, features: np.ndarray, dataset: Dataset, batch_size: int,
                     epoch: int) -> float:
    # same draws every epoch so early stopping compares like with like
    rng = np.random.default_rng(model.config.seed + _VALIDATION_NOISE_OFFSET)
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        idx = np.arange(start, min(start + batch_size, len(dataset)))
        try:
            total += loss_se(model, _batch(features, dataset, idx), rng).item() * len(idx)
        except NumericalError as e:
            raise NumericalError(e.message, stage="train_shield/validation", index=(epoch, start // batch_size)) from e
    return total / len(dataset)


def _searches_architecture(model: ShieldModel) -> bool:
    return model.variant != "se-only" and model.num_candidates > 1


def train_shield(model: ShieldModel, train: Dataset, validation: Dataset, epochs: Optional[int] = None,
                 rng: Optional[np.random.Generator] = None,
                 show_progress: bool = False) -> Tuple[ShieldModel, TrainingHistory]:
    """
    Alternating training of a patched model.

    Each epoch first fits the gate and candidate parameters on `train` with beta
    held fixed (loss_se), then updates beta by Adam on the finite-difference
    gradient of loss_me over `beta_batches` validation mini-batches. Both steps
    clip the global gradient norm. Early stopping watches validation loss_se;
    the best epoch's parameters are restored and beta is discretized.

    Raises:
        NumericalError: divergence; `stage` names the step and `index` is (epoch, batch).
    """
    if not model.base.frozen:
        raise InvalidInputError("the base model must stay frozen while training SHIELD")
    if model.phase != "train":
        raise InvalidInputError("model is already discretized")
    if len(train) == 0 or len(validation) == 0:
        raise InvalidInputError("train and validation splits must be non-empty")
    if train.num_classes != model.num_classes:
        raise InvalidInputError(f"dataset has {train.num_classes} classes, base model {model.num_classes}")

    cfg = model.config
    epochs = cfg.epochs if epochs is None else epochs
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    history = TrainingHistory()
    if epochs == 0:
        return discretize(model), history

    train_feats = precompute_features(model.base, [ex.token_ids for ex in train.examples])
    val_feats = precompute_features(model.base, [ex.token_ids for ex in validation.examples])
    params = model.parameters()
    weights_state = AdamState.for_params(params, lr=cfg.lr)
    beta_state = AdamState.for_params([model.beta], lr=cfg.lr)
    search = _searches_architecture(model)

    best_loss = _validation_loss(model, val_feats, validation, cfg.batch_size, epoch=0)
    best = model.snapshot()
    stale = 0
    for epoch in tqdm(range(1, epochs + 1), desc=f"shield[{model.variant}]", disable=not show_progress):
        order = rng.permutation(len(train))
        running = 0.0
        for batch_idx, start in enumerate(range(0, len(order), cfg.batch_size)):
            batch = _batch(train_feats, train, order[start:start + cfg.batch_size])
            noise = draw_training_noise(model, len(batch), rng)
            try:
                with Tape():
                    loss = loss_se(model, batch, noise=noise)
            except NumericalError as e:
                logger.error(f"SHIELD weight step diverged at epoch {epoch}, batch {batch_idx}")
                raise NumericalError(e.message, stage="train_shield/weights", index=(epoch, batch_idx)) from e
            grads = gradient(loss, params)
            adam_step(params, clip_global_norm(grads, cfg.clip), weights_state)
            running += loss.item() * len(batch)

        beta_norm = 0.0
        if search:
            for batch_idx in range(cfg.beta_batches):
                idx = rng.choice(len(validation), size=min(cfg.batch_size, len(validation)), replace=False)
                try:
                    g = grad_beta(model, _batch(val_feats, validation, np.sort(idx)), cfg.gamma, rng)
                except NumericalError as e:
                    logger.error(f"SHIELD architecture step diverged at epoch {epoch}, batch {batch_idx}")
                    raise NumericalError(e.message, stage="train_shield/beta",
                                         index=(epoch, batch_idx, e.index)) from e
                clipped = clip_global_norm([g], cfg.clip)
                beta_norm = float(np.linalg.norm(clipped[0]))
                adam_step([model.beta], clipped, beta_state)

        val_loss = _validation_loss(model, val_feats, validation, cfg.batch_size, epoch)
        history.epochs.append(EpochRecord(epoch=epoch, train_loss=running / len(train), validation_loss=val_loss,
                                          extra={"beta_grad_norm": beta_norm}))
        logger.debug(f"shield epoch {epoch}: train {running / len(train):.4f} validation {val_loss:.4f}")
        if val_loss < best_loss:
            best_loss, stale, best = val_loss, 0, model.snapshot()
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                history.stopped_early = True
                logger.info(f"Early stop after epoch {epoch} (best epoch {history.best_epoch})")
                break

    if history.best_epoch is None:
        logger.warning("Validation loss never improved on the initial patch; keeping initial parameters")
    model.restore(best)
    return discretize(model), history
