"""
JSON checkpoints for base classifiers, ensemble baselines and SHIELD patches.

Parameters are stored as {"shape": [...], "values": [...flat...]}; each
checkpoint's identity is the sha256 of its canonical parameter JSON.
"""
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..models.shield_models import ShieldConfig
from ..models.text_models import Vocabulary
from ..shield.model import ShieldModel, patch
from ..textmodel.base_model import BaseClassifier
from ..textmodel.trainer import EnsembleClassifier
from .exceptions import CheckpointError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def _encode(array: np.ndarray) -> Dict[str, Any]:
    return {"shape": list(array.shape), "values": [float(v) for v in np.asarray(array).reshape(-1)]}


def _decode(blob: Dict[str, Any]) -> np.ndarray:
    try:
        return np.asarray(blob["values"], dtype=np.float64).reshape(blob["shape"])
    except (KeyError, ValueError, TypeError) as e:
        raise CheckpointError(f"malformed parameter block: {e}") from e


def content_hash(params: Dict[str, Any]) -> str:
    canonical = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def base_hash(model: BaseClassifier) -> str:
    return content_hash({name: _encode(values) for name, values in model.state_dict().items()})


def _write(path: str, payload: Dict[str, Any]) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, sort_keys=True)
    logger.info(f"Wrote checkpoint {path}")


def _read(path: str, kind: str) -> Dict[str, Any]:
    if not os.path.exists(path):
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Checkpoint {path} is not valid JSON: {e}") from e
    if payload.get("kind") != kind:
        raise CheckpointError(f"Checkpoint {path} holds a '{payload.get('kind')}' model, expected '{kind}'")
    return payload


def _base_payload(model: BaseClassifier) -> Dict[str, Any]:
    params = {name: _encode(values) for name, values in model.state_dict().items()}
    return {"architecture": model.architecture(), "params": params, "hash": content_hash(params)}


def _base_from_payload(block: Dict[str, Any]) -> BaseClassifier:
    try:
        model = BaseClassifier(**block["architecture"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"malformed base architecture: {e}") from e
    try:
        model.load_state_dict({name: _decode(values) for name, values in block["params"].items()})
    except KeyError as e:
        raise CheckpointError(f"checkpoint lacks parameter {e}") from e
    model.freeze()
    return model


def save_base(model: BaseClassifier, path: str, vocabulary: Vocabulary, label_names: List[str],
              metadata: Optional[Dict[str, Any]] = None) -> str:
    """Writes a frozen base model with its vocabulary; returns the content hash."""
    payload = {"kind": "base", "version": FORMAT_VERSION, **_base_payload(model),
               "vocabulary": vocabulary.id_to_token, "label_names": label_names, "metadata": metadata or {}}
    _write(path, payload)
    return payload["hash"]


def load_base(path: str) -> Tuple[BaseClassifier, Vocabulary, List[str], str]:
    """Returns (frozen model, vocabulary, label names, content hash)."""
    payload = _read(path, "base")
    model = _base_from_payload(payload)
    digest = base_hash(model)
    if digest != payload.get("hash"):
        raise CheckpointError(f"Checkpoint {path} is corrupted: parameter hash does not match")
    return model, Vocabulary(id_to_token=payload["vocabulary"]), list(payload["label_names"]), digest


def save_ensemble(ensemble: EnsembleClassifier, path: str) -> str:
    members = [_base_payload(m) for m in ensemble.members]
    digest = content_hash({"members": [m["hash"] for m in members]})
    _write(path, {"kind": "ensemble", "version": FORMAT_VERSION, "members": members, "hash": digest})
    return digest


def load_ensemble(path: str) -> EnsembleClassifier:
    """Rebuilds every member; each member hash and the combined hash must match the stored ones."""
    payload = _read(path, "ensemble")
    members, digests = [], []
    for i, block in enumerate(payload.get("members", [])):
        member = _base_from_payload(block)
        digest = base_hash(member)
        if digest != block.get("hash"):
            raise CheckpointError(f"Checkpoint {path} is corrupted: member {i} parameter hash does not match")
        members.append(member)
        digests.append(digest)
    if not members:
        raise CheckpointError(f"Checkpoint {path} holds no ensemble members")
    if content_hash({"members": digests}) != payload.get("hash"):
        raise CheckpointError(f"Checkpoint {path} is corrupted: ensemble hash does not match")
    return EnsembleClassifier(members)


def _shield_params(model: ShieldModel) -> Dict[str, Any]:
    return {
        "beta": _encode(model.beta.data),
        "gate_w": _encode(model.gate_w.data),
        "gate_b": _encode(model.gate_b.data),
        "heads": [[[[_encode(w.data), _encode(b.data)] for w, b in cand] for cand in head] for head in model.heads],
    }


def save_shield(model: ShieldModel, path: str, base_digest: Optional[str] = None) -> str:
    """Writes a patch; the base model is referenced by hash, not embedded."""
    params = _shield_params(model)
    digest = content_hash(params)
    _write(path, {"kind": "shield", "version": FORMAT_VERSION, "config": model.config.model_dump(),
                  "variant": model.variant, "phase": model.phase, "params": params, "hash": digest,
                  "base_hash": base_digest or base_hash(model.base)})
    return digest


def load_shield(path: str, base: BaseClassifier) -> ShieldModel:
    """
    Rebuilds a patch on top of `base`.

    Raises:
        CheckpointError: unreadable or corrupted file, or `base` is not the model the patch was trained on.
    """
    payload = _read(path, "shield")
    if payload.get("base_hash") != base_hash(base):
        raise CheckpointError(f"Patch {path} was trained on a different base model (hash mismatch)")
    model = patch(base, ShieldConfig(**payload["config"]), variant=payload["variant"])
    params = payload["params"]
    model.beta.data = _decode(params["beta"])
    model.gate_w.data = _decode(params["gate_w"])
    model.gate_b.data = _decode(params["gate_b"])
    for head, stored_head in zip(model.heads, params["heads"]):
        for cand, stored_cand in zip(head, stored_head):
            for (w, b), (sw, sb) in zip(cand, stored_cand):
                w.data, b.data = _decode(sw), _decode(sb)
    if content_hash(_shield_params(model)) != payload.get("hash"):
        raise CheckpointError(f"Checkpoint {path} is corrupted: parameter hash does not match")
    model.phase = payload["phase"]
    return model
