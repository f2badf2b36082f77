import copy
import hashlib
import json
import logging
import os
from typing import Any, Dict, Optional

from pydantic import ValidationError

from ..models.experiment_models import ExperimentConfig
from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)


def default_config_path() -> str:
    current_dir = os.path.dirname(os.path.abspath(__file__))
    return os.path.join(os.path.dirname(current_dir), "config", "defaults.json")


def _read_json(path: str) -> Dict[str, Any]:
    try:
        logger.info(f"Loading configuration from: {path}")
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        err_msg = f"Configuration file not found at {path}."
        logger.error(err_msg)
        raise ConfigurationError(err_msg) from None
    except json.JSONDecodeError as e:
        err_msg = f"Error decoding JSON from configuration file {path}: {e}."
        logger.error(err_msg)
        raise ConfigurationError(err_msg) from e
    if not isinstance(data, dict):
        raise ConfigurationError(f"Configuration file {path} must hold a JSON object, got {type(data).__name__}.")
    return data


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merges `override` into a copy of `base`; non-dict values replace."""
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def load_experiment_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """
    Loads the bundled defaults, deep-merges the user's JSON file and then the
    overrides on top, and validates the result.

    Args:
        path: Optional user configuration file.
        overrides: Nested dict of values to apply last (CLI flags); None values are skipped.

    Raises:
        ConfigurationError: missing or malformed file, or a configuration that fails
                            validation (the offending fields are listed).
    """
    data = _read_json(default_config_path())
    if path is not None:
        data = deep_merge(data, _read_json(path))
    if overrides:
        data = deep_merge(data, _drop_none(overrides))
    try:
        config = ExperimentConfig(**data)
    except ValidationError as e:
        fields = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        err_msg = f"Invalid configuration: {fields}"
        logger.error(err_msg)
        raise ConfigurationError(err_msg) from e
    logger.info(f"Configuration resolved (hash {config_hash(config)[:12]})")
    return config


def _drop_none(values: Dict[str, Any]) -> Dict[str, Any]:
    out = {}
    for key, value in values.items():
        if isinstance(value, dict):
            nested = _drop_none(value)
            if nested:
                out[key] = nested
        elif value is not None:
            out[key] = value
    return out


def config_hash(config: ExperimentConfig) -> str:
    canonical = json.dumps(config.model_dump(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
