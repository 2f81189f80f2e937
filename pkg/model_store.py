"""
Versioned JSON persistence for trained linear models.

Floats are written with 17 significant digits, so a save/load round trip is
bit-exact.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from dataset import write_text_atomic
from errors import ModelError, ModelFormatError, ModelVersionError
from features import FeatureConfig, FeatureKind
from learn import LabelSpace, LinearModel, ModelKind, Standardizer, Task

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

REQUIRED_KEYS = (
    "format_version", "kind", "task", "labels", "feature_kind",
    "feature_config", "standardizer", "weights",
)


def _format_float(value: float) -> str:
    text = format(float(value), ".17g")
    if "." not in text and "e" not in text:
        # keep a float token so -0.0 survives parsing
        text += ".0"
    return text


def _encode(value: Any, indent: int = 0) -> str:
    """Encode dicts, lists and arrays, formatting every float with 17 digits."""
    pad = "  " * (indent + 1)
    if isinstance(value, dict):
        if not value:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent + 1)}" for k, v in value.items()]
        return "{\n" + ",\n".join(items) + "\n" + "  " * indent + "}"
    if isinstance(value, np.ndarray):
        if value.ndim == 1:
            return "[" + ", ".join(_format_float(v) for v in value) + "]"
        rows = [pad + _encode(row, indent + 1) for row in value]
        return "[\n" + ",\n".join(rows) + "\n" + "  " * indent + "]"
    if isinstance(value, float):
        return _format_float(value)
    return json.dumps(value)


def model_to_dict(model: LinearModel) -> Dict[str, Any]:
    """Build the persisted document for a model."""
    feature_config = model.feature_config.to_dict() if model.feature_config else {}
    return {
        "format_version": FORMAT_VERSION,
        "kind": model.kind.value,
        "task": model.label_space.task.value,
        "labels": list(model.label_space.labels),
        "feature_kind": model.feature_kind.value,
        "feature_config": feature_config,
        "config_fingerprint": model.config_fingerprint,
        "standardizer": {
            "mean": np.asarray(model.standardizer.mean, dtype=np.float64),
            "scale": np.asarray(model.standardizer.scale, dtype=np.float64),
        },
        "weights": model.weights,
    }


def dumps_model(model: LinearModel) -> str:
    return _encode(model_to_dict(model)) + "\n"


def save_model(model: LinearModel, path: Union[str, Path]) -> None:
    """
    Write a model file atomically (temporary file, then rename).

    Args:
        model: Trained model
        path: Destination path
    """
    write_text_atomic(path, dumps_model(model))
    logger.info(f"Saved {model.kind.value} model to {path}")


def model_from_dict(doc: Dict[str, Any]) -> LinearModel:
    """Rebuild a model from its persisted document."""
    if not isinstance(doc, dict):
        raise ModelFormatError("model document must be a JSON object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"unsupported model format_version {version!r}; expected {FORMAT_VERSION}"
        )
    missing = [key for key in REQUIRED_KEYS if key not in doc]
    if missing:
        raise ModelFormatError(f"model document is missing keys: {missing}")

    try:
        feature_config = FeatureConfig.from_dict(doc["feature_config"]) if doc["feature_config"] else None
        weights = np.array(doc["weights"], dtype=np.float64)
        standardizer = Standardizer(
            mean=np.array(doc["standardizer"]["mean"], dtype=np.float64),
            scale=np.array(doc["standardizer"]["scale"], dtype=np.float64),
        )
        label_space = LabelSpace(task=Task(doc["task"]), labels=tuple(doc["labels"]))
        model = LinearModel(
            kind=ModelKind(doc["kind"]),
            label_space=label_space,
            weights=weights,
            feature_kind=FeatureKind(doc["feature_kind"]),
            feature_dim=weights.shape[1] - 1,
            config_fingerprint=doc.get("config_fingerprint", ""),
            standardizer=standardizer,
            feature_config=feature_config,
        )
    except ModelFormatError:
        raise
    except (ModelError, KeyError, TypeError, ValueError, IndexError) as e:
        raise ModelFormatError(f"malformed model document: {e}") from e

    if standardizer.mean.shape != (model.feature_dim,) or standardizer.scale.shape != (model.feature_dim,):
        raise ModelFormatError("standardizer length does not match the weight rows")
    if feature_config is not None and model.config_fingerprint != feature_config.fingerprint():
        raise ModelFormatError("config_fingerprint does not match feature_config")
    return model


def load_model(path: Union[str, Path]) -> LinearModel:
    """
    Load a model file, failing loudly on unknown format versions.

    Args:
        path: Path of a file written by save_model

    Returns:
        The reconstructed LinearModel
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except FileNotFoundError as e:
        raise ModelFormatError("model file not found", path=str(path)) from e
    except OSError as e:
        raise ModelFormatError(f"cannot read model file: {e.strerror or e}", path=str(path)) from e
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFormatError(f"model file is not valid JSON: {e}", path=str(path)) from e

    try:
        model = model_from_dict(doc)
    except ModelFormatError as e:
        e.path = str(path)
        raise
    logger.debug(f"Loaded {model.kind.value} model from {path}")
    return model
