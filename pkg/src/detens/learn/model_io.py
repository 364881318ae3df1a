"""JSON model files with base64-embedded little-endian float32 weights.

One file per (network, class): ``<dir>/<model_name>__<class>.svm.json`` and
``<dir>/<model_name>__<class>.bbox.json``.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from ..exceptions import ParseError
from ..io import atomic_write
from .regression import BBoxRegressor
from .svm import SvmModel

SVM_SCHEMA = "detens.svm/1"
BBOX_SCHEMA = "detens.bbox/1"


def _b64(arr) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f4").tobytes()).decode("ascii")


def _unb64(text, shape) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(text), dtype="<f4").astype(np.float64)
    if arr.size != int(np.prod(shape)):
        raise ParseError(f"weight array has {arr.size} values, expected shape {shape}")
    return arr.reshape(shape)


def _slug(name):
    return name.replace(" ", "_").replace("/", "_")


def svm_path(directory, model_name, class_name) -> Path:
    return Path(directory) / f"{_slug(model_name)}__{_slug(class_name)}.svm.json"


def bbox_path(directory, model_name, class_name) -> Path:
    return Path(directory) / f"{_slug(model_name)}__{_slug(class_name)}.bbox.json"


def svm_to_json(model: SvmModel, model_name="") -> str:
    doc = {
        "schema": SVM_SCHEMA,
        "model_name": model_name,
        "class_name": model.class_name,
        "feature_dim": model.feature_dim,
        "weights": _b64(model.weights),
        "bias": model.bias,
        "c_param": model.c_param,
        "metadata": model.metadata,
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def svm_from_json(text) -> SvmModel:
    doc = json.loads(text)
    if doc.get("schema") != SVM_SCHEMA:
        raise ParseError(f"unsupported SVM model schema {doc.get('schema')!r}")
    w = _unb64(doc["weights"], (doc["feature_dim"],))
    return SvmModel(doc["class_name"], w, doc["bias"], doc["c_param"], doc.get("metadata", {}))


def regressor_to_json(reg: BBoxRegressor, model_name="") -> str:
    doc = {
        "schema": BBOX_SCHEMA,
        "model_name": model_name,
        "class_name": reg.class_name,
        "feature_dim": int(reg.n_features_in_),
        "weights": _b64(reg.coef_),
        "biases": [float(b) for b in reg.intercept_],
        "ridge_lambda": float(reg.ridge_lambda),
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def regressor_from_json(text) -> BBoxRegressor:
    doc = json.loads(text)
    if doc.get("schema") != BBOX_SCHEMA:
        raise ParseError(f"unsupported bbox model schema {doc.get('schema')!r}")
    dim = int(doc["feature_dim"])
    reg = BBoxRegressor(ridge_lambda=doc["ridge_lambda"], class_name=doc["class_name"])
    reg.coef_ = _unb64(doc["weights"], (4, dim))
    reg.intercept_ = np.asarray(doc["biases"], dtype=np.float64)
    reg.n_features_in_ = dim
    return reg


def save_svm(model, directory, model_name):
    path = svm_path(directory, model_name, model.class_name)
    atomic_write(path, svm_to_json(model, model_name))
    return path


def save_regressor(reg, directory, model_name):
    path = bbox_path(directory, model_name, reg.class_name)
    atomic_write(path, regressor_to_json(reg, model_name))
    return path


def load_svms(directory, model_name=None) -> dict:
    """All SVM files in ``directory`` (optionally for one network), keyed by class."""
    out = {}
    for p in sorted(Path(directory).glob("*.svm.json")):
        text = p.read_text(encoding="utf-8")
        if model_name is not None and json.loads(text).get("model_name") != model_name:
            continue
        m = svm_from_json(text)
        out[m.class_name] = m
    return out


def load_regressors(directory, model_name=None) -> dict:
    out = {}
    for p in sorted(Path(directory).glob("*.bbox.json")):
        text = p.read_text(encoding="utf-8")
        if model_name is not None and json.loads(text).get("model_name") != model_name:
            continue
        r = regressor_from_json(text)
        out[r.class_name] = r
    return out
