"""Versioned JSON model files carrying parameters and provenance."""

from __future__ import annotations

import json

import numpy as np

from .data import Standardization
from .mlp import MlpModel
from .svm import BinarySvm, SvmModel

MODEL_FORMAT_VERSION = 1


class ModelIoError(ValueError):
    pass


def _std_to_dict(std):
    if std is None:
        return None
    return {"mean": std.mean.tolist(), "sd": std.sd.tolist()}


def _std_from_dict(d):
    if d is None:
        return None
    return Standardization(mean=np.array(d["mean"]), sd=np.array(d["sd"]))


def save_model(model, path, standardization=None, sensor_mask=(), dataset_hash="", extra=None):
    if isinstance(model, SvmModel):
        body = {
            "type": "svm",
            "kernel": model.kernel,
            "gamma": model.gamma,
            "C": model.C,
            "feature_dim": model.feature_dim,
            "class_names": list(model.class_names),
            "machines": [
                {
                    "support_vectors": m.support_vectors.tolist(),
                    "dual_coef": m.dual_coef.tolist(),
                    "bias": m.bias,
                    "platt_a": m.platt_a,
                    "platt_b": m.platt_b,
                }
                for m in model.machines
            ],
        }
    elif isinstance(model, MlpModel):
        body = {
            "type": "mlp",
            "layer_sizes": list(model.layer_sizes),
            "class_names": list(model.class_names),
            "weights": [w.tolist() for w in model.weights],
            "biases": [b.tolist() for b in model.biases],
            "activation": model.activation,
        }
    else:
        raise ModelIoError(f"cannot serialize model of type {type(model).__name__}")
    doc = {
        "format": MODEL_FORMAT_VERSION,
        "standardization": _std_to_dict(standardization),
        "sensor_mask": list(sensor_mask),
        "dataset_hash": dataset_hash,
        "model": body,
    }
    if extra:
        doc["extra"] = extra
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f)
        f.write("\n")


def load_model(path):
    """Returns (model, standardization, sensor_mask, dataset_hash)."""
    with open(path, "r", encoding="utf-8") as f:
        doc = json.load(f)
    if doc.get("format") != MODEL_FORMAT_VERSION:
        raise ModelIoError(f"unsupported model format {doc.get('format')!r}")
    body = doc["model"]
    if body["type"] == "svm":
        model = SvmModel(
            machines=[
                BinarySvm(
                    support_vectors=np.array(m["support_vectors"], dtype=float),
                    dual_coef=np.array(m["dual_coef"], dtype=float),
                    bias=float(m["bias"]),
                    platt_a=float(m["platt_a"]),
                    platt_b=float(m["platt_b"]),
                )
                for m in body["machines"]
            ],
            class_names=tuple(body["class_names"]),
            kernel=body["kernel"],
            gamma=float(body["gamma"]),
            C=float(body["C"]),
            feature_dim=int(body["feature_dim"]),
        )
    elif body["type"] == "mlp":
        model = MlpModel(
            layer_sizes=tuple(body["layer_sizes"]),
            weights=[np.array(w, dtype=float) for w in body["weights"]],
            biases=[np.array(b, dtype=float) for b in body["biases"]],
            class_names=tuple(body["class_names"]),
            activation=body.get("activation", "relu"),
        )
    else:
        raise ModelIoError(f"unknown model type {body['type']!r}")
    return (
        model,
        _std_from_dict(doc.get("standardization")),
        tuple(doc.get("sensor_mask", ())),
        doc.get("dataset_hash", ""),
    )
