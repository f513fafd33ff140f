"""JSON model files tagged with their kind, dimension and hyperparameters."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ModelError
from .autoencoder import AutoencoderModel, AutoencoderWeights
from .dataset import Normalization
from .knn import KnnModel
from .tree import DecisionTreeModel, RandomForestModel

MODEL_FORMAT = "iotsentry-model"
MODEL_VERSION = 1


def _tree_to_dict(t: DecisionTreeModel) -> dict:
    return {
        "feature": t.feature.tolist(),
        "threshold": t.threshold.tolist(),
        "left": t.left.tolist(),
        "right": t.right.tolist(),
        "value": t.value.tolist(),
        "counts": t.counts.tolist(),
        "max_depth": t.max_depth,
        "min_samples_leaf": t.min_samples_leaf,
    }


def _tree_from_dict(d: dict, normalization=None) -> DecisionTreeModel:
    return DecisionTreeModel(
        np.array(d["feature"], dtype=np.int64),
        np.array(d["threshold"], dtype=float),
        np.array(d["left"], dtype=np.int64),
        np.array(d["right"], dtype=np.int64),
        np.array(d["value"], dtype=np.int64),
        np.array(d["counts"], dtype=np.int64).reshape(-1, 2),
        int(d["max_depth"]),
        int(d["min_samples_leaf"]),
        normalization,
    )


def model_to_dict(model) -> dict:
    norm = model.normalization
    doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "kind": model.kind,
           "dim": norm.dim, "normalization": norm.to_dict()}
    if isinstance(model, KnnModel):
        doc["hyperparameters"] = {"k": model.k}
        doc["rows"] = model.rows.tolist()
        doc["labels"] = model.labels.tolist()
    elif isinstance(model, DecisionTreeModel):
        doc["hyperparameters"] = {"max_depth": model.max_depth, "min_samples_leaf": model.min_samples_leaf}
        doc["tree"] = _tree_to_dict(model)
    elif isinstance(model, RandomForestModel):
        doc["hyperparameters"] = {
            "n_trees": len(model.trees), "features_per_split": model.features_per_split,
            "bootstrap": model.bootstrap, "seed": model.seed,
            "max_depth": model.max_depth, "min_samples_leaf": model.min_samples_leaf,
        }
        doc["tree_seeds"] = model.tree_seeds
        doc["trees"] = [_tree_to_dict(t) for t in model.trees]
    elif isinstance(model, AutoencoderModel):
        doc["hyperparameters"] = {"h": model.hidden, "epochs": model.epochs,
                                  "learning_rate": model.learning_rate, "seed": model.seed}
        doc["weights"] = {k: getattr(model.weights, k).tolist() for k in AutoencoderWeights.NAMES}
        doc["reconstruction_threshold"] = model.reconstruction_threshold
    else:
        raise ModelError("UNKNOWN_MODEL", f"cannot serialise {type(model).__name__}")
    return doc


def model_from_dict(doc: dict, expected_dim: Optional[int] = None):
    if doc.get("format") != MODEL_FORMAT:
        raise ModelError("BAD_MODEL_FILE", "not a model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelError("BAD_MODEL_FILE", f"unsupported model version {doc.get('version')}")
    dim = int(doc["dim"])
    if expected_dim is not None and dim != expected_dim:
        raise ModelError("DIMENSION_MISMATCH", f"model has dimension {dim}, expected {expected_dim}",
                         model_dim=dim, expected_dim=expected_dim)
    norm = Normalization(doc["normalization"]["mins"], doc["normalization"]["maxs"])
    if norm.dim != dim:
        raise ModelError("DIMENSION_MISMATCH", f"normalisation covers {norm.dim} features, header says {dim}")
    hp = doc.get("hyperparameters", {})
    kind = doc.get("kind")
    if kind == KnnModel.kind:
        return KnnModel(int(hp["k"]), np.array(doc["rows"], dtype=float).reshape(-1, dim),
                        np.array(doc["labels"], dtype=np.int64), norm)
    if kind == DecisionTreeModel.kind:
        return _tree_from_dict(doc["tree"], norm)
    if kind == RandomForestModel.kind:
        trees = [_tree_from_dict(t) for t in doc["trees"]]
        return RandomForestModel(trees, list(doc["tree_seeds"]), int(hp["features_per_split"]),
                                 bool(hp["bootstrap"]), norm, int(hp["seed"]),
                                 int(hp["max_depth"]), int(hp["min_samples_leaf"]))
    if kind == AutoencoderModel.kind:
        w = AutoencoderWeights(*(np.array(doc["weights"][k], dtype=float) for k in AutoencoderWeights.NAMES))
        if w.W1.shape[0] != dim:
            raise ModelError("DIMENSION_MISMATCH", f"encoder input is {w.W1.shape[0]}, header says {dim}")
        return AutoencoderModel(w, float(doc["reconstruction_threshold"]), norm, int(hp["h"]),
                                int(hp["epochs"]), float(hp["learning_rate"]), int(hp["seed"]))
    raise ModelError("UNKNOWN_MODEL", f"unknown model kind {kind!r}")


def save_model(path, model) -> Path:
    path = Path(path)
    path.write_text(json.dumps(model_to_dict(model)))
    return path


def load_model(path, expected_dim: Optional[int] = None):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelError("BAD_MODEL_FILE", f"{path}: {exc}") from exc
    return model_from_dict(doc, expected_dim)
