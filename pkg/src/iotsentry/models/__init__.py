"""Benign/anomalous classifiers over burst feature vectors."""

from __future__ import annotations

from ..errors import ModelError
from .autoencoder import AutoencoderModel, ae_predict, ae_train
from .dataset import Label, LabeledDataset, Normalization, fit_normalization, normalize
from .knn import KnnModel, knn_predict, knn_train
from .metrics import EvalMetrics, confusion, evaluate, metrics_from_counts
from .store import load_model, save_model
from .tree import DecisionTreeModel, RandomForestModel, dt_predict, dt_train, rf_predict, rf_train

MODEL_KINDS = ("knn", "dtree", "rforest", "autoenc")


def train_model(kind: str, dataset: LabeledDataset, seed: int = 0, **params):
    """Train one of MODEL_KINDS.  The autoencoder sees only BENIGN rows."""
    if kind == "knn":
        return knn_train(dataset, **params)
    if kind == "dtree":
        return dt_train(dataset, seed=seed, **params)
    if kind == "rforest":
        return rf_train(dataset, seed=seed, **params)
    if kind == "autoenc":
        return ae_train(dataset.benign(), seed=seed, **params)
    raise ModelError("MODEL_KIND_UNKNOWN", f"unknown model kind {kind!r}; choose from {', '.join(MODEL_KINDS)}")


__all__ = [
    "MODEL_KINDS", "train_model", "Label", "LabeledDataset", "Normalization", "fit_normalization",
    "normalize", "KnnModel", "knn_train", "knn_predict", "DecisionTreeModel", "RandomForestModel",
    "dt_train", "dt_predict", "rf_train", "rf_predict", "AutoencoderModel", "ae_train", "ae_predict",
    "EvalMetrics", "evaluate", "confusion", "metrics_from_counts", "save_model", "load_model",
]
