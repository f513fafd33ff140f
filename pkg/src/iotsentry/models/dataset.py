"""Labelled feature datasets and min-max normalisation."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ModelError


class Label(str, enum.Enum):
    BENIGN = "BENIGN"
    ANOMALOUS = "ANOMALOUS"

    @property
    def code(self) -> int:
        return 1 if self is Label.ANOMALOUS else 0

    @classmethod
    def from_code(cls, code) -> "Label":
        return cls.ANOMALOUS if int(code) else cls.BENIGN


@dataclass
class Normalization:
    mins: np.ndarray
    maxs: np.ndarray

    def __post_init__(self):
        self.mins = np.asarray(self.mins, dtype=float)
        self.maxs = np.asarray(self.maxs, dtype=float)

    @property
    def dim(self) -> int:
        return self.mins.shape[0]

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        span = self.maxs - self.mins
        const = span == 0
        out = (X - self.mins) / np.where(const, 1.0, span)
        if const.any():
            out[..., const] = 0.5
        return out

    def to_dict(self) -> dict:
        return {"mins": self.mins.tolist(), "maxs": self.maxs.tolist()}


@dataclass
class LabeledDataset:
    """Rows of raw feature vectors with BENIGN(0)/ANOMALOUS(1) labels.

    ``meta`` optionally carries one provenance tuple per row; it is not
    used by any model.
    """

    X: np.ndarray
    y: np.ndarray
    normalization: Optional[Normalization] = None
    meta: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim == 1:
            self.X = self.X.reshape(0 if self.X.size == 0 else 1, -1)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.shape[0] != self.y.shape[0]:
            raise ModelError("DIMENSION_MISMATCH", f"{self.X.shape[0]} rows but {self.y.shape[0]} labels")

    def __len__(self):
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        meta = [self.meta[i] for i in idx] if self.meta else []
        return LabeledDataset(self.X[idx], self.y[idx], self.normalization, meta)

    def benign(self) -> "LabeledDataset":
        return self.subset(np.flatnonzero(self.y == 0))

    def split(self, train_fraction: float = 0.7, seed: int = 0) -> tuple["LabeledDataset", "LabeledDataset"]:
        perm = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(train_fraction * len(self)))
        return self.subset(np.sort(perm[:cut])), self.subset(np.sort(perm[cut:]))

    def class_counts(self) -> dict[str, int]:
        return {"BENIGN": int((self.y == 0).sum()), "ANOMALOUS": int((self.y == 1).sum())}


def fit_normalization(X) -> Normalization:
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 0:
        raise ModelError("EMPTY_DATASET", "cannot normalise an empty dataset")
    return Normalization(X.min(axis=0), X.max(axis=0))


def normalize(dataset: LabeledDataset) -> tuple[LabeledDataset, Normalization]:
    """Min-max scale every feature to [0, 1] with training-set bounds.

    Constant features map to 0.5.  The returned params are what inference
    must reuse.
    """
    if len(dataset) == 0:
        raise ModelError("EMPTY_DATASET", "cannot normalise an empty dataset")
    params = fit_normalization(dataset.X)
    scaled = LabeledDataset(params.transform(dataset.X), dataset.y.copy(), params, list(dataset.meta))
    return scaled, params
