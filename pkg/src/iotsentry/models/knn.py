from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelError
from .dataset import Label, LabeledDataset, Normalization, normalize

DEFAULT_K = 5


@dataclass
class KnnModel:
    k: int
    rows: np.ndarray        # normalised training rows
    labels: np.ndarray      # 0 / 1
    normalization: Normalization

    kind = "knn"

    def __post_init__(self):
        if self.k < 1 or self.k % 2 == 0:
            raise ModelError("BAD_HYPERPARAMETER", f"k must be odd and positive, got {self.k}")
        if self.k > self.rows.shape[0]:
            raise ModelError("BAD_HYPERPARAMETER", f"k={self.k} exceeds {self.rows.shape[0]} stored rows")
        # feature-major copy: reducing over the short axis is much faster
        self._cols = np.ascontiguousarray(self.rows.T)

    def _vote(self, z: np.ndarray) -> int:
        d2 = ((self._cols - z[:, None]) ** 2).sum(axis=0)
        kth = np.partition(d2, self.k - 1)[self.k - 1]
        closer = np.flatnonzero(d2 < kth)
        # rows tied at the k-th distance are taken in index order (earlier row wins)
        tied = np.flatnonzero(d2 == kth)[: self.k - closer.size]
        votes = self.labels[closer].sum() + self.labels[tied].sum()
        return int(2 * votes > self.k)

    def predict_code(self, fv) -> int:
        return self._vote(self.normalization.transform(fv))

    def predict(self, fv) -> Label:
        return Label.from_code(self.predict_code(fv))

    def predict_many(self, X) -> np.ndarray:
        Z = self.normalization.transform(X)
        return np.array([self._vote(z) for z in Z], dtype=np.int64)


def knn_train(dataset: LabeledDataset, k: int = DEFAULT_K) -> KnnModel:
    if len(dataset) == 0:
        raise ModelError("EMPTY_DATASET", "kNN needs at least one row")
    scaled, params = normalize(dataset)
    return KnnModel(k, scaled.X, scaled.y.copy(), params)


def knn_predict(model: KnnModel, fv) -> Label:
    return model.predict(fv)
