"""Brute-force k-nearest-neighbors on standardized features."""

from __future__ import annotations

import numpy as np

from .scaling import Standardizer

_CHUNK = 256


class KNNModel:
    kind = "knn"

    def __init__(self, scaler: Standardizer, X: np.ndarray, y: np.ndarray,
                 k: int, n_classes: int):
        self.scaler = scaler
        self.X = X  # standardized training rows
        self.y = y
        self.k = k
        self.n_classes = n_classes

    @classmethod
    def fit(cls, X, y, n_classes, params, seed):
        k = params["n_neighbors"]
        if k < 1:
            raise ValueError("n_neighbors must be >= 1")
        scaler = Standardizer.fit(X)
        return cls(scaler, scaler.transform(X), y.copy(), min(k, len(y)), n_classes)

    def predict(self, X) -> np.ndarray:
        Q = self.scaler.transform(X)
        out = np.zeros(len(Q), dtype=np.int64)
        train_sq = (self.X * self.X).sum(axis=1)
        for start in range(0, len(Q), _CHUNK):
            q = Q[start : start + _CHUNK]
            d2 = train_sq - 2.0 * (q @ self.X.T) + (q * q).sum(axis=1)[:, None]
            for i in range(len(q)):
                # ties at the k-th distance resolved by training index
                cand = np.argpartition(d2[i], min(self.k, len(d2[i]) - 1))[: self.k] \
                    if self.k < len(d2[i]) else np.arange(len(d2[i]))
                cand = cand[np.lexsort((cand, d2[i][cand]))][: self.k]
                votes = np.bincount(self.y[cand], minlength=self.n_classes)
                out[start + i] = int(np.argmax(votes))
        return out

    def to_dict(self) -> dict:
        return {
            "scaler": self.scaler.to_dict(),
            "X": self.X.tolist(),
            "y": self.y.tolist(),
            "k": self.k,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls(
            Standardizer.from_dict(d["scaler"]),
            np.array(d["X"], dtype=np.float64),
            np.array(d["y"], dtype=np.int64),
            d["k"],
            d["n_classes"],
        )
