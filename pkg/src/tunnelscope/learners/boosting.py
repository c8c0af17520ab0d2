"""AdaBoost (multiclass SAMME) over depth-1 decision stumps."""

from __future__ import annotations

import numpy as np

from .trees import Tree, build_tree

_ERR_FLOOR = 1e-10


class AdaBoostModel:
    kind = "ab"

    def __init__(self, stumps: list[Tree], alphas: list[float], n_classes: int):
        self.stumps = stumps
        self.alphas = alphas
        self.n_classes = n_classes

    @classmethod
    def fit(cls, X, y, n_classes, params, seed):
        lr = params["learning_rate"]
        if lr <= 0:
            raise ValueError("learning_rate must be positive")
        n = len(y)
        w = np.full(n, 1.0 / n)
        stumps: list[Tree] = []
        alphas: list[float] = []
        for _ in range(params["n_estimators"]):
            stump = build_tree(X, y, n_classes, criterion="gini",
                               min_samples_split=2, max_features="all",
                               sample_weight=w, max_depth=1)
            pred = np.argmax(stump.predict_dist(X), axis=1)
            incorrect = pred != y
            err = float(w[incorrect].sum())
            if err >= 1.0 - 1.0 / n_classes:
                # no better than chance; stop boosting
                break
            alpha = lr * (np.log((1.0 - max(err, _ERR_FLOOR)) / max(err, _ERR_FLOOR))
                          + np.log(n_classes - 1.0))
            stumps.append(stump)
            alphas.append(float(alpha))
            if err <= 0.0:
                break
            w = w * np.exp(alpha * incorrect)
            w /= w.sum()
        if not stumps:
            # keep one unweighted stump so the model still predicts
            stump = build_tree(X, y, n_classes, criterion="gini",
                               min_samples_split=2, max_features="all",
                               max_depth=1)
            stumps.append(stump)
            alphas.append(1.0)
        return cls(stumps, alphas, n_classes)

    def predict(self, X) -> np.ndarray:
        scores = np.zeros((len(X), self.n_classes))
        for stump, alpha in zip(self.stumps, self.alphas):
            pred = np.argmax(stump.predict_dist(X), axis=1)
            scores[np.arange(len(X)), pred] += alpha
        return np.argmax(scores, axis=1)

    def to_dict(self) -> dict:
        return {
            "stumps": [s.to_dict() for s in self.stumps],
            "alphas": self.alphas,
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls([Tree.from_dict(s) for s in d["stumps"]], d["alphas"],
                   d["n_classes"])
