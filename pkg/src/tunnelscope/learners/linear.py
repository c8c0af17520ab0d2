"""One-vs-rest linear classifiers trained with SGD (hinge or logistic
loss, L2 penalty), on internally standardized features.

Learning rate follows the inverse schedule eta_t = 1/(alpha*(t0 + t))
with t0 set so the first steps match the expected weight magnitude
(Bottou's heuristic). The L2 shrink factor is clamped at zero, which
only matters for the first few steps when alpha is large.
"""

from __future__ import annotations

import numpy as np

from .scaling import Standardizer

LOSSES = ("hinge", "log")


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


class LinearSGDModel:
    kind = "sgd"

    def __init__(self, scaler: Standardizer, W: np.ndarray, B: np.ndarray, loss: str):
        self.scaler = scaler
        self.W = W  # (K, d)
        self.B = B  # (K,)
        self.loss = loss

    @classmethod
    def fit(cls, X, y, n_classes, params, seed, loss="hinge"):
        if loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        alpha = params["alpha"]
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        epochs = params["epochs"]
        scaler = Standardizer.fit(X)
        Xs = scaler.transform(X)
        n, d = Xs.shape

        Y = np.full((n_classes, n), -1.0)
        Y[y, np.arange(n)] = 1.0

        typw = np.sqrt(1.0 / np.sqrt(alpha))
        t0 = 1.0 / (typw * alpha)

        W = np.zeros((n_classes, d))
        B = np.zeros(n_classes)
        rng = np.random.default_rng(seed)
        t = 0
        for _ in range(epochs):
            for i in rng.permutation(n):
                x = Xs[i]
                yb = Y[:, i]
                eta = 1.0 / (alpha * (t0 + t))
                t += 1
                p = W @ x + B
                W *= max(1.0 - eta * alpha, 0.0)
                if loss == "hinge":
                    active = (yb * p < 1.0).astype(np.float64)
                    step = eta * yb * active
                else:
                    step = eta * yb * _sigmoid(-yb * p)
                W += step[:, None] * x[None, :]
                B += step
        return cls(scaler, W, B, loss)

    def decision_function(self, X) -> np.ndarray:
        return self.scaler.transform(X) @ self.W.T + self.B

    def class_scores(self, X) -> np.ndarray:
        """Per-class sigmoid of the decision value (one-vs-rest, not
        normalized across classes); 0.5 exactly on a class boundary."""
        return _sigmoid(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "scaler": self.scaler.to_dict(),
            "W": self.W.tolist(),
            "B": self.B.tolist(),
            "loss": self.loss,
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls(
            Standardizer.from_dict(d["scaler"]),
            np.array(d["W"], dtype=np.float64),
            np.array(d["B"], dtype=np.float64),
            d["loss"],
        )
