"""Gaussian naive Bayes with variance smoothing."""

from __future__ import annotations

import numpy as np

LOG_2PI = np.log(2.0 * np.pi)


class GaussianNBModel:
    kind = "gnb"

    def __init__(self, means, variances, log_priors):
        self.means = means            # (K, d)
        self.variances = variances    # (K, d), smoothed
        self.log_priors = log_priors  # (K,)

    @classmethod
    def fit(cls, X, y, n_classes, params, seed):
        if params["var_smoothing"] < 0:
            raise ValueError("var_smoothing must be >= 0")
        n, d = X.shape
        means = np.zeros((n_classes, d))
        variances = np.zeros((n_classes, d))
        priors = np.zeros(n_classes)
        for k in range(n_classes):
            rows = X[y == k]
            means[k] = rows.mean(axis=0)
            variances[k] = rows.var(axis=0)
            priors[k] = len(rows) / n
        # guard zero-variance (e.g. padded) columns
        eps = params["var_smoothing"] * max(float(X.var(axis=0).max()), 0.0)
        variances += eps
        variances[variances == 0.0] = 1e-300
        return cls(means, variances, np.log(priors))

    def joint_log_likelihood(self, X) -> np.ndarray:
        n = len(X)
        out = np.zeros((n, len(self.log_priors)))
        for k in range(len(self.log_priors)):
            var = self.variances[k]
            diff = X - self.means[k]
            out[:, k] = self.log_priors[k] - 0.5 * np.sum(
                LOG_2PI + np.log(var) + diff * diff / var, axis=1
            )
        return out

    def class_probabilities(self, X) -> np.ndarray:
        """Posterior rows, each summing to 1."""
        jll = self.joint_log_likelihood(X)
        jll -= jll.max(axis=1, keepdims=True)
        p = np.exp(jll)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.joint_log_likelihood(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "means": self.means.tolist(),
            "variances": self.variances.tolist(),
            "log_priors": self.log_priors.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict):
        return cls(
            np.array(d["means"]),
            np.array(d["variances"]),
            np.array(d["log_priors"]),
        )
