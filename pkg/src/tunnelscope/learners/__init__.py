"""Classifier families with a uniform fit/predict contract.

Seven algorithms: decision tree (dt), random forest (rf), Gaussian naive
Bayes (gnb), k-nearest neighbors (knn), linear SGD with hinge loss
(sv-sgd) or logistic loss (lr-sgd), and AdaBoost over stumps (ab).
Default hyperparameters and grid-search ranges live here; fits are
deterministic functions of (X, y, params, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import (
    DegenerateTrainingError,
    InvalidModelInputError,
    UnsupportedModelError,
)
from .boosting import AdaBoostModel
from .linear import LinearSGDModel
from .naive_bayes import GaussianNBModel
from .neighbors import KNNModel
from .trees import DecisionTreeModel, RandomForestModel

MODEL_FORMAT_VERSION = 1

_TREE_GRID = [
    {"criterion": c, "min_samples_split": m}
    for c in ("gini", "entropy")
    for m in (2, 3, 4, 5, 10, 50, 100)
]
_SGD_GRID = [{"alpha": 10.0 ** e} for e in range(-8, 2)]

DEFAULTS: dict[str, dict] = {
    "dt": {"criterion": "gini", "min_samples_split": 2},
    "rf": {
        "criterion": "gini",
        "min_samples_split": 2,
        "n_trees": 100,
        "max_features": "sqrt",
        "bootstrap": True,
    },
    "gnb": {"var_smoothing": 1e-9},
    "knn": {"n_neighbors": 5},
    "sv-sgd": {"alpha": 1e-4, "epochs": 50},
    "lr-sgd": {"alpha": 1e-4, "epochs": 50},
    "ab": {"learning_rate": 1.0, "n_estimators": 50},
}

GRIDS: dict[str, list[dict]] = {
    "dt": _TREE_GRID,
    "rf": _TREE_GRID,
    "gnb": [{}],
    "knn": [{"n_neighbors": k} for k in (1, 5, 10, 50)],
    "sv-sgd": _SGD_GRID,
    "lr-sgd": _SGD_GRID,
    "ab": [{"learning_rate": 10.0 ** e} for e in range(-3, 2)],
}

ALGORITHM_IDS = tuple(DEFAULTS)

_IMPL = {
    "dt": DecisionTreeModel,
    "rf": RandomForestModel,
    "gnb": GaussianNBModel,
    "knn": KNNModel,
    "sv-sgd": LinearSGDModel,
    "lr-sgd": LinearSGDModel,
    "ab": AdaBoostModel,
}


def default_params(alg: str) -> dict:
    _check_alg(alg)
    return dict(DEFAULTS[alg])


def default_grid(alg: str) -> list[dict]:
    _check_alg(alg)
    return [dict(p) for p in GRIDS[alg]]


def _check_alg(alg: str):
    if alg not in DEFAULTS:
        raise ValueError(f"unknown algorithm {alg!r}; choose from {ALGORITHM_IDS}")


@dataclass
class TrainedModel:
    algorithm: str
    params: dict
    classes: np.ndarray
    n_features: int
    seed: int
    impl: object


def fit(alg: str, params: dict | None, X, y, seed: int = 0) -> TrainedModel:
    """Train one classifier. Partial param dicts are completed from the
    algorithm defaults; unknown keys are rejected."""
    _check_alg(alg)
    merged = dict(DEFAULTS[alg])
    for key, value in (params or {}).items():
        if key not in merged:
            raise ValueError(f"unknown parameter {key!r} for algorithm {alg!r}")
        merged[key] = value

    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise InvalidModelInputError("X must be a 2-D matrix")
    if not np.all(np.isfinite(X)):
        raise InvalidModelInputError("X contains NaN or infinite values")
    y = np.asarray(y)
    if len(y) != len(X):
        raise InvalidModelInputError("X and y disagree on row count")
    if len(X) < 2:
        raise DegenerateTrainingError("need at least 2 training rows")
    classes, y_enc = np.unique(y, return_inverse=True)
    if len(classes) < 2:
        raise DegenerateTrainingError(
            f"training labels contain a single class {classes[0]!r}"
        )

    impl_cls = _IMPL[alg]
    if alg == "sv-sgd":
        impl = impl_cls.fit(X, y_enc, len(classes), merged, seed, loss="hinge")
    elif alg == "lr-sgd":
        impl = impl_cls.fit(X, y_enc, len(classes), merged, seed, loss="log")
    else:
        impl = impl_cls.fit(X, y_enc, len(classes), merged, seed)
    return TrainedModel(alg, merged, classes, X.shape[1], seed, impl)


def predict(model: TrainedModel, X) -> np.ndarray:
    """One label per row; ties between classes break toward the lowest
    class index."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.n_features:
        raise InvalidModelInputError(
            f"expected {model.n_features} feature columns, got "
            f"{X.shape[1] if X.ndim == 2 else 'non-matrix'}"
        )
    if not np.all(np.isfinite(X)):
        raise InvalidModelInputError("X contains NaN or infinite values")
    return model.classes[model.impl.predict(X)]


def mdi_importance(model: TrainedModel) -> np.ndarray:
    """Mean-decrease-in-impurity importances, normalized to sum 1
    (uniform when no split ever reduced impurity)."""
    if model.algorithm not in ("dt", "rf"):
        raise UnsupportedModelError(
            f"MDI importance needs a tree-based model, not {model.algorithm!r}"
        )
    raw = model.impl.feature_importances(model.n_features)
    total = raw.sum()
    if total <= 0:
        return np.full(model.n_features, 1.0 / model.n_features)
    return raw / total


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "algorithm": model.algorithm,
        "params": model.params,
        "classes": model.classes.tolist(),
        "n_features": model.n_features,
        "seed": model.seed,
        "state": model.impl.to_dict(),
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_FORMAT_VERSION:
        raise InvalidModelInputError(
            f"unsupported model format version {doc.get('format_version')!r}"
        )
    alg = doc["algorithm"]
    _check_alg(alg)
    impl = _IMPL[alg].from_dict(doc["state"])
    return TrainedModel(
        algorithm=alg,
        params=doc["params"],
        classes=np.array(doc["classes"]),
        n_features=doc["n_features"],
        seed=doc["seed"],
        impl=impl,
    )
