"""Metrics, stratified folds, grid search, nested cross-validation with
99% confidence intervals, and learning curves."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import learners
from .errors import InvalidSizeError, StratificationError


def child_seed(master: int, *parts) -> int:
    """Stable derived seed: same (master, parts) always gives the same
    child, distinct parts give independent streams."""
    ints = [int(master)]
    for p in parts:
        ints.append(zlib.crc32(str(p).encode()) if isinstance(p, str) else int(p))
    return int(np.random.SeedSequence(ints).generate_state(1)[0])


@dataclass(frozen=True)
class Metric:
    kind: str               # binary | macro
    positive: object = None

    @classmethod
    def binary(cls, positive) -> "Metric":
        return cls("binary", positive)

    @classmethod
    def macro(cls) -> "Metric":
        return cls("macro")

    @property
    def name(self) -> str:
        return "f1" if self.kind == "binary" else "f1_macro"

    def score(self, truth, pred) -> float:
        cm = ConfusionMatrix.from_labels(truth, pred)
        if self.kind == "binary":
            return f1_binary(cm, self.positive)
        return f1_macro(cm)


@dataclass
class ConfusionMatrix:
    classes: list
    counts: np.ndarray  # counts[i][j]: true class i predicted as j

    @classmethod
    def from_labels(cls, truth, pred, classes=None) -> "ConfusionMatrix":
        truth = np.asarray(truth)
        pred = np.asarray(pred)
        if classes is None:
            classes = np.unique(np.concatenate([truth, pred]))
        classes = list(classes)
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(truth, pred):
            counts[index[t], index[p]] += 1
        return cls(classes, counts)

    def to_dict(self) -> dict:
        return {
            "classes": [_plain(c) for c in self.classes],
            "counts": self.counts.tolist(),
        }


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


def f1_binary(cm: ConfusionMatrix, positive_class) -> float:
    """2PR/(P+R) for one positive class, evaluated in its equivalent
    count form 2TP/(2TP+FP+FN); 0 when precision+recall is 0."""
    if positive_class not in cm.classes:
        raise ValueError(f"positive class {positive_class!r} not in {cm.classes}")
    i = cm.classes.index(positive_class)
    tp = int(cm.counts[i, i])
    fp = int(cm.counts[:, i].sum()) - tp
    fn = int(cm.counts[i, :].sum()) - tp
    denom = 2 * tp + fp + fn
    if denom == 0:
        return 0.0
    return 2 * tp / denom


def f1_macro(cm: ConfusionMatrix) -> float:
    """Unweighted mean of per-class one-vs-rest F1 scores."""
    if len(cm.classes) < 2:
        raise ValueError("macro F1 needs at least 2 classes")
    return float(np.mean([f1_binary(cm, c) for c in cm.classes]))


def ci99_half_width(scores) -> float:
    """Student-t 99% confidence half-width over fold/repeat scores."""
    scores = np.asarray(scores, dtype=np.float64)
    k = len(scores)
    if k < 2:
        return 0.0
    s = scores.std(ddof=1)
    if s == 0.0:
        return 0.0
    return float(stats.t.ppf(0.995, k - 1) * s / np.sqrt(k))


def stratified_kfold(y, k: int, seed: int) -> list[np.ndarray]:
    """k disjoint index folds with per-class counts differing by at most
    one across folds."""
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes, counts = np.unique(y, return_counts=True)
    for cls, cnt in zip(classes, counts):
        if cnt < k:
            raise StratificationError(_plain(cls), int(cnt), k)
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    start = 0
    for cls in classes:
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(len(idx))]
        for j, ix in enumerate(idx):
            folds[(j + start) % k].append(int(ix))
        start = (start + len(idx)) % k
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


def stratified_holdout(y, test_fraction: float, seed: int):
    """(train_idx, test_idx) with each class split near the requested
    fraction and at least one member on each side."""
    y = np.asarray(y)
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    train: list[int] = []
    test: list[int] = []
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if len(idx) < 2:
            raise StratificationError(_plain(cls), int(len(idx)), 2)
        idx = idx[rng.permutation(len(idx))]
        n_test = int(round(test_fraction * len(idx)))
        n_test = min(max(n_test, 1), len(idx) - 1)
        test.extend(idx[:n_test])
        train.extend(idx[n_test:])
    return np.array(sorted(train), dtype=np.int64), np.array(sorted(test), dtype=np.int64)


def stratified_subsample(y, pool: np.ndarray, size: int, rng) -> np.ndarray:
    """Pick `size` indices out of `pool` preserving class proportions
    (largest-remainder rounding, at least one per class)."""
    y_pool = np.asarray(y)[pool]
    classes, counts = np.unique(y_pool, return_counts=True)
    if size < len(classes):
        raise InvalidSizeError(
            f"size {size} smaller than the class count {len(classes)}"
        )
    exact = counts * (size / len(pool))
    quota = np.maximum(np.floor(exact).astype(int), 1)
    remainder = exact - np.floor(exact)
    short = size - quota.sum()
    if short > 0:
        order = np.lexsort((np.arange(len(classes)), -remainder))
        for i in range(short):
            quota[order[i % len(classes)]] += 1
    elif short < 0:
        order = np.lexsort((np.arange(len(classes)), remainder))
        i = 0
        while short < 0:
            c = order[i % len(classes)]
            if quota[c] > 1:
                quota[c] -= 1
                short += 1
            i += 1
    picked: list[int] = []
    for cls, q in zip(classes, quota):
        idx = pool[y_pool == cls]
        idx = idx[rng.permutation(len(idx))]
        picked.extend(idx[: min(q, len(idx))])
    return np.array(sorted(picked), dtype=np.int64)


def grid_search(alg: str, grid: list[dict], X, y, inner_k: int,
                metric: Metric, seed: int) -> dict:
    """Pick the grid point with the best mean inner-CV score; ties keep
    the earliest declared point."""
    if not grid:
        raise ValueError("grid must not be empty")
    X = np.asarray(X)
    y = np.asarray(y)
    folds = stratified_kfold(y, inner_k, child_seed(seed, "inner-folds"))
    best_params = None
    best_score = -np.inf
    for gi, params in enumerate(grid):
        fold_scores = []
        for fi, test_idx in enumerate(folds):
            train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
            model = learners.fit(alg, params, X[train_idx], y[train_idx],
                                 child_seed(seed, "inner-fit", gi, fi))
            pred = learners.predict(model, X[test_idx])
            fold_scores.append(metric.score(y[test_idx], pred))
        mean = float(np.mean(fold_scores))
        if mean > best_score:
            best_score = mean
            best_params = params
    return dict(best_params)


@dataclass
class EvalReport:
    algorithm: str
    metric_name: str
    fold_scores: list[float]
    mean: float
    ci99: float
    fold_params: list[dict]
    fold_confusions: list[ConfusionMatrix]
    seed: int
    outer_k: int
    inner_k: int

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "algorithm": self.algorithm,
            "metric": self.metric_name,
            "fold_scores": self.fold_scores,
            "mean": self.mean,
            "ci99": self.ci99,
            "fold_params": self.fold_params,
            "fold_confusions": [cm.to_dict() for cm in self.fold_confusions],
            "seed": self.seed,
            "outer_k": self.outer_k,
            "inner_k": self.inner_k,
        }


def nested_cv(alg: str, grid: list[dict], X, y, outer_k: int = 5,
              inner_k: int = 3, metric: Metric | None = None,
              seed: int = 0) -> EvalReport:
    """Outer folds estimate generalization of a model whose parameters
    are chosen by an inner grid search on the outer-training split only."""
    X = np.asarray(X)
    y = np.asarray(y)
    if metric is None:
        metric = Metric.macro()
    folds = stratified_kfold(y, outer_k, child_seed(seed, "outer-folds"))
    scores: list[float] = []
    chosen: list[dict] = []
    cms: list[ConfusionMatrix] = []
    for fi, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        best = grid_search(alg, grid, X[train_idx], y[train_idx], inner_k,
                           metric, child_seed(seed, "outer-grid", fi))
        model = learners.fit(alg, best, X[train_idx], y[train_idx],
                             child_seed(seed, "outer-fit", fi))
        pred = learners.predict(model, X[test_idx])
        scores.append(metric.score(y[test_idx], pred))
        chosen.append(best)
        cms.append(ConfusionMatrix.from_labels(y[test_idx], pred))
    return EvalReport(
        algorithm=alg,
        metric_name=metric.name,
        fold_scores=scores,
        mean=float(np.mean(scores)),
        ci99=ci99_half_width(scores),
        fold_params=chosen,
        fold_confusions=cms,
        seed=seed,
        outer_k=outer_k,
        inner_k=inner_k,
    )


def cv_score(alg: str, params: dict, X, y, k: int, metric: Metric,
             seed: int) -> tuple[float, float, list[float]]:
    """Plain stratified k-fold evaluation with fixed parameters
    (no inner search): (mean, ci99, fold scores)."""
    X = np.asarray(X)
    y = np.asarray(y)
    folds = stratified_kfold(y, k, child_seed(seed, "cv-folds"))
    scores = []
    for fi, test_idx in enumerate(folds):
        train_idx = np.setdiff1d(np.arange(len(y)), test_idx)
        model = learners.fit(alg, params, X[train_idx], y[train_idx],
                             child_seed(seed, "cv-fit", fi))
        pred = learners.predict(model, X[test_idx])
        scores.append(metric.score(y[test_idx], pred))
    return float(np.mean(scores)), ci99_half_width(scores), scores


def learning_curve(alg: str, params: dict, X, y, train_sizes,
                   test_fraction: float = 0.3, seed: int = 0,
                   metric: Metric | None = None,
                   repeats: int = 5) -> list[tuple[int, float, float]]:
    """Score against a fixed held-out split for growing stratified
    training subsets; `repeats` re-draws per size with derived seeds."""
    X = np.asarray(X)
    y = np.asarray(y)
    if metric is None:
        metric = Metric.macro()
    train_idx, test_idx = stratified_holdout(y, test_fraction,
                                             child_seed(seed, "lc-split"))
    sizes = sorted(int(s) for s in train_sizes)
    if sizes and sizes[0] < 1:
        raise InvalidSizeError(f"training size must be >= 1, got {sizes[0]}")
    if sizes and sizes[-1] > len(train_idx):
        raise InvalidSizeError(
            f"training size {sizes[-1]} exceeds available rows {len(train_idx)}"
        )
    out = []
    for size in sizes:
        scores = []
        for r in range(repeats):
            rng = np.random.default_rng(child_seed(seed, "lc-draw", size, r))
            sub = stratified_subsample(y, train_idx, size, rng)
            model = learners.fit(alg, params, X[sub], y[sub],
                                 child_seed(seed, "lc-fit", size, r))
            pred = learners.predict(model, X[test_idx])
            scores.append(metric.score(y[test_idx], pred))
        out.append((size, float(np.mean(scores)), ci99_half_width(scores)))
    return out
