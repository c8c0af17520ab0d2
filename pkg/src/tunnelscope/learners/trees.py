"""CART decision trees and random forests on numpy arrays.

Split search is exhaustive over candidate thresholds placed at midpoints
between consecutive distinct sorted values; the first strictly best
(feature, threshold) in scan order wins, which keeps training
deterministic for a fixed seed. Trees are stored as flat parallel arrays
so they serialize to JSON directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CRITERIA = ("gini", "entropy")


def node_impurity(counts: np.ndarray, criterion: str) -> float:
    total = counts.sum()
    if total <= 0:
        return 0.0
    p = counts / total
    if criterion == "gini":
        return float(1.0 - np.sum(p * p))
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


@dataclass
class Tree:
    """Flattened binary tree; feature == -1 marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray          # weighted sample count per node
    value: np.ndarray           # (n_nodes, n_classes) class probabilities
    n_classes: int

    def predict_dist(self, X: np.ndarray) -> np.ndarray:
        """Class-probability rows from the leaf each sample lands in."""
        node = np.zeros(len(X), dtype=np.int64)
        while True:
            feat = self.feature[node]
            active = np.flatnonzero(feat >= 0)
            if active.size == 0:
                break
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]

    def mdi(self) -> np.ndarray:
        """Per-feature impurity decrease weighted by node sample fraction."""
        n_features = int(self.feature.max()) + 1 if len(self.feature) else 0
        out = np.zeros(max(n_features, 0), dtype=np.float64)
        root_w = self.weight[0]
        for i in range(len(self.feature)):
            f = self.feature[i]
            if f < 0:
                continue
            l, r = self.left[i], self.right[i]
            drop = (
                self.weight[i] * self.impurity[i]
                - self.weight[l] * self.impurity[l]
                - self.weight[r] * self.impurity[r]
            )
            out[f] += drop / root_w
        return out

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "impurity": self.impurity.tolist(),
            "weight": self.weight.tolist(),
            "value": self.value.tolist(),
            "n_classes": self.n_classes,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(
            feature=np.array(d["feature"], dtype=np.int64),
            threshold=np.array(d["threshold"], dtype=np.float64),
            left=np.array(d["left"], dtype=np.int64),
            right=np.array(d["right"], dtype=np.int64),
            impurity=np.array(d["impurity"], dtype=np.float64),
            weight=np.array(d["weight"], dtype=np.float64),
            value=np.array(d["value"], dtype=np.float64),
            n_classes=d["n_classes"],
        )


def best_split(vals: np.ndarray, y: np.ndarray, w: np.ndarray, n_classes: int,
               criterion: str):
    """Best midpoint threshold on one feature; returns (cost, threshold)
    or None when the feature is constant on this node."""
    order = np.argsort(vals, kind="stable")
    sv = vals[order]
    sy = y[order]
    sw = w[order]
    cut = np.flatnonzero(sv[:-1] < sv[1:])
    if cut.size == 0:
        return None

    m = len(sv)
    cw = np.zeros((m, n_classes), dtype=np.float64)
    cw[np.arange(m), sy] = sw
    cum = np.cumsum(cw, axis=0)
    total = cum[-1]
    w_total = total.sum()

    left = cum[cut]
    right = total - left
    wl = left.sum(axis=1)
    wr = right.sum(axis=1)

    if criterion == "gini":
        # minimizing weighted gini == maximizing sum(c^2)/w per side
        score = (left * left).sum(axis=1) / wl + (right * right).sum(axis=1) / wr
        cost = w_total - score
    else:
        pl = left / wl[:, None]
        pr = right / wr[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            hl = -np.where(pl > 0, pl * np.log2(pl, where=pl > 0), 0.0).sum(axis=1)
            hr = -np.where(pr > 0, pr * np.log2(pr, where=pr > 0), 0.0).sum(axis=1)
        cost = wl * hl + wr * hr

    best = int(np.argmin(cost))
    i = cut[best]
    thr = (sv[i] + sv[i + 1]) / 2.0
    if thr >= sv[i + 1]:  # float midpoint collapsed onto the upper value
        thr = sv[i]
    return float(cost[best]), float(thr)


class _TreeBuilder:
    def __init__(self, X, y, n_classes, criterion, min_samples_split,
                 max_features, rng, sample_weight, max_depth):
        self.X = X
        self.y = y
        self.n_classes = n_classes
        self.criterion = criterion
        self.min_samples_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.w = sample_weight
        self.max_depth = max_depth
        self.nodes: list[list] = []  # [feature, threshold, left, right, imp, weight, value]

    def build(self, idx: np.ndarray) -> Tree:
        self._grow(idx, depth=0)
        n = len(self.nodes)
        return Tree(
            feature=np.array([nd[0] for nd in self.nodes], dtype=np.int64),
            threshold=np.array([nd[1] for nd in self.nodes], dtype=np.float64),
            left=np.array([nd[2] for nd in self.nodes], dtype=np.int64),
            right=np.array([nd[3] for nd in self.nodes], dtype=np.int64),
            impurity=np.array([nd[4] for nd in self.nodes], dtype=np.float64),
            weight=np.array([nd[5] for nd in self.nodes], dtype=np.float64),
            value=np.array([nd[6] for nd in self.nodes], dtype=np.float64).reshape(
                n, self.n_classes),
            n_classes=self.n_classes,
        )

    def _candidate_features(self) -> np.ndarray:
        d = self.X.shape[1]
        if self.max_features == "all":
            return np.arange(d)
        k = max(1, int(math.sqrt(d)))
        return self.rng.choice(d, size=k, replace=False)

    def _grow(self, idx: np.ndarray, depth: int) -> int:
        counts = np.bincount(self.y[idx], weights=self.w[idx],
                             minlength=self.n_classes)
        w_node = counts.sum()
        imp = node_impurity(counts, self.criterion)
        node_id = len(self.nodes)
        dist = counts / w_node if w_node > 0 else counts
        self.nodes.append([-1, 0.0, -1, -1, imp, w_node, dist])

        if (
            imp <= 0.0
            or len(idx) < self.min_samples_split
            or (self.max_depth is not None and depth >= self.max_depth)
        ):
            return node_id

        best_cost = None
        best_feat = -1
        best_thr = 0.0
        for f in self._candidate_features():
            found = best_split(self.X[idx, f], self.y[idx], self.w[idx],
                               self.n_classes, self.criterion)
            if found is None:
                continue
            cost, thr = found
            if best_cost is None or cost < best_cost:
                best_cost, best_feat, best_thr = cost, int(f), thr
        if best_feat < 0:
            return node_id

        go_left = self.X[idx, best_feat] <= best_thr
        left_id = self._grow(idx[go_left], depth + 1)
        right_id = self._grow(idx[~go_left], depth + 1)
        node = self.nodes[node_id]
        node[0], node[1], node[2], node[3] = best_feat, best_thr, left_id, right_id
        return node_id


def build_tree(X, y, n_classes, criterion="gini", min_samples_split=2,
               max_features="all", rng=None, sample_weight=None,
               max_depth=None) -> Tree:
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    if min_samples_split < 2:
        raise ValueError("min_samples_split must be >= 2")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if sample_weight is None:
        sample_weight = np.ones(len(y), dtype=np.float64)
    if rng is None:
        rng = np.random.default_rng(0)
    builder = _TreeBuilder(X, y, n_classes, criterion, min_samples_split,
                           max_features, rng, sample_weight, max_depth)
    return builder.build(np.arange(len(y)))


class DecisionTreeModel:
    kind = "dt"

    def __init__(self, tree: Tree):
        self.tree = tree

    @classmethod
    def fit(cls, X, y, n_classes, params, seed):
        tree = build_tree(
            X, y, n_classes,
            criterion=params["criterion"],
            min_samples_split=params["min_samples_split"],
            max_features="all",
        )
        return cls(tree)

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.tree.predict_dist(X), axis=1)

    def class_probabilities(self, X) -> np.ndarray:
        return self.tree.predict_dist(X)

    def feature_importances(self, n_features: int) -> np.ndarray:
        raw = self.tree.mdi()
        out = np.zeros(n_features)
        out[: len(raw)] = raw
        return out

    def to_dict(self) -> dict:
        return {"tree": self.tree.to_dict()}

    @classmethod
    def from_dict(cls, d: dict):
        return cls(Tree.from_dict(d["tree"]))


class RandomForestModel:
    kind = "rf"

    def __init__(self, trees: list[Tree]):
        self.trees = trees

    @classmethod
    def fit(cls, X, y, n_classes, params, seed):
        n_trees = params["n_trees"]
        seeds = np.random.SeedSequence(seed).spawn(n_trees)
        trees = []
        n = len(y)
        for tree_seed in seeds:
            rng = np.random.default_rng(tree_seed)
            if params["bootstrap"]:
                idx = rng.integers(0, n, size=n)
            else:
                idx = np.arange(n)
            trees.append(build_tree(
                X[idx], y[idx], n_classes,
                criterion=params["criterion"],
                min_samples_split=params["min_samples_split"],
                max_features=params["max_features"],
                rng=rng,
            ))
        return cls(trees)

    def predict(self, X) -> np.ndarray:
        dist = self.trees[0].predict_dist(X).copy()
        for tree in self.trees[1:]:
            dist += tree.predict_dist(X)
        return np.argmax(dist, axis=1)

    def class_probabilities(self, X) -> np.ndarray:
        dist = self.trees[0].predict_dist(X).copy()
        for tree in self.trees[1:]:
            dist += tree.predict_dist(X)
        return dist / len(self.trees)

    def feature_importances(self, n_features: int) -> np.ndarray:
        """Mean over trees of per-tree normalized impurity decreases."""
        acc = np.zeros(n_features)
        for tree in self.trees:
            raw = tree.mdi()
            padded = np.zeros(n_features)
            padded[: len(raw)] = raw
            total = padded.sum()
            if total > 0:
                acc += padded / total
        return acc / len(self.trees)

    def to_dict(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict):
        return cls([Tree.from_dict(t) for t in d["trees"]])
