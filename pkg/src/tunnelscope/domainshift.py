"""Domain-generalization experiments: train on one background-traffic
dataset and test on another, and train on one MTU stratum and test across
MTU values (including an adversarially lowered one)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import learners
from .errors import DegenerateDomainError, MissingStratumError
from .evaluation import Metric, child_seed, ci99_half_width, stratified_holdout
from .features import FeatureSpec, build_matrix
from .flows import TUNNELED, UNTUNNELED, Flow
from .pipeline import Stage, stage_dataset

DEFAULT_REPEATS = 5


@dataclass
class ShiftCell:
    train_tag: str
    test_tag: str
    spec_name: str
    mean: float
    ci99: float
    scores: list[float]

    def to_dict(self) -> dict:
        return {
            "train": self.train_tag,
            "test": self.test_tag,
            "spec": self.spec_name,
            "mean": self.mean,
            "ci99": self.ci99,
            "scores": self.scores,
        }


@dataclass
class ShiftReport:
    axis: str  # dataset | mtu
    algorithm: str
    stage: str
    seed: int
    cells: list[ShiftCell]

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "axis": self.axis,
            "algorithm": self.algorithm,
            "stage": self.stage,
            "seed": self.seed,
            "cells": [c.to_dict() for c in self.cells],
        }

    def pivot_rows(self) -> tuple[list[str], list[list]]:
        """(header, rows) with one row per (spec, train) and one column
        per test tag."""
        test_tags = sorted({c.test_tag for c in self.cells})
        header = ["spec", "train"] + [f"test_{t}" for t in test_tags]
        keys = sorted({(c.spec_name, c.train_tag) for c in self.cells})
        index = {(c.spec_name, c.train_tag, c.test_tag): c for c in self.cells}
        rows = []
        for spec, train in keys:
            row: list = [spec, train]
            for t in test_tags:
                cell = index.get((spec, train, t))
                row.append(f"{cell.mean:.6f}" if cell else "")
            rows.append(row)
        return header, rows


def _canonical_order(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Content-based row order so cell scores do not depend on how the
    input corpus happened to be arranged (bootstrap draws are positional).
    lexsort treats its last key as primary: X[:, 0] first, y as the final
    tie-break, which leaves only interchangeable duplicates unordered."""
    return np.lexsort((y,) + tuple(X.T[::-1]))


def _repeat_eval(alg: str, X_train, y_train, X_test, y_test, metric: Metric,
                 seed: int, repeats: int) -> tuple[float, float, list[float]]:
    scores = []
    for r in range(repeats):
        model = learners.fit(alg, None, X_train, y_train, child_seed(seed, "fit", r))
        pred = learners.predict(model, X_test)
        scores.append(metric.score(y_test, pred))
    return float(np.mean(scores)), ci99_half_width(scores), scores


def cross_domain_eval(flows_a: list[Flow], flows_b: list[Flow],
                      specs: list[FeatureSpec], alg: str = "rf",
                      seed: int = 0,
                      repeats: int = DEFAULT_REPEATS) -> ShiftReport:
    """Detection-stage generalization between two corpora: train on all of
    one, test on all of the other, both directions, one cell per spec."""
    datasets = []
    for name, flows in (("a", flows_a), ("b", flows_b)):
        tags = {f.labels.dataset_tag for f in flows if f.labels.dataset_tag}
        tag = sorted(tags)[0] if tags else name
        classes = {f.labels.traffic_class for f in flows}
        if not {TUNNELED, UNTUNNELED} <= classes:
            raise DegenerateDomainError(
                f"dataset {tag!r} lacks a detection class: has {sorted(filter(None, classes))}"
            )
        datasets.append((tag, flows))
    if datasets[0][0] == datasets[1][0]:
        datasets = [(f"{tag}#{suffix}", flows)
                    for (tag, flows), suffix in zip(datasets, "ab")]

    metric = Metric.binary(TUNNELED)
    stage = Stage.detection()
    cells: list[ShiftCell] = []
    for spec in specs:
        matrices = {}
        for tag, flows in datasets:
            X, y = stage_dataset(build_matrix(flows, spec), stage)
            order = _canonical_order(X, y)
            matrices[tag] = (X[order], y[order])
        pairs = [(datasets[0][0], datasets[1][0]), (datasets[1][0], datasets[0][0])]
        for train_tag, test_tag in pairs:
            X_train, y_train = matrices[train_tag]
            X_test, y_test = matrices[test_tag]
            mean, ci99, scores = _repeat_eval(
                alg, X_train, y_train, X_test, y_test, metric,
                child_seed(seed, spec.describe(), train_tag, test_tag), repeats)
            cells.append(ShiftCell(train_tag, test_tag, spec.describe(),
                                   mean, ci99, scores))
    return ShiftReport("dataset", alg, stage.describe(), seed, cells)


def mtu_matrix(flows: list[Flow], train_mtu: int, test_mtus: list[int],
               specs: list[FeatureSpec], stage: Stage | None = None,
               alg: str = "rf", seed: int = 0,
               repeats: int = DEFAULT_REPEATS,
               holdout_fraction: float = 0.3) -> ShiftReport:
    """Train on one MTU stratum, test on each requested MTU. The training
    rows never appear in any test cell: the diagonal uses a held-out
    stratified split of the training stratum."""
    stage = stage or Stage.detection()
    metric = stage.metric()
    mtus = [f.labels.mtu for f in flows]
    for needed in [train_mtu] + list(test_mtus):
        if needed not in mtus:
            raise MissingStratumError(needed)

    cells: list[ShiftCell] = []
    for spec in specs:
        matrix = build_matrix(flows, spec)
        X, y = stage_dataset(matrix, stage)
        row_mtus = _stage_mtus(matrix, stage)
        order = _canonical_order(X, y)
        X, y, row_mtus = X[order], y[order], row_mtus[order]

        pool = np.flatnonzero(row_mtus == train_mtu)
        if pool.size == 0:
            raise MissingStratumError(train_mtu)
        train_rel, diag_rel = stratified_holdout(
            y[pool], holdout_fraction, child_seed(seed, spec.describe(), "split"))
        train_idx = pool[train_rel]
        diag_idx = pool[diag_rel]

        for test_mtu in test_mtus:
            if test_mtu == train_mtu:
                test_idx = diag_idx
            else:
                test_idx = np.flatnonzero(row_mtus == test_mtu)
                if test_idx.size == 0:
                    raise MissingStratumError(test_mtu)
            mean, ci99, scores = _repeat_eval(
                alg, X[train_idx], y[train_idx], X[test_idx], y[test_idx],
                metric, child_seed(seed, spec.describe(), train_mtu, test_mtu),
                repeats)
            cells.append(ShiftCell(str(train_mtu), str(test_mtu),
                                   spec.describe(), mean, ci99, scores))
    return ShiftReport("mtu", alg, stage.describe(), seed, cells)


def _stage_mtus(matrix, stage: Stage) -> np.ndarray:
    """MTU labels aligned with the rows stage_dataset selects."""
    classes = np.array([lab.traffic_class or "" for lab in matrix.labels])
    kinds = np.array([lab.tunnel_kind or "" for lab in matrix.labels])
    mtus = np.array([lab.mtu if lab.mtu is not None else -1 for lab in matrix.labels])
    if stage.kind == "detection":
        return mtus
    if stage.kind == "tunnel":
        return mtus[classes == TUNNELED]
    return mtus[kinds == stage.tunnel_kind]
