"""Three-stage decision chain: tunnel detection (binary), tunnel
classification (which protocol), application classification inside the
detected tunnel kind (one model per kind). Also the N-sweep experiment
driver that scores features and algorithms under default parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import learners
from .errors import DegenerateStageError, MissingModelError
from .evaluation import Metric, child_seed, cv_score
from .features import (
    FamilySpec,
    FeatureFamily,
    FeatureMatrix,
    FeatureSpec,
    build_matrix,
    fs2_spec,
)
from .flows import TUNNELED, UNTUNNELED, Flow

DETECTION_N = 50
APP_N = 150


@dataclass(frozen=True)
class Stage:
    kind: str                      # detection | tunnel | app
    tunnel_kind: str | None = None

    @classmethod
    def detection(cls) -> "Stage":
        return cls("detection")

    @classmethod
    def tunnel_classification(cls) -> "Stage":
        return cls("tunnel")

    @classmethod
    def app_classification(cls, tunnel_kind: str) -> "Stage":
        return cls("app", tunnel_kind)

    @classmethod
    def parse(cls, text: str) -> "Stage":
        if text == "detection":
            return cls.detection()
        if text == "tunnel":
            return cls.tunnel_classification()
        if text.startswith("app:"):
            return cls.app_classification(text.split(":", 1)[1])
        raise ValueError(
            f"unknown stage {text!r}; use detection, tunnel, or app:<kind>"
        )

    def describe(self) -> str:
        return f"app:{self.tunnel_kind}" if self.kind == "app" else self.kind

    @property
    def default_n(self) -> int:
        return APP_N if self.kind == "app" else DETECTION_N

    def metric(self) -> Metric:
        return Metric.binary(TUNNELED) if self.kind == "detection" else Metric.macro()


def stage_dataset(matrix: FeatureMatrix, stage: Stage) -> tuple[np.ndarray, np.ndarray]:
    """Select the rows and labels a stage trains/evaluates on."""
    classes = np.array([lab.traffic_class or "" for lab in matrix.labels])
    if stage.kind == "detection":
        X = matrix.values
        y = classes
    elif stage.kind == "tunnel":
        mask = classes == TUNNELED
        X = matrix.values[mask]
        y = np.array([lab.tunnel_kind or "" for lab in matrix.labels])[mask]
    else:
        kinds = np.array([lab.tunnel_kind or "" for lab in matrix.labels])
        mask = kinds == stage.tunnel_kind
        X = matrix.values[mask]
        y = np.array([lab.app_kind or "" for lab in matrix.labels])[mask]
    if len(np.unique(y)) < 2:
        raise DegenerateStageError(
            f"stage {stage.describe()} yields {len(np.unique(y))} class(es)"
        )
    return X, y


def default_spec(stage: Stage, n: int | None = None) -> FeatureSpec:
    return fs2_spec(n if n is not None else stage.default_n)


@dataclass
class StageModel:
    model: learners.TrainedModel
    spec: FeatureSpec


@dataclass
class PipelineModels:
    detection: StageModel
    tunnel: StageModel
    app: dict[str, StageModel] = field(default_factory=dict)


def train_pipeline(flows: list[Flow], alg: str = "rf", seed: int = 0,
                   params: dict | None = None,
                   detection_n: int = DETECTION_N,
                   app_n: int = APP_N) -> PipelineModels:
    """Fit all stage models on a labeled corpus with default-spec (fs2)
    features."""
    det_spec = fs2_spec(detection_n)
    app_spec = fs2_spec(app_n)
    det_matrix = build_matrix(flows, det_spec)

    X, y = stage_dataset(det_matrix, Stage.detection())
    detection = StageModel(
        learners.fit(alg, params, X, y, child_seed(seed, "detection")), det_spec)

    X, y = stage_dataset(det_matrix, Stage.tunnel_classification())
    tunnel = StageModel(
        learners.fit(alg, params, X, y, child_seed(seed, "tunnel")), det_spec)

    app_matrix = build_matrix(flows, app_spec)
    kinds = sorted({f.labels.tunnel_kind for f in flows if f.labels.tunnel_kind})
    app_models = {}
    for kind in kinds:
        X, y = stage_dataset(app_matrix, Stage.app_classification(kind))
        app_models[kind] = StageModel(
            learners.fit(alg, params, X, y, child_seed(seed, "app", kind)), app_spec)
    return PipelineModels(detection, tunnel, app_models)


@dataclass
class PipelinePrediction:
    flow_key: str
    is_tunnel: bool
    tunnel_kind: str | None
    app_kind: str | None
    confidence: dict

    def to_dict(self) -> dict:
        return {
            "key": self.flow_key,
            "is_tunnel": self.is_tunnel,
            "tunnel_kind": self.tunnel_kind,
            "app_kind": self.app_kind,
            "scores": self.confidence,
        }


def _stage_confidence(stage_model: StageModel, X: np.ndarray) -> np.ndarray | None:
    impl = stage_model.model.impl
    if hasattr(impl, "class_probabilities"):
        return impl.class_probabilities(X).max(axis=1)
    return None


def run_pipeline(flows: list[Flow], models: PipelineModels) -> list[PipelinePrediction]:
    """Chain the stages: negatives stop at detection, positives are routed
    through tunnel classification to the kind-specific app model."""
    det_matrix = build_matrix(flows, models.detection.spec)
    det_pred = learners.predict(models.detection.model, det_matrix.values)
    det_conf = _stage_confidence(models.detection, det_matrix.values)

    results: list[PipelinePrediction] = []
    for i, flow in enumerate(flows):
        conf = {"detection": float(det_conf[i])} if det_conf is not None else {}
        results.append(PipelinePrediction(
            flow_key=str(flow.key),
            is_tunnel=det_pred[i] == TUNNELED,
            tunnel_kind=None,
            app_kind=None,
            confidence=conf,
        ))

    tunneled_idx = [i for i, r in enumerate(results) if r.is_tunnel]
    if not tunneled_idx:
        return results

    tun_flows = [flows[i] for i in tunneled_idx]
    tun_matrix = build_matrix(tun_flows, models.tunnel.spec)
    kind_pred = learners.predict(models.tunnel.model, tun_matrix.values)
    kind_conf = _stage_confidence(models.tunnel, tun_matrix.values)
    for j, i in enumerate(tunneled_idx):
        results[i].tunnel_kind = str(kind_pred[j])
        if kind_conf is not None:
            results[i].confidence["tunnel"] = float(kind_conf[j])

    by_kind: dict[str, list[int]] = {}
    for j, i in enumerate(tunneled_idx):
        by_kind.setdefault(str(kind_pred[j]), []).append(i)

    for kind in sorted(by_kind):
        if kind not in models.app:
            raise MissingModelError(kind)
        rows = by_kind[kind]
        stage_model = models.app[kind]
        app_matrix = build_matrix([flows[i] for i in rows], stage_model.spec)
        app_pred = learners.predict(stage_model.model, app_matrix.values)
        app_conf = _stage_confidence(stage_model, app_matrix.values)
        for j, i in enumerate(rows):
            results[i].app_kind = str(app_pred[j])
            if app_conf is not None:
                results[i].confidence["app"] = float(app_conf[j])
    return results


@dataclass
class SweepRow:
    family: str
    n: int
    algorithm: str
    mean: float
    ci99: float

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "n": self.n,
            "algorithm": self.algorithm,
            "mean": self.mean,
            "ci99": self.ci99,
        }


def feature_sweep(flows: list[Flow], stage: Stage,
                  families: list[FeatureFamily], n_values: list[int],
                  algorithms: list[str], seed: int = 0,
                  k: int = 5) -> list[SweepRow]:
    """Score every (family, N, algorithm) cell with a single stratified
    k-fold CV under default parameters (no inner grid search)."""
    metric = stage.metric()
    rows: list[SweepRow] = []
    for family in families:
        for n in sorted(set(int(v) for v in n_values)):
            spec = FeatureSpec([FamilySpec(family, n=n)], name=f"{family.value}:{n}")
            matrix = build_matrix(flows, spec)
            X, y = stage_dataset(matrix, stage)
            for alg in algorithms:
                mean, ci99, _ = cv_score(
                    alg, learners.default_params(alg), X, y, k, metric,
                    child_seed(seed, family.value, n, alg))
                rows.append(SweepRow(family.value, n, alg, mean, ci99))
    return rows
