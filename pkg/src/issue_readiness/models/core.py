from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from ..errors import InputError
from ..features import Dataset, TooFewRows
from ..stats import SingleClass
from . import _trees

MODEL_FORMAT = "issue-readiness-model"
MODEL_VERSION = 1
MIN_TRAIN_ROWS = 10


class FeatureMismatch(InputError):
    pass


class ModelArtifactMissing(InputError):
    pass


class ModelKind(str, enum.Enum):
    Logistic = "Logistic"
    RandomForest = "RandomForest"
    GradientBoosted = "GradientBoosted"


DEFAULT_HYPERPARAMETERS: dict[ModelKind, dict[str, Any]] = {
    ModelKind.Logistic: {"max_iter": 10_000, "tol": 1e-8},
    ModelKind.RandomForest: {"n_trees": 100, "max_features": "sqrt", "min_samples_leaf": 1, "max_depth": None},
    ModelKind.GradientBoosted: {"n_rounds": 100, "max_depth": 3, "learning_rate": 0.1, "min_samples_leaf": 1},
}


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind = ModelKind.RandomForest
    seed: int = 0
    hyperparameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ModelKind(self.kind))
        unknown = set(self.hyperparameters) - set(DEFAULT_HYPERPARAMETERS[self.kind])
        if unknown:
            raise InputError(f"unknown {self.kind.value} hyperparameters: {sorted(unknown)}")

    def param(self, name: str) -> Any:
        return self.hyperparameters.get(name, DEFAULT_HYPERPARAMETERS[self.kind][name])

    def to_dict(self) -> dict:
        params = dict(DEFAULT_HYPERPARAMETERS[self.kind])
        params.update(self.hyperparameters)
        return {"kind": self.kind.value, "seed": self.seed, "hyperparameters": params}


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


# --------------------------------------------------------------------------
# trees

@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def to_nested(self, node: int = 0) -> dict:
        if self.feature[node] < 0:
            return {"value": float(self.value[node])}
        return {
            "feature": int(self.feature[node]),
            "threshold": float(self.threshold[node]),
            "value": float(self.value[node]),
            "left": self.to_nested(int(self.left[node])),
            "right": self.to_nested(int(self.right[node])),
        }

    @classmethod
    def from_nested(cls, root: dict) -> "Tree":
        feature, threshold, left, right, value = [], [], [], [], []

        def visit(node: dict) -> int:
            i = len(feature)
            feature.append(node.get("feature", -1))
            threshold.append(node.get("threshold", 0.0))
            value.append(node["value"])
            left.append(-1)
            right.append(-1)
            if "left" in node:
                left[i] = visit(node["left"])
                right[i] = visit(node["right"])
            return i

        visit(root)
        return cls(np.array(feature, dtype=np.int64), np.array(threshold, dtype=float),
                   np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(value, dtype=float))


def _pack(trees: Sequence[Tree]):
    sizes = [t.feature.size for t in trees]
    offsets = np.zeros(len(trees) + 1, dtype=np.int64)
    np.cumsum(sizes, out=offsets[1:])
    if not trees:
        empty_i = np.zeros(0, dtype=np.int64)
        return offsets, empty_i, np.zeros(0), empty_i, empty_i, np.zeros(0)
    return (offsets,
            np.concatenate([t.feature for t in trees]),
            np.concatenate([t.threshold for t in trees]),
            np.concatenate([t.left for t in trees]),
            np.concatenate([t.right for t in trees]),
            np.concatenate([t.value for t in trees]))


def _normalize(v: np.ndarray) -> np.ndarray:
    total = float(v.sum())
    return v / total if total > 0 else np.zeros_like(v)


# --------------------------------------------------------------------------
# trained models

@dataclass
class TrainedModel:
    kind: ModelKind
    feature_names: tuple[str, ...]
    config: ModelConfig

    def _check_matrix(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != len(self.feature_names):
            raise FeatureMismatch(f"expected {len(self.feature_names)} features, got {X.shape[1]}")
        return X

    def predict_proba_matrix(self, X) -> np.ndarray:
        raise NotImplementedError

    def importances(self) -> np.ndarray:
        raise NotImplementedError

    def _params_to_dict(self) -> dict:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kind": self.kind.value,
            "feature_names": list(self.feature_names),
            "config": self.config.to_dict(),
            "params": self._params_to_dict(),
        }


@dataclass
class LogisticModel(TrainedModel):
    mean: np.ndarray = field(default_factory=lambda: np.zeros(0))
    scale: np.ndarray = field(default_factory=lambda: np.ones(0))
    intercept: float = 0.0
    coef: np.ndarray = field(default_factory=lambda: np.zeros(0))
    n_iter: int = 0

    def predict_proba_matrix(self, X) -> np.ndarray:
        Z = (self._check_matrix(X) - self.mean) / self.scale
        return _sigmoid(self.intercept + Z @ self.coef)

    def importances(self) -> np.ndarray:
        return _normalize(np.abs(self.coef))

    def _params_to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist(), "intercept": self.intercept,
                "coef": self.coef.tolist(), "n_iter": self.n_iter}


@dataclass
class _TreeEnsemble(TrainedModel):
    trees: list[Tree] = field(default_factory=list)
    raw_importance: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        self._packed = _pack(self.trees)

    def _tree_sum(self, X) -> np.ndarray:
        X = np.ascontiguousarray(self._check_matrix(X))
        return _trees.predict_packed(X, *self._packed)

    def importances(self) -> np.ndarray:
        return _normalize(self.raw_importance.copy())

    def _params_to_dict(self) -> dict:
        return {"raw_importance": self.raw_importance.tolist(), "trees": [t.to_nested() for t in self.trees]}


@dataclass
class ForestModel(_TreeEnsemble):
    def predict_proba_matrix(self, X) -> np.ndarray:
        return np.clip(self._tree_sum(X) / len(self.trees), 0.0, 1.0)


@dataclass
class BoostedModel(_TreeEnsemble):
    base_score: float = 0.0
    learning_rate: float = 0.1

    def predict_proba_matrix(self, X) -> np.ndarray:
        return _sigmoid(self.base_score + self.learning_rate * self._tree_sum(X))

    def _params_to_dict(self) -> dict:
        d = super()._params_to_dict()
        d.update({"base_score": self.base_score, "learning_rate": self.learning_rate})
        return d


# --------------------------------------------------------------------------
# training

def _tree_seed(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, index]))


def _fit_logistic(X: np.ndarray, y: np.ndarray, cfg: ModelConfig, names) -> LogisticModel:
    n, p = X.shape
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    A = np.column_stack([np.ones(n), (X - mean) / scale])
    # step 1/L where L bounds the curvature of the mean log-loss
    lipschitz = 0.25 * float(np.linalg.eigvalsh(A.T @ A / n)[-1])
    step = 1.0 / lipschitz
    w = np.zeros(p + 1)
    tol = float(cfg.param("tol"))
    max_iter = int(cfg.param("max_iter"))
    it = 0
    for it in range(1, max_iter + 1):
        grad = A.T @ (_sigmoid(A @ w) - y) / n
        if float(np.max(np.abs(grad))) < tol:
            break
        w -= step * grad
    return LogisticModel(ModelKind.Logistic, names, cfg, mean=mean, scale=scale, intercept=float(w[0]),
                         coef=w[1:].copy(), n_iter=it)


def _max_features(spec, p: int) -> int:
    if spec is None:
        return p
    if spec == "sqrt":
        return max(1, math.ceil(math.sqrt(p)))
    if isinstance(spec, float) and 0 < spec <= 1:
        return max(1, math.ceil(spec * p))
    return max(1, min(p, int(spec)))


def _fit_forest(X: np.ndarray, y: np.ndarray, cfg: ModelConfig, names) -> ForestModel:
    n, p = X.shape
    n_trees = int(cfg.param("n_trees"))
    mtry = _max_features(cfg.param("max_features"), p)
    min_leaf = int(cfg.param("min_samples_leaf"))
    max_depth = cfg.param("max_depth")
    max_depth = -1 if max_depth is None else int(max_depth)
    yf = y.astype(float)
    trees, importance = [], np.zeros(p)
    for t in range(n_trees):
        rng = _tree_seed(cfg.seed, t)
        rows = rng.integers(0, n, size=n)
        node_seed = int(rng.integers(0, 2**63 - 1))
        Xb = np.ascontiguousarray(X[rows])
        f, thr, lft, rgt, val, imp = _trees.grow_gini_tree(Xb, yf[rows], mtry, min_leaf, max_depth, node_seed)
        trees.append(Tree(f, thr, lft, rgt, val))
        importance += _normalize(imp)
    return ForestModel(ModelKind.RandomForest, names, cfg, trees=trees, raw_importance=importance / max(1, n_trees))


def _fit_boosted(X: np.ndarray, y: np.ndarray, cfg: ModelConfig, names) -> BoostedModel:
    n, p = X.shape
    rounds = int(cfg.param("n_rounds"))
    depth = int(cfg.param("max_depth"))
    lr = float(cfg.param("learning_rate"))
    min_leaf = int(cfg.param("min_samples_leaf"))
    prior = min(max(float(y.mean()), 1e-6), 1 - 1e-6)
    base = math.log(prior / (1 - prior))
    Xc = np.ascontiguousarray(X)
    score = np.full(n, base)
    order = _trees.presort(Xc)
    trees, gains = [], np.zeros(p)
    for _ in range(rounds):
        residual = y - _sigmoid(score)
        f, thr, lft, rgt, val, gain = _trees.grow_regression_tree(Xc, residual, order, depth, min_leaf)
        tree = Tree(f, thr, lft, rgt, val)
        trees.append(tree)
        gains += gain
        offsets = np.array([0, f.size], dtype=np.int64)
        score = score + lr * _trees.predict_packed(Xc, offsets, f, thr, lft, rgt, val)
    return BoostedModel(ModelKind.GradientBoosted, names, cfg, trees=trees, raw_importance=gains,
                        base_score=base, learning_rate=lr)


_FITTERS = {
    ModelKind.Logistic: _fit_logistic,
    ModelKind.RandomForest: _fit_forest,
    ModelKind.GradientBoosted: _fit_boosted,
}


def train(ds: Dataset, cfg: ModelConfig, min_rows: int = MIN_TRAIN_ROWS) -> TrainedModel:
    """Fit a classifier predicting the merged label (1) from the dataset's features."""
    if len(ds) < min_rows:
        raise TooFewRows(f"training needs at least {min_rows} rows, got {len(ds)}")
    y = ds.y.astype(float)
    if y.min() == y.max():
        raise SingleClass("training labels contain a single class")
    return _FITTERS[cfg.kind](np.asarray(ds.X, dtype=float), y, cfg, tuple(ds.feature_names))


def predict_proba(model: TrainedModel, fv: Mapping[str, float]) -> float:
    """Merge probability for one feature vector given as a name -> value mapping."""
    if set(fv) != set(model.feature_names):
        missing = sorted(set(model.feature_names) - set(fv))
        extra = sorted(set(fv) - set(model.feature_names))
        raise FeatureMismatch(f"feature vector mismatch: missing {missing}, unexpected {extra}")
    x = np.array([[float(fv[n]) for n in model.feature_names]])
    return float(model.predict_proba_matrix(x)[0])


def feature_importances(model: TrainedModel) -> dict[str, float]:
    return dict(zip(model.feature_names, model.importances().tolist()))


# --------------------------------------------------------------------------
# persistence

def model_from_dict(d: dict) -> TrainedModel:
    if d.get("format") != MODEL_FORMAT or d.get("version") != MODEL_VERSION:
        raise InputError(f"not a version-{MODEL_VERSION} {MODEL_FORMAT} document")
    kind = ModelKind(d["kind"])
    c = d["config"]
    cfg = ModelConfig(kind, c["seed"], c["hyperparameters"])
    names = tuple(d["feature_names"])
    p = d["params"]
    if kind is ModelKind.Logistic:
        return LogisticModel(kind, names, cfg, mean=np.array(p["mean"], dtype=float),
                             scale=np.array(p["scale"], dtype=float), intercept=float(p["intercept"]),
                             coef=np.array(p["coef"], dtype=float), n_iter=int(p["n_iter"]))
    trees = [Tree.from_nested(t) for t in p["trees"]]
    raw = np.array(p["raw_importance"], dtype=float)
    if kind is ModelKind.RandomForest:
        return ForestModel(kind, names, cfg, trees=trees, raw_importance=raw)
    return BoostedModel(kind, names, cfg, trees=trees, raw_importance=raw, base_score=float(p["base_score"]),
                        learning_rate=float(p["learning_rate"]))


def save_model(model: TrainedModel, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(model.to_dict()), encoding="utf-8")


def load_model(path: str | Path) -> TrainedModel:
    path = Path(path)
    if not path.exists():
        raise ModelArtifactMissing(f"model artifact {path} does not exist")
    return model_from_dict(json.loads(path.read_text(encoding="utf-8")))
