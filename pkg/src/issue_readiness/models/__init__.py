"""Interpretable merge-probability classifiers implemented from scratch."""

from .core import (
    BoostedModel,
    FeatureMismatch,
    ForestModel,
    LogisticModel,
    ModelArtifactMissing,
    ModelConfig,
    ModelKind,
    SingleClass,
    TooFewRows,
    TrainedModel,
    feature_importances,
    load_model,
    model_from_dict,
    predict_proba,
    save_model,
    train,
)

__all__ = [
    "BoostedModel",
    "FeatureMismatch",
    "ForestModel",
    "LogisticModel",
    "ModelArtifactMissing",
    "ModelConfig",
    "ModelKind",
    "SingleClass",
    "TooFewRows",
    "TrainedModel",
    "feature_importances",
    "load_model",
    "model_from_dict",
    "predict_proba",
    "save_model",
    "train",
]
