"""Adaptive MT routing: online-learned engine selection with entropy-gated
exploration, plus the simulation and experiment harness around it."""

from .classifier import OnlineSoftmaxModel, normalized_entropy
from .domain import (
    ClassProbabilities,
    ConfigError,
    EngineSpec,
    FeatureVector,
    InvariantViolation,
    QEScore,
    RouterConfig,
    StepOutcome,
    TranslationRequest,
    validate_config,
)
from .ranked_queue import RankedQueue
from .router import TranslationCache, run, step
from .sampler import sample_engines

__all__ = [
    "ClassProbabilities",
    "ConfigError",
    "EngineSpec",
    "FeatureVector",
    "InvariantViolation",
    "OnlineSoftmaxModel",
    "QEScore",
    "RankedQueue",
    "RouterConfig",
    "StepOutcome",
    "TranslationCache",
    "TranslationRequest",
    "normalized_entropy",
    "run",
    "sample_engines",
    "step",
    "validate_config",
]
