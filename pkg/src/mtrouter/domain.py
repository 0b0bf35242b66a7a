"""Core value types shared by every other module.

All types here are immutable values: safe to share across threads and to
key caches on. Numeric payloads are float64 numpy arrays marked read-only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

PROB_SUM_TOL = 1e-9


class ConfigError(ValueError):
    """Invalid configuration or input file (CLI exit code 1)."""


class InvariantViolation(RuntimeError):
    """An internal consistency check failed (CLI exit code 3)."""


class Translator(Protocol):
    """One MT engine backend: simulated or remote."""

    def translate(self, source: str, request_id: str) -> str: ...


class QualityEstimator(Protocol):
    """Reference-free scorer of (source, hypothesis) pairs."""

    def score(self, source: str, hypothesis: str) -> float: ...

    def score_batch(self, source: str, hypotheses: Sequence[str]) -> list[float]: ...


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length real vector describing one source segment."""

    values: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.values)
        if arr.ndim != 1:
            raise ValueError(f"feature vector must be 1-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("feature vector contains non-finite entries")
        object.__setattr__(self, "values", arr)

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TranslationRequest:
    """One source segment flowing through the queue and router.

    ``latent_domain`` is simulation ground truth: the router and classifier
    never read it; only the evaluation harness may.
    """

    id: str
    source: str
    features: FeatureVector
    arrival_index: int
    latent_domain: Optional[int] = None

    def __post_init__(self):
        if self.arrival_index < 0:
            raise ValueError("arrival_index must be nonnegative")
        if self.latent_domain is not None and self.latent_domain < 0:
            raise ValueError("latent_domain must be nonnegative when present")


@dataclass(frozen=True)
class EngineSpec:
    """Identity, unit price and backend binding of one MT engine."""

    engine_id: int
    name: str
    price_per_million_chars: float
    backend: Optional[Translator] = None

    def __post_init__(self):
        if self.engine_id < 0:
            raise ValueError("engine_id must be nonnegative")
        if self.price_per_million_chars < 0:
            raise ValueError("price_per_million_chars must be >= 0")


@dataclass(frozen=True)
class ClassProbabilities:
    """Length-K probability vector over engines.

    Construction rejects vectors off the probability simplex by more than
    ``PROB_SUM_TOL`` so downstream entropy/sampling code never sees garbage.
    """

    probs: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.probs)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise ValueError("probability vector must be non-empty and 1-D")
        if not np.all(np.isfinite(arr)):
            raise ValueError("probability vector contains non-finite entries")
        if np.any(arr < 0.0) or np.any(arr > 1.0 + PROB_SUM_TOL):
            raise ValueError("probability entries must lie in [0, 1]")
        total = float(arr.sum())
        if abs(total - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1 within {PROB_SUM_TOL}")
        object.__setattr__(self, "probs", arr)

    @property
    def k(self) -> int:
        return self.probs.shape[0]


@dataclass(frozen=True)
class QEScore:
    """Quality-estimation score; higher is better."""

    value: float

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise ValueError("QE score must be finite")


@dataclass(frozen=True)
class RouterConfig:
    """Knobs of the routing loop.

    ``max_mts`` bounds how many engines one exploration may sample;
    ``alpha`` is the normalized-entropy threshold below which the router
    trusts its prediction and skips exploration entirely.
    """

    max_mts: int
    alpha: float
    seed: int = 0
    learning_rate: float = 0.3
    l2: float = 1e-6
    rerank_policy: str = "auto"
    standardize_features: bool = False


@dataclass(frozen=True)
class StepOutcome:
    """Audit record of one routing decision."""

    request_id: str
    chosen_engine: int
    translation: str
    engines_called: frozenset[int]
    qe_calls: int
    cost: float
    explored: bool
    learned_label: int
    entropy_at_decision: float

    def __post_init__(self):
        object.__setattr__(self, "engines_called", frozenset(self.engines_called))
        if self.chosen_engine not in self.engines_called:
            raise InvariantViolation("chosen engine not among engines called")
        if not self.explored and (self.engines_called != {self.chosen_engine} or self.qe_calls != 0):
            raise InvariantViolation("exploit step must call exactly the predicted engine and no QE")
        if self.qe_calls < 0 or self.cost < 0:
            raise InvariantViolation("qe_calls and cost must be nonnegative")


def step_cost(engines_called, source, prices_by_id) -> float:
    """Canonical cost of one step: Σ price × chars / 1e6 over distinct engines.

    ``source`` is the text or its code-point count. Summation runs in
    ascending engine_id order so recomputation from an audit trail is
    bit-exact.
    """
    n_chars = len(source) if isinstance(source, str) else int(source)
    total_price = 0.0
    for eid in sorted(engines_called):
        total_price += prices_by_id[eid]
    return total_price * n_chars / 1e6


_POLICY_NAMES = ("full", "lazy", "auto")


def parse_rerank_policy(policy: str) -> tuple[str, Optional[int]]:
    """Parse a rerank policy string into (kind, subset_size).

    Accepts "full", "lazy", "auto", "subset(n)" and "subset:n".
    """
    text = policy.strip().lower()
    if text in _POLICY_NAMES:
        return text, None
    for prefix, suffix in (("subset(", ")"), ("subset:", "")):
        if text.startswith(prefix) and text.endswith(suffix) and len(text) > len(prefix) + len(suffix):
            body = text[len(prefix):len(text) - len(suffix)] if suffix else text[len(prefix):]
            try:
                n = int(body)
            except ValueError:
                break
            if n < 1:
                raise ConfigError(f"subset size must be >= 1, got {n}")
            return "subset", n
    raise ConfigError(f"unknown rerank policy {policy!r}")


def validate_config(config: RouterConfig, engines: Sequence[EngineSpec]) -> RouterConfig:
    """Check a router configuration against the engine roster.

    Returns the configuration unchanged when every invariant holds;
    raises ConfigError otherwise.
    """
    if not engines:
        raise ConfigError("at least one engine is required")
    k = len(engines)
    ids = sorted(e.engine_id for e in engines)
    if ids != list(range(k)):
        raise ConfigError(f"engine_ids must be 0..{k - 1} with no gaps or duplicates, got {ids}")
    for e in engines:
        if e.price_per_million_chars < 0:
            raise ConfigError(f"engine {e.name!r} has negative price")
    if not 1 <= config.max_mts <= k:
        raise ConfigError(f"max_mts must be in [1, {k}], got {config.max_mts}")
    if not 0.0 <= config.alpha <= 1.0:
        raise ConfigError(f"alpha must be in [0, 1], got {config.alpha}")
    if config.learning_rate <= 0:
        raise ConfigError("learning_rate must be positive")
    if config.l2 < 0:
        raise ConfigError("l2 must be nonnegative")
    parse_rerank_policy(config.rerank_policy)
    return config
