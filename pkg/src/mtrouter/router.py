"""The routing loop: pop, predict, translate, gate, sample, score, learn.

One step processes the most uncertain pending request:

1. rerank the queue per policy, pop the max-entropy request
2. predict engine probabilities; predMT = argmax (ties: lowest id)
3. translate with predMT (through the per-run cache)
4. sample an ordered engine subset from the probabilities
5. exploit iff the sample starts with predMT AND normalized entropy < alpha:
   learn predMT, respond its translation, zero QE calls
6. otherwise explore: translate every sampled engine (cache-deduplicated),
   QE-score the sampled translations and the predicted one; if the best
   sampled score strictly beats the predicted score, respond and learn that
   engine, else respond and learn predMT

Exploit steps never touch the quality estimator — that is the entire cost
mechanism. Backend failures abort the step atomically: nothing is learned
and the request is re-enqueued.

The loop is strictly sequential (learn-then-rerank ordering is load
bearing). Backend calls within one explore step are issued in ascending
engine order so outcomes are deterministic; backends are free to batch or
parallelize internally.
"""

from __future__ import annotations

import time
from typing import Callable, Optional, Sequence

import numpy as np

from .backends import BackendError, batch_qe_score, qe_score, translate
from .classifier import OnlineSoftmaxModel, normalized_entropy
from .domain import (
    EngineSpec,
    FeatureVector,
    InvariantViolation,
    RouterConfig,
    StepOutcome,
    TranslationRequest,
    step_cost,
    validate_config,
)
from .features import RunningStats, standardize
from .ranked_queue import RankedQueue
from .sampler import sample_engines


class TranslationCache:
    """Memo of (request_id, engine_id) -> translation for one run.

    Guarantees each pair hits the backend at most once, which both
    deduplicates the predMT/sample overlap inside a step and keeps retries
    after a failed step from double-paying.
    """

    def __init__(self):
        self._store: dict[tuple[str, int], str] = {}

    def __len__(self) -> int:
        return len(self._store)

    def get_or_translate(self, engine: EngineSpec, request: TranslationRequest) -> str:
        key = (request.id, engine.engine_id)
        if key not in self._store:
            self._store[key] = translate(engine, request.source, request)
        return self._store[key]


def step(
    queue: RankedQueue,
    model,
    engines: Sequence[EngineSpec],
    qe,
    config: RouterConfig,
    rng: np.random.Generator,
    cache: TranslationCache,
) -> StepOutcome:
    """Process one request off the queue and return its audit record."""
    if len(queue) == 0:
        raise IndexError("step on an empty queue")
    queue.rerank(model)
    request = queue.pop_max_entropy()
    try:
        pred, probs = model.predict(request.features)
        pred_trans = cache.get_or_translate(engines[pred], request)
        sampled = sample_engines(probs, config.max_mts, rng)
        entropy = normalized_entropy(probs)

        if sampled[0] == pred and entropy < config.alpha:
            chosen, translation, label = pred, pred_trans, pred
            engines_called = frozenset([pred])
            qe_calls = 0
            explored = False
        else:
            texts = [cache.get_or_translate(engines[e], request) for e in sampled]
            sampled_scores = [s.value for s in batch_qe_score(qe, request.source, texts)]
            pred_score = qe_score(qe, request.source, pred_trans).value
            qe_calls = len(sampled) + 1
            best = min(range(len(sampled)), key=lambda j: (-sampled_scores[j], sampled[j]))
            if sampled_scores[best] > pred_score:
                chosen, translation, label = sampled[best], texts[best], sampled[best]
            else:
                chosen, translation, label = pred, pred_trans, pred
            engines_called = frozenset([pred, *sampled])
            explored = True
    except BackendError:
        queue.push(request)
        raise
    model.learn(request.features, label)

    prices = {e.engine_id: e.price_per_million_chars for e in engines}
    outcome = StepOutcome(
        request_id=request.id,
        chosen_engine=chosen,
        translation=translation,
        engines_called=engines_called,
        qe_calls=qe_calls,
        cost=step_cost(engines_called, request.source, prices),
        explored=explored,
        learned_label=label,
        entropy_at_decision=entropy,
    )
    if explored and not 1 <= len(outcome.engines_called) <= config.max_mts + 1:
        raise InvariantViolation("explore step called an impossible number of engines")
    return outcome


def run(
    requests: Sequence[TranslationRequest],
    config: RouterConfig,
    engines: Sequence[EngineSpec],
    qe,
    seed: Optional[int] = None,
    model=None,
    on_step: Optional[Callable[[StepOutcome], None]] = None,
    step_times_out: Optional[list[float]] = None,
) -> list[StepOutcome]:
    """Route every request; returns outcomes in processing order.

    Deterministic given (requests, config, seed, deterministic backends).
    On a backend failure the error propagates with ``completed_steps`` set
    to the number of finished steps.
    """
    validate_config(config, engines)
    if not requests:
        return []
    feature_dim = requests[0].features.dim
    if model is None:
        model = OnlineSoftmaxModel(
            n_classes=len(engines),
            n_features=feature_dim,
            learning_rate=config.learning_rate,
            l2=config.l2,
        )
    rng = np.random.default_rng(config.seed if seed is None else seed)
    queue = RankedQueue(model, policy=config.rerank_policy)
    cache = TranslationCache()
    stats = RunningStats(feature_dim) if config.standardize_features else None

    for request in requests:
        if stats is not None:
            fv, stats = standardize(request.features, stats)
            request = TranslationRequest(
                id=request.id,
                source=request.source,
                features=fv,
                arrival_index=request.arrival_index,
                latent_domain=request.latent_domain,
            )
        queue.push(request)

    outcomes: list[StepOutcome] = []
    while len(queue):
        started = time.perf_counter()
        try:
            outcome = step(queue, model, engines, qe, config, rng, cache)
        except BackendError as exc:
            exc.completed_steps = len(outcomes)
            raise
        if step_times_out is not None:
            step_times_out.append(time.perf_counter() - started)
        outcomes.append(outcome)
        if on_step is not None:
            on_step(outcome)
    return outcomes
