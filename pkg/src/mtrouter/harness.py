"""Experiment driver: single runs, baselines and (max_mts, alpha) grids.

Every run is evaluated against the simulator's noise-free hidden quality,
which plays the role a reference-based metric would play on real data.
Grid cells derive their seeds locally from (base_seed, max_mts, alpha,
repetition), so cell execution order cannot change any result.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .domain import ConfigError, InvariantViolation, RouterConfig, StepOutcome, step_cost
from .metrics import confusion_matrix, weighted_f1, windowed_f1_series
from .router import run
from .simulation import SimulatedBackendSet
from .domain import TranslationRequest


def derive_seed(base_seed: int, max_mts: int, alpha: float, repetition: int) -> int:
    """Cell-local 63-bit seed; alpha enters as round(alpha * 1e6)."""
    ss = np.random.SeedSequence([base_seed, max_mts, int(round(alpha * 1e6)), repetition])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class RunResult:
    """One router run plus everything the report needs about it."""

    outcomes: list[StepOutcome]
    total_cost: float
    mean_true_quality: float
    engine_calls: int
    qe_calls: int
    exploit_fraction: float
    request_ids: list[str]
    choices: np.ndarray  # chosen engine per step, processing order


def evaluate_run(outcomes: Sequence[StepOutcome], backends: SimulatedBackendSet) -> RunResult:
    total_cost = 0.0
    quality_sum = 0.0
    engine_calls = 0
    qe_calls = 0
    exploits = 0
    for o in outcomes:
        total_cost += o.cost
        quality_sum += backends.true_quality(o.request_id, o.chosen_engine)
        engine_calls += len(o.engines_called)
        qe_calls += o.qe_calls
        exploits += 0 if o.explored else 1
    n = len(outcomes)
    return RunResult(
        outcomes=list(outcomes),
        total_cost=total_cost,
        mean_true_quality=quality_sum / n if n else float("nan"),
        engine_calls=engine_calls,
        qe_calls=qe_calls,
        exploit_fraction=exploits / n if n else float("nan"),
        request_ids=[o.request_id for o in outcomes],
        choices=np.array([o.chosen_engine for o in outcomes], dtype=np.int64),
    )


def run_router_once(
    corpus: Sequence[TranslationRequest],
    backends: SimulatedBackendSet,
    config: RouterConfig,
    seed: Optional[int] = None,
) -> RunResult:
    outcomes = run(corpus, config, backends.engines, backends.qe, seed=seed)
    return evaluate_run(outcomes, backends)


@dataclass
class BaselineResult:
    name: str
    choices_by_id: dict[str, int]
    total_cost: float
    mean_true_quality: float
    engine_calls: int
    qe_calls: int


def baseline_full_ensemble(
    corpus: Sequence[TranslationRequest], engines, qe, backends: Optional[SimulatedBackendSet] = None
) -> BaselineResult:
    """Translate with every engine, keep the argmax-QE hypothesis per request.

    Ties go to the lowest engine_id. Quality totals need simulation truth;
    without it the quality field is NaN.
    """
    from .backends import batch_qe_score, translate

    prices = {e.engine_id: e.price_per_million_chars for e in engines}
    choices: dict[str, int] = {}
    total_cost = 0.0
    quality_sum = 0.0
    for request in corpus:
        texts = [translate(e, request.source, request) for e in engines]
        scores = [s.value for s in batch_qe_score(qe, request.source, texts)]
        best = int(np.argmax(scores))  # first occurrence = lowest engine_id
        choices[request.id] = best
        total_cost += step_cost(range(len(engines)), request.source, prices)
        if backends is not None:
            quality_sum += backends.true_quality(request.id, best)
    n = len(corpus)
    return BaselineResult(
        name="full_ensemble",
        choices_by_id=choices,
        total_cost=total_cost,
        mean_true_quality=quality_sum / n if (backends is not None and n) else float("nan"),
        engine_calls=len(engines) * n,
        qe_calls=len(engines) * n,
    )


def baseline_best_mt(corpus: Sequence[TranslationRequest], backends: SimulatedBackendSet) -> BaselineResult:
    """The single fixed engine with the best corpus-level mean true quality."""
    n = len(corpus)
    if n == 0:
        raise ConfigError("cannot evaluate baselines on an empty corpus")
    prices = backends.prices
    means = []
    for e in range(backends.n_engines):
        means.append(sum(backends.true_quality(r.id, e) for r in corpus) / n)
    best = int(np.argmax(means))  # ties: lowest engine_id
    total_cost = sum(step_cost([best], r.source, prices) for r in corpus)
    return BaselineResult(
        name="best_mt",
        choices_by_id={r.id: best for r in corpus},
        total_cost=total_cost,
        mean_true_quality=means[best],
        engine_calls=n,
        qe_calls=0,
    )


@dataclass
class CellResult:
    max_mts: int
    alpha: float
    repetitions: int
    costs: list[float]
    qualities: list[float]
    engine_calls: list[int]
    qe_calls: list[int]
    exploit_fractions: list[float]

    def _mean_std(self, values) -> tuple[float, float]:
        arr = np.asarray(values, dtype=np.float64)
        return float(arr.mean()), float(arr.std(ddof=0)) if arr.size > 1 else 0.0

    @property
    def cost_mean(self):
        return self._mean_std(self.costs)[0]

    @property
    def cost_std(self):
        return self._mean_std(self.costs)[1]

    @property
    def quality_mean(self):
        return self._mean_std(self.qualities)[0]

    @property
    def quality_std(self):
        return self._mean_std(self.qualities)[1]

    @property
    def degenerate_std(self) -> bool:
        return self.repetitions == 1


@dataclass
class ExperimentReport:
    max_mts_values: list[int]
    alpha_values: list[float]
    repetitions: int
    base_seed: int
    cells: list[CellResult]
    baselines: list[BaselineResult]
    focus_max_mts: int
    focus_alpha: float
    convergence_steps: np.ndarray  # step index of each series entry
    convergence_mean_f1: np.ndarray  # windowed weighted F1, mean over repetitions
    convergence_window: int
    confusion: np.ndarray  # (K, K), rows = ensemble choice, from repetition 0
    confusion_row_counts: np.ndarray
    confusion_prefix: int
    n_requests: int
    n_engines: int

    def cell(self, max_mts: int, alpha: float) -> CellResult:
        for c in self.cells:
            if c.max_mts == max_mts and abs(c.alpha - alpha) < 1e-12:
                return c
        raise KeyError(f"no cell for max_mts={max_mts}, alpha={alpha}")


def run_grid(
    corpus: Sequence[TranslationRequest],
    backends: SimulatedBackendSet,
    max_mts_values: Sequence[int],
    alpha_values: Sequence[float],
    repetitions: int,
    base_seed: int,
    router_defaults: Optional[RouterConfig] = None,
    focus_max_mts: Optional[int] = None,
    focus_alpha: Optional[float] = None,
    convergence_window: int = 100,
    confusion_prefix: int = 100,
    collect_outcomes: Optional[dict] = None,
) -> ExperimentReport:
    """Run every (max_mts, alpha) cell ``repetitions`` times and aggregate.

    ``collect_outcomes``, when given, is filled with
    {(max_mts, alpha, rep): list[StepOutcome]} so callers can write audit
    trails without rerunning anything.
    """
    if repetitions < 1:
        raise ConfigError("repetitions must be >= 1")
    if not max_mts_values or not alpha_values:
        raise ConfigError("grid axes must be non-empty")
    defaults = router_defaults or RouterConfig(max_mts=1, alpha=0.0)
    ensemble = baseline_full_ensemble(corpus, backends.engines, backends.qe, backends)
    best = baseline_best_mt(corpus, backends)

    if focus_max_mts is None:
        focus_max_mts = max(max_mts_values)
    if focus_alpha is None:
        focus_alpha = 0.2 if any(abs(a - 0.2) < 1e-12 for a in alpha_values) else alpha_values[0]
    if focus_max_mts not in max_mts_values or not any(
        abs(a - focus_alpha) < 1e-12 for a in alpha_values
    ):
        raise ConfigError("focus cell must be part of the grid")

    cells = []
    focus_series = []
    focus_confusion = None
    focus_row_counts = None
    n_requests = len(corpus)
    prefix = min(confusion_prefix, n_requests)
    for m in max_mts_values:
        for alpha in alpha_values:
            config = replace(defaults, max_mts=m, alpha=alpha)
            cell = CellResult(
                max_mts=m, alpha=alpha, repetitions=repetitions,
                costs=[], qualities=[], engine_calls=[], qe_calls=[], exploit_fractions=[],
            )
            is_focus = m == focus_max_mts and abs(alpha - focus_alpha) < 1e-12
            for rep in range(repetitions):
                seed = derive_seed(base_seed, m, alpha, rep)
                result = run_router_once(corpus, backends, config, seed=seed)
                cell.costs.append(result.total_cost)
                cell.qualities.append(result.mean_true_quality)
                cell.engine_calls.append(result.engine_calls)
                cell.qe_calls.append(result.qe_calls)
                cell.exploit_fractions.append(result.exploit_fraction)
                if result.total_cost > ensemble.total_cost + 1e-9:
                    raise InvariantViolation(
                        f"cell ({m}, {alpha}) rep {rep} cost {result.total_cost} "
                        f"exceeds the full-ensemble cost {ensemble.total_cost}"
                    )
                if collect_outcomes is not None:
                    collect_outcomes[(m, alpha, rep)] = result.outcomes
                if is_focus:
                    ensemble_labels = [ensemble.choices_by_id[rid] for rid in result.request_ids]
                    series = windowed_f1_series(
                        result.choices, ensemble_labels, backends.n_engines, window=convergence_window
                    )
                    focus_series.append(series)
                    if rep == 0:
                        focus_confusion, focus_row_counts = confusion_matrix(
                            result.choices, ensemble_labels, prefix, backends.n_engines
                        )
            cells.append(cell)

    mean_series = np.mean(np.stack(focus_series), axis=0)
    assert focus_confusion is not None and focus_row_counts is not None
    supported = focus_row_counts > 0
    row_sums = focus_confusion[supported].sum(axis=1)
    if supported.any() and np.any(np.abs(row_sums - 1.0) > 1e-9):
        raise InvariantViolation("confusion matrix rows must sum to 1 on supported rows")
    return ExperimentReport(
        max_mts_values=list(max_mts_values),
        alpha_values=list(alpha_values),
        repetitions=repetitions,
        base_seed=base_seed,
        cells=cells,
        baselines=[best, ensemble],
        focus_max_mts=focus_max_mts,
        focus_alpha=focus_alpha,
        convergence_steps=np.arange(n_requests),
        convergence_mean_f1=mean_series,
        convergence_window=convergence_window,
        confusion=focus_confusion,
        confusion_row_counts=focus_row_counts,
        confusion_prefix=prefix,
        n_requests=n_requests,
        n_engines=backends.n_engines,
    )


def measure_step_latency(
    corpus: Sequence[TranslationRequest],
    backends: SimulatedBackendSet,
    config: RouterConfig,
    seed: int = 0,
) -> np.ndarray:
    """Per-decision wall time with a single-item queue, one request per step.

    Runs each request through its own single-entry queue against simulated
    (effectively instant) backends, so the measurement isolates router
    decision time from backend latency.
    """
    from .classifier import OnlineSoftmaxModel
    from .ranked_queue import RankedQueue
    from .router import TranslationCache, step

    model = OnlineSoftmaxModel(
        n_classes=backends.n_engines,
        n_features=corpus[0].features.dim,
        learning_rate=config.learning_rate,
        l2=config.l2,
    )
    rng = np.random.default_rng(seed)
    cache = TranslationCache()
    times = []
    for request in corpus:
        queue = RankedQueue(model, policy=config.rerank_policy)
        queue.push(request)
        started = time.perf_counter()
        step(queue, model, backends.engines, backends.qe, config, rng, cache)
        times.append(time.perf_counter() - started)
    return np.asarray(times)
