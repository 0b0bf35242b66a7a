"""Experiment configuration files.

YAML (JSON works too, being a YAML subset) with these sections, all
optional unless noted:

    router:      max_mts, alpha (required), seed, learning_rate, l2,
                 rerank_policy, standardize_features
    corpus:      n_requests, n_domains, n_engines, feature_dim,
                 feature_signal, feature_noise_sigma, seed
    simulation:  quality_noise_sigma, observation_noise_sigma, seed,
                 quality_matrix (K x D rows), prices (K entries)
    engines:     list of {name, price_per_million_chars, backend};
                 backend is "sim" or an http(s) endpoint
    qe:          "sim" or an http(s) endpoint
    target_lang: passed through to remote engines
    grid:        max_mts (list), alpha (list), repetitions, base_seed
    report:      convergence_window, confusion_prefix, focus_max_mts,
                 focus_alpha, figures (bool)

Unknown keys are rejected so typos fail fast.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields as dc_fields
from typing import Optional

import numpy as np
import yaml

from .backends import HttpQualityEstimator, HttpTranslator, SimulatedEngineModel
from .domain import ConfigError, EngineSpec, RouterConfig
from .simulation import CorpusParams, SimulationConfig, default_simulation


@dataclass
class GridParams:
    max_mts: list[int] = field(default_factory=lambda: [1, 2, 3, 4])
    alpha: list[float] = field(default_factory=lambda: [0.2])
    repetitions: int = 5
    base_seed: int = 100


@dataclass
class ReportParams:
    convergence_window: int = 100
    confusion_prefix: int = 100
    focus_max_mts: Optional[int] = None
    focus_alpha: Optional[float] = None
    figures: bool = True


@dataclass
class EngineEntry:
    name: str
    price_per_million_chars: float
    backend: str = "sim"


@dataclass
class AppConfig:
    router: RouterConfig
    corpus: CorpusParams
    simulation: SimulationConfig
    engines: Optional[list[EngineEntry]]
    qe: str
    target_lang: str
    grid: GridParams
    report: ReportParams


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name) or {}
    if not isinstance(value, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    return dict(value)


def _build(cls, data: dict, section: str):
    known = {f.name for f in dc_fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in {section!r}: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {section!r} section: {exc}") from exc


def load_config(path) -> AppConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known_sections = {
        "version", "router", "corpus", "simulation", "engines", "qe", "target_lang", "grid", "report",
    }
    unknown = set(raw) - known_sections
    if unknown:
        raise ConfigError(f"{path}: unknown sections {sorted(unknown)}")

    router_raw = _section(raw, "router")
    router_raw.setdefault("max_mts", 4)
    router_raw.setdefault("alpha", 0.2)
    router = _build(RouterConfig, router_raw, "router")

    corpus_raw = _section(raw, "corpus")
    corpus_raw.setdefault("n_requests", 2000)
    corpus_raw.setdefault("n_domains", 4)
    corpus_raw.setdefault("n_engines", 4)
    corpus_raw.setdefault("feature_dim", 32)
    corpus = _build(CorpusParams, corpus_raw, "corpus")

    sim_raw = _section(raw, "simulation")
    sim_unknown = set(sim_raw) - {"quality_noise_sigma", "observation_noise_sigma", "seed", "quality_matrix", "prices"}
    if sim_unknown:
        raise ConfigError(f"unknown keys in 'simulation': {sorted(sim_unknown)}")
    base = default_simulation(
        n_engines=corpus.n_engines,
        n_domains=corpus.n_domains,
        quality_noise_sigma=sim_raw.get("quality_noise_sigma", 0.03),
        observation_noise_sigma=sim_raw.get("observation_noise_sigma", 0.02),
        seed=sim_raw.get("seed", 7),
    )
    engines_raw = raw.get("engines")
    engine_entries = None
    if engines_raw is not None:
        if not isinstance(engines_raw, list) or not engines_raw:
            raise ConfigError("'engines' must be a non-empty list")
        engine_entries = [_build(EngineEntry, dict(e), "engines") for e in engines_raw]
        if len(engine_entries) != corpus.n_engines:
            raise ConfigError(
                f"'engines' lists {len(engine_entries)} engines but corpus.n_engines={corpus.n_engines}"
            )
    matrix = sim_raw.get("quality_matrix")
    prices = sim_raw.get("prices")
    if prices is None and engine_entries is not None:
        prices = [e.price_per_million_chars for e in engine_entries]
    if matrix is not None or prices is not None:
        try:
            model = SimulatedEngineModel(
                quality_matrix=np.array(matrix) if matrix is not None else base.engine_model.quality_matrix,
                quality_noise_sigma=base.engine_model.quality_noise_sigma,
                prices=tuple(prices) if prices is not None else base.engine_model.prices,
            )
        except ValueError as exc:
            raise ConfigError(f"invalid simulation section: {exc}") from exc
        simulation = SimulationConfig(
            engine_model=model, observation_noise_sigma=base.observation_noise_sigma, seed=base.seed
        )
    else:
        simulation = base

    qe = raw.get("qe", "sim")
    if qe != "sim" and not str(qe).startswith(("http://", "https://")):
        raise ConfigError(f"'qe' must be \"sim\" or an http(s) endpoint, got {qe!r}")

    grid_raw = _section(raw, "grid")
    grid = _build(GridParams, grid_raw, "grid")
    if grid.repetitions < 1:
        raise ConfigError("grid.repetitions must be >= 1")

    report = _build(ReportParams, _section(raw, "report"), "report")

    return AppConfig(
        router=router,
        corpus=corpus,
        simulation=simulation,
        engines=engine_entries,
        qe=str(qe),
        target_lang=str(raw.get("target_lang", "xx")),
        grid=grid,
        report=report,
    )


def load_engines_file(path) -> list[EngineEntry]:
    """Standalone engines roster: a YAML list of engine entries."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"engines file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if isinstance(raw, dict) and "engines" in raw:
        raw = raw["engines"]
    if not isinstance(raw, list) or not raw:
        raise ConfigError(f"{path}: expected a non-empty list of engines")
    return [_build(EngineEntry, dict(e), "engines") for e in raw]


class RunBackends:
    """Engine fleet + QE + optional truth, duck-compatible with the
    simulated backend set where truth exists."""

    def __init__(self, engines: list[EngineSpec], qe, truth=None):
        self.engines = engines
        self.qe = qe
        self._truth = truth

    @property
    def n_engines(self) -> int:
        return len(self.engines)

    @property
    def prices(self) -> dict[int, float]:
        return {e.engine_id: e.price_per_million_chars for e in self.engines}

    @property
    def has_truth(self) -> bool:
        return self._truth is not None

    def true_quality(self, request, engine_id: int) -> float:
        if self._truth is None:
            raise LookupError("no ground truth available for this backend fleet")
        return self._truth(request, engine_id)


def build_run_backends(app: AppConfig, corpus) -> RunBackends:
    """Bind engines and QE per the config, over a generated/loaded corpus."""
    from .simulation import build_backends

    sim_set = build_backends(
        app.simulation, corpus,
        engine_names=[e.name for e in app.engines] if app.engines else None,
    )
    engines = list(sim_set.engines)
    all_sim = True
    if app.engines:
        rebuilt = []
        for eid, entry in enumerate(app.engines):
            if entry.backend == "sim":
                rebuilt.append(engines[eid])
            elif entry.backend.startswith(("http://", "https://")):
                all_sim = False
                rebuilt.append(
                    EngineSpec(
                        engine_id=eid,
                        name=entry.name,
                        price_per_million_chars=entry.price_per_million_chars,
                        backend=HttpTranslator(entry.backend, target_lang=app.target_lang),
                    )
                )
            else:
                raise ConfigError(f"engine {entry.name!r}: backend must be \"sim\" or an http(s) endpoint")
        engines = rebuilt
    qe = sim_set.qe if app.qe == "sim" else HttpQualityEstimator(app.qe)
    truth = sim_set.true_quality if all_sim else None
    return RunBackends(engines, qe, truth)
