"""Command-line interface.

Subcommands:

    run        route one corpus once; write audit trail + summary
    grid       full (max_mts, alpha) study with baselines, tables, figures
    baselines  full-ensemble and best-single-engine references only
    report     recompute totals from audit trails and verify them

Exit codes: 0 success, 1 configuration error, 2 backend error, 3 internal
invariant violation.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import replace

import click
import numpy as np

from .backends import BackendError
from .config import AppConfig, build_run_backends, load_config, load_engines_file
from .domain import ConfigError, InvariantViolation, validate_config
from .harness import baseline_best_mt, baseline_full_ensemble, run_grid, run_router_once
from .reporting import (
    audit_filename,
    collect_audit_files,
    render_figures,
    verify_audit_file,
    write_audit_csv,
    write_baselines_csv,
    write_confusion_csv,
    write_convergence_csv,
    write_grid_csv,
    write_summary_json,
)
from .router import run as run_router
from .simulation import generate_corpus, load_corpus

EXIT_CONFIG = 1
EXIT_BACKEND = 2
EXIT_INVARIANT = 3


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            _fail(EXIT_CONFIG, str(exc))
        except BackendError as exc:
            suffix = f" [backend: {exc.backend}]" if exc.backend else ""
            _fail(EXIT_BACKEND, f"{exc}{suffix}")
        except InvariantViolation as exc:
            _fail(EXIT_INVARIANT, str(exc))

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _load_app(config_path, engines_path, qe, seed, max_mts, alpha) -> AppConfig:
    if config_path:
        app = load_config(config_path)
    else:
        app = load_config(os.devnull)  # all defaults
    if engines_path:
        entries = load_engines_file(engines_path)
        if len(entries) != app.corpus.n_engines:
            raise ConfigError(
                f"engines file lists {len(entries)} engines but corpus.n_engines={app.corpus.n_engines}"
            )
        prices = tuple(e.price_per_million_chars for e in entries)
        from .backends import SimulatedEngineModel
        from .simulation import SimulationConfig

        model = SimulatedEngineModel(
            quality_matrix=app.simulation.engine_model.quality_matrix,
            quality_noise_sigma=app.simulation.engine_model.quality_noise_sigma,
            prices=prices,
        )
        app.simulation = SimulationConfig(
            engine_model=model,
            observation_noise_sigma=app.simulation.observation_noise_sigma,
            seed=app.simulation.seed,
        )
        app.engines = entries
    updates = {}
    if seed is not None:
        updates["seed"] = seed
    if max_mts is not None:
        updates["max_mts"] = max_mts
    if alpha is not None:
        updates["alpha"] = alpha
    if updates:
        app.router = replace(app.router, **updates)
    if qe:
        if qe != "sim" and not qe.startswith(("http://", "https://")):
            raise ConfigError(f"--qe must be \"sim\" or an http(s) endpoint, got {qe!r}")
        app.qe = qe
    return app


def _load_corpus(app: AppConfig, corpus_path):
    if corpus_path:
        params, corpus = load_corpus(corpus_path)
        if params.n_engines != app.corpus.n_engines:
            raise ConfigError(
                f"corpus file was generated for {params.n_engines} engines, config has {app.corpus.n_engines}"
            )
        return corpus
    return generate_corpus(app.corpus)


_shared_options = [
    click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file."),
    click.option("--engines", "engines_path", type=click.Path(), default=None, help="YAML engines roster."),
    click.option("--corpus", "corpus_path", type=click.Path(), default=None, help="Corpus dump to load."),
    click.option("--qe", default=None, help='Quality estimator: "sim" or an http(s) endpoint.'),
    click.option("--seed", type=int, default=None, help="Router seed (run) / base seed (grid)."),
    click.option("--out", "out_dir", type=click.Path(), default="out", help="Output directory."),
]


def _with_shared(fn):
    for opt in reversed(_shared_options):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Adaptive MT routing experiments."""


@main.command("run")
@_with_shared
@click.option("--max-mts", type=int, default=None, help="Maximum engines sampled per request.")
@click.option("--alpha", type=float, default=None, help="Entropy threshold for exploitation.")
@_guarded
def cmd_run(config_path, engines_path, corpus_path, qe, seed, out_dir, max_mts, alpha):
    """Route the corpus once and write the audit trail."""
    app = _load_app(config_path, engines_path, qe, seed, max_mts, alpha)
    corpus = _load_corpus(app, corpus_path)
    backends = build_run_backends(app, corpus)
    validate_config(app.router, backends.engines)
    os.makedirs(out_dir, exist_ok=True)

    step_times: list[float] = []
    outcomes = run_router(
        corpus, app.router, backends.engines, backends.qe,
        seed=app.router.seed, step_times_out=step_times,
    )
    requests_by_id = {r.id: r for r in corpus}
    truth = backends.true_quality if backends.has_truth else None
    audit_path = os.path.join(out_dir, "run_audit.csv")
    write_audit_csv(audit_path, outcomes, requests_by_id, truth)

    total_cost = sum(o.cost for o in outcomes)
    exploit_fraction = sum(0 if o.explored else 1 for o in outcomes) / len(outcomes)
    summary = {
        "n_requests": len(outcomes),
        "max_mts": app.router.max_mts,
        "alpha": app.router.alpha,
        "seed": app.router.seed,
        "total_cost": total_cost,
        "exploit_fraction": exploit_fraction,
        "qe_calls": sum(o.qe_calls for o in outcomes),
        "engine_calls": sum(len(o.engines_called) for o in outcomes),
        "median_step_seconds": float(np.median(step_times)),
        "audit": audit_path,
    }
    if truth is not None:
        summary["mean_true_quality"] = float(
            np.mean([truth(o.request_id, o.chosen_engine) for o in outcomes])
        )
    with open(os.path.join(out_dir, "run_summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"routed {len(outcomes)} requests, total cost {total_cost:.3f} -> {audit_path}")


@main.command("grid")
@_with_shared
@click.option("--repetitions", type=int, default=None, help="Repetitions per grid cell.")
@click.option("--figures/--no-figures", "figures", default=None, help="Render PNG figures.")
@_guarded
def cmd_grid(config_path, engines_path, corpus_path, qe, seed, out_dir, repetitions, figures):
    """Run the full (max_mts, alpha) study and emit tables + figures."""
    app = _load_app(config_path, engines_path, qe, None, None, None)
    corpus = _load_corpus(app, corpus_path)
    backends = build_run_backends(app, corpus)
    if not backends.has_truth:
        raise ConfigError("grid experiments need a fully simulated engine fleet (ground truth)")
    base_seed = seed if seed is not None else app.grid.base_seed
    reps = repetitions if repetitions is not None else app.grid.repetitions

    collected: dict = {}
    report = run_grid(
        corpus, backends,
        max_mts_values=app.grid.max_mts,
        alpha_values=app.grid.alpha,
        repetitions=reps,
        base_seed=base_seed,
        router_defaults=app.router,
        focus_max_mts=app.report.focus_max_mts,
        focus_alpha=app.report.focus_alpha,
        convergence_window=app.report.convergence_window,
        confusion_prefix=app.report.confusion_prefix,
        collect_outcomes=collected,
    )
    os.makedirs(out_dir, exist_ok=True)
    audit_dir = os.path.join(out_dir, "audit")
    os.makedirs(audit_dir, exist_ok=True)
    requests_by_id = {r.id: r for r in corpus}
    for (m, a, rep), outcomes in sorted(collected.items()):
        write_audit_csv(
            os.path.join(audit_dir, audit_filename(m, a, rep)),
            outcomes, requests_by_id, backends.true_quality,
        )
    write_grid_csv(report, os.path.join(out_dir, "grid.csv"))
    write_baselines_csv(report.baselines, os.path.join(out_dir, "baselines.csv"))
    write_convergence_csv(report, os.path.join(out_dir, "convergence.csv"))
    write_confusion_csv(report, os.path.join(out_dir, "confusion.csv"))
    write_summary_json(report, os.path.join(out_dir, "summary.json"))
    want_figures = app.report.figures if figures is None else figures
    if want_figures:
        paths = render_figures(report, os.path.join(out_dir, "figures"))
        click.echo(f"rendered {len(paths)} figures")
    click.echo(f"grid complete: {len(report.cells)} cells x {reps} repetitions -> {out_dir}")


@main.command("baselines")
@_with_shared
@_guarded
def cmd_baselines(config_path, engines_path, corpus_path, qe, seed, out_dir):
    """Compute the full-ensemble and best-single-engine baselines."""
    app = _load_app(config_path, engines_path, qe, seed, None, None)
    corpus = _load_corpus(app, corpus_path)
    backends = build_run_backends(app, corpus)
    if not backends.has_truth:
        raise ConfigError("baselines need a fully simulated engine fleet (ground truth)")
    ensemble = baseline_full_ensemble(corpus, backends.engines, backends.qe, backends)
    best = baseline_best_mt(corpus, backends)
    os.makedirs(out_dir, exist_ok=True)
    write_baselines_csv([best, ensemble], os.path.join(out_dir, "baselines.csv"))
    choices_path = os.path.join(out_dir, "full_ensemble_choices.csv")
    with open(choices_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("request_id,chosen_engine\n")
        for r in corpus:
            fh.write(f"{r.id},{ensemble.choices_by_id[r.id]}\n")
    click.echo(
        f"full_ensemble cost={ensemble.total_cost:.3f} quality={ensemble.mean_true_quality:.4f}; "
        f"best_mt cost={best.total_cost:.3f} quality={best.mean_true_quality:.4f}"
    )


@main.command("report")
@_with_shared
@_guarded
def cmd_report(config_path, engines_path, corpus_path, qe, seed, out_dir):
    """Verify audit trails in --out against the grid table and recompute totals."""
    app = _load_app(config_path, engines_path, qe, None, None, None)
    prices = {
        eid: price for eid, price in enumerate(app.simulation.engine_model.prices)
    }
    audit_dir = os.path.join(out_dir, "audit")
    grid_path = os.path.join(out_dir, "grid.csv")
    if not os.path.isdir(audit_dir) or not os.path.exists(grid_path):
        raise ConfigError(f"{out_dir} does not contain grid.csv and audit/ to verify")
    files = collect_audit_files(audit_dir)
    if not files:
        raise ConfigError(f"no audit files found under {audit_dir}")

    per_cell: dict[tuple[int, float], list[dict]] = {}
    for (m, a, rep), path in sorted(files.items()):
        totals = verify_audit_file(path, prices)
        per_cell.setdefault((m, a), []).append(totals)

    with open(grid_path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        grid_rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    checked = 0
    for parts in grid_rows:
        m, a = int(parts[0]), float(parts[1])
        if (m, a) not in per_cell:
            raise InvariantViolation(f"grid cell ({m}, {a}) has no audit trails")
        totals = per_cell[(m, a)]
        cost_mean = float(np.mean([t["total_cost"] for t in totals]))
        quality_mean = float(np.mean([t["mean_true_quality"] for t in totals]))
        stored_cost, stored_quality = float(parts[3]), float(parts[5])
        if abs(cost_mean - stored_cost) > 1e-9 * max(1.0, abs(stored_cost)):
            raise InvariantViolation(
                f"cell ({m}, {a}): recomputed cost mean {cost_mean!r} != grid value {stored_cost!r}"
            )
        if not (np.isnan(quality_mean) and np.isnan(stored_quality)):
            if abs(quality_mean - stored_quality) > 1e-9:
                raise InvariantViolation(
                    f"cell ({m}, {a}): recomputed quality mean {quality_mean!r} != grid value {stored_quality!r}"
                )
        checked += 1
    recomputed = {
        f"m{m}_a{a!r}": {
            "runs": len(totals),
            "cost_mean": float(np.mean([t["total_cost"] for t in totals])),
            "quality_mean": float(np.mean([t["mean_true_quality"] for t in totals])),
            "qe_calls_mean": float(np.mean([t["qe_calls"] for t in totals])),
            "exploit_fraction_mean": float(np.mean([t["exploit_fraction"] for t in totals])),
        }
        for (m, a), totals in sorted(per_cell.items())
    }
    out_path = os.path.join(out_dir, "report_recomputed.json")
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump({"verified_cells": checked, "cells": recomputed}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"verified {checked} grid cells against {len(files)} audit trails -> {out_path}")


if __name__ == "__main__":
    main()
