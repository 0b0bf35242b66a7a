"""Report emission and audit-trail round-tripping.

Tables are comma-separated with floats printed via repr (shortest exact
round-trip), so identical experiments produce byte-identical files and
every total is exactly recomputable from the per-step audit trails.
Figures are rendered to PNG alongside the tables.
"""

from __future__ import annotations

import json
import os
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .domain import InvariantViolation, StepOutcome, TranslationRequest, step_cost
from .harness import BaselineResult, ExperimentReport

AUDIT_COLUMNS = (
    "step,request_id,arrival_index,source_chars,chosen_engine,engines_called,"
    "qe_calls,cost,explored,learned_label,entropy,true_quality"
)

_AUDIT_NAME_RE = re.compile(r"^audit_m(\d+)_a([0-9.eE+-]+)_r(\d+)\.csv$")


def _f(x: float) -> str:
    return repr(float(x))


def audit_filename(max_mts: int, alpha: float, rep: int) -> str:
    return f"audit_m{max_mts}_a{_f(alpha)}_r{rep:03d}.csv"


def write_audit_csv(
    path,
    outcomes: Sequence[StepOutcome],
    requests_by_id: dict[str, TranslationRequest],
    truth=None,
) -> None:
    """One row per step, processing order. ``truth`` is a callable
    (request_id, engine_id) -> float or None when no ground truth exists."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(AUDIT_COLUMNS + "\n")
        for i, o in enumerate(outcomes):
            request = requests_by_id[o.request_id]
            quality = truth(o.request_id, o.chosen_engine) if truth is not None else float("nan")
            fh.write(
                ",".join(
                    [
                        str(i),
                        o.request_id,
                        str(request.arrival_index),
                        str(len(request.source)),
                        str(o.chosen_engine),
                        "|".join(str(e) for e in sorted(o.engines_called)),
                        str(o.qe_calls),
                        _f(o.cost),
                        str(int(o.explored)),
                        str(o.learned_label),
                        _f(o.entropy_at_decision),
                        _f(quality),
                    ]
                )
                + "\n"
            )


@dataclass
class AuditRow:
    step: int
    request_id: str
    arrival_index: int
    source_chars: int
    chosen_engine: int
    engines_called: tuple[int, ...]
    qe_calls: int
    cost: float
    explored: bool
    learned_label: int
    entropy: float
    true_quality: float


def read_audit_csv(path) -> list[AuditRow]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != AUDIT_COLUMNS:
            raise InvariantViolation(f"{path}: unexpected audit header")
        for line in fh:
            parts = line.rstrip("\n").split(",")
            if len(parts) != 12:
                raise InvariantViolation(f"{path}: malformed audit row: {line!r}")
            rows.append(
                AuditRow(
                    step=int(parts[0]),
                    request_id=parts[1],
                    arrival_index=int(parts[2]),
                    source_chars=int(parts[3]),
                    chosen_engine=int(parts[4]),
                    engines_called=tuple(int(x) for x in parts[5].split("|")),
                    qe_calls=int(parts[6]),
                    cost=float(parts[7]),
                    explored=bool(int(parts[8])),
                    learned_label=int(parts[9]),
                    entropy=float(parts[10]),
                    true_quality=float(parts[11]),
                )
            )
    return rows


def verify_audit_file(path, prices: dict[int, float]) -> dict:
    """Recompute one audit trail's totals, checking each row's cost exactly.

    The stored cost must equal the canonical formula bit-for-bit; any
    mismatch means the trail was tampered with or the writer is broken.
    """
    rows = read_audit_csv(path)
    total_cost = 0.0
    quality_sum = 0.0
    engine_calls = 0
    qe_calls = 0
    exploits = 0
    for row in rows:
        expected = step_cost(row.engines_called, row.source_chars, prices)
        if expected != row.cost:
            raise InvariantViolation(
                f"{path}: step {row.step} cost {row.cost!r} != recomputed {expected!r}"
            )
        if row.chosen_engine not in row.engines_called:
            raise InvariantViolation(f"{path}: step {row.step} chose an engine it never called")
        if not row.explored and (row.engines_called != (row.chosen_engine,) or row.qe_calls != 0):
            raise InvariantViolation(f"{path}: step {row.step} violates the exploit contract")
        total_cost += row.cost
        quality_sum += row.true_quality
        engine_calls += len(row.engines_called)
        qe_calls += row.qe_calls
        exploits += 0 if row.explored else 1
    n = len(rows)
    return {
        "steps": n,
        "total_cost": total_cost,
        "mean_true_quality": quality_sum / n if n else float("nan"),
        "engine_calls": engine_calls,
        "qe_calls": qe_calls,
        "exploit_fraction": exploits / n if n else float("nan"),
    }


def collect_audit_files(audit_dir) -> dict[tuple[int, float, int], str]:
    found = {}
    for name in sorted(os.listdir(audit_dir)):
        m = _AUDIT_NAME_RE.match(name)
        if m:
            found[(int(m.group(1)), float(m.group(2)), int(m.group(3)))] = os.path.join(audit_dir, name)
    return found


GRID_COLUMNS = (
    "max_mts,alpha,repetitions,cost_mean,cost_std,quality_mean,quality_std,"
    "engine_calls_mean,qe_calls_mean,exploit_fraction_mean,degenerate_std"
)


def write_grid_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(GRID_COLUMNS + "\n")
        for c in report.cells:
            fh.write(
                ",".join(
                    [
                        str(c.max_mts),
                        _f(c.alpha),
                        str(c.repetitions),
                        _f(c.cost_mean),
                        _f(c.cost_std),
                        _f(c.quality_mean),
                        _f(c.quality_std),
                        _f(float(np.mean(c.engine_calls))),
                        _f(float(np.mean(c.qe_calls))),
                        _f(float(np.mean(c.exploit_fractions))),
                        str(int(c.degenerate_std)),
                    ]
                )
                + "\n"
            )


def write_baselines_csv(baselines: Sequence[BaselineResult], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("name,total_cost,mean_true_quality,engine_calls,qe_calls\n")
        for b in baselines:
            fh.write(
                f"{b.name},{_f(b.total_cost)},{_f(b.mean_true_quality)},{b.engine_calls},{b.qe_calls}\n"
            )


def write_convergence_csv(report: ExperimentReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,windowed_f1_mean\n")
        for i, v in zip(report.convergence_steps, report.convergence_mean_f1):
            fh.write(f"{int(i)},{_f(v)}\n")


def write_confusion_csv(report: ExperimentReport, path) -> None:
    k = report.confusion.shape[0]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("ensemble_engine," + ",".join(f"router_{j}" for j in range(k)) + ",support\n")
        for i in range(k):
            cells = ",".join(_f(v) for v in report.confusion[i])
            fh.write(f"{i},{cells},{int(report.confusion_row_counts[i])}\n")


def write_summary_json(report: ExperimentReport, path, extra: Optional[dict] = None) -> None:
    payload = {
        "grid": {
            "max_mts": report.max_mts_values,
            "alpha": report.alpha_values,
            "repetitions": report.repetitions,
            "base_seed": report.base_seed,
        },
        "corpus": {"n_requests": report.n_requests, "n_engines": report.n_engines},
        "focus": {
            "max_mts": report.focus_max_mts,
            "alpha": report.focus_alpha,
            "convergence_window": report.convergence_window,
            "confusion_prefix": report.confusion_prefix,
        },
        "cells": [
            {
                "max_mts": c.max_mts,
                "alpha": c.alpha,
                "cost_mean": c.cost_mean,
                "cost_std": c.cost_std,
                "quality_mean": c.quality_mean,
                "quality_std": c.quality_std,
                "exploit_fraction_mean": float(np.mean(c.exploit_fractions)),
                "degenerate_std": c.degenerate_std,
            }
            for c in report.cells
        ],
        "baselines": {
            b.name: {
                "total_cost": b.total_cost,
                "mean_true_quality": b.mean_true_quality,
                "engine_calls": b.engine_calls,
                "qe_calls": b.qe_calls,
            }
            for b in report.baselines
        },
    }
    if extra:
        payload.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def render_figures(report: ExperimentReport, out_dir) -> list[str]:
    """Cost/quality trade-off curves, the convergence curve and the
    confusion heatmap, next to the delimited tables they were drawn from."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    focus = [report.cell(m, report.focus_alpha) for m in report.max_mts_values]
    baselines = {b.name: b for b in report.baselines}

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    means = [c.cost_mean for c in focus]
    stds = [c.cost_std for c in focus]
    ax.errorbar(report.max_mts_values, means, yerr=stds, marker="o", label="router")
    ax.axhline(baselines["full_ensemble"].total_cost, ls="--", color="tab:red", label="full ensemble")
    ax.axhline(baselines["best_mt"].total_cost, ls=":", color="tab:gray", label="best single engine")
    ax.set_xlabel("max engines sampled")
    ax.set_ylabel("total cost")
    ax.set_title(f"Cost vs max engines (alpha={report.focus_alpha:g})")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "cost_vs_max_mts.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    means = [c.quality_mean for c in focus]
    stds = [c.quality_std for c in focus]
    ax.errorbar(report.max_mts_values, means, yerr=stds, marker="o", label="router")
    ax.axhline(baselines["full_ensemble"].mean_true_quality, ls="--", color="tab:red", label="full ensemble")
    ax.axhline(baselines["best_mt"].mean_true_quality, ls=":", color="tab:gray", label="best single engine")
    ax.set_xlabel("max engines sampled")
    ax.set_ylabel("mean true quality")
    ax.set_title(f"Quality vs max engines (alpha={report.focus_alpha:g})")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "quality_vs_max_mts.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    mask = ~np.isnan(report.convergence_mean_f1)
    ax.plot(report.convergence_steps[mask], report.convergence_mean_f1[mask])
    ax.set_xlabel("request index")
    ax.set_ylabel(f"weighted F1 (window {report.convergence_window})")
    ax.set_ylim(0.0, 1.05)
    ax.set_title(
        f"Agreement with full ensemble (max_mts={report.focus_max_mts}, alpha={report.focus_alpha:g})"
    )
    fig.tight_layout()
    path = os.path.join(out_dir, "convergence_f1.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)

    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    k = report.confusion.shape[0]
    im = ax.imshow(report.confusion, cmap="Blues", vmin=0.0, vmax=1.0)
    for i in range(k):
        for j in range(k):
            v = report.confusion[i, j]
            ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                    color="white" if v > 0.6 else "black", fontsize=8)
    ax.set_xlabel("router choice")
    ax.set_ylabel("ensemble choice")
    ax.set_xticks(range(k))
    ax.set_yticks(range(k))
    ax.set_title(f"Normalized confusion, first {report.confusion_prefix} requests")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    path = os.path.join(out_dir, "confusion_matrix.png")
    fig.savefig(path, dpi=120)
    plt.close(fig)
    paths.append(path)
    return paths
