"""Agreement metrics between router choices and full-ensemble choices."""

from __future__ import annotations

from typing import Sequence

import numpy as np


def _as_labels(seq: Sequence[int], n_classes: int, name: str) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.int64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be a 1-D label sequence")
    if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
        raise ValueError(f"{name} contains labels outside [0, {n_classes})")
    return arr


def weighted_f1(predicted: Sequence[int], reference: Sequence[int], n_classes: int) -> float:
    """Per-class F1 averaged with reference-support weights; 0/0 counts as 0."""
    pred = _as_labels(predicted, n_classes, "predicted")
    ref = _as_labels(reference, n_classes, "reference")
    if pred.shape[0] != ref.shape[0]:
        raise ValueError(f"length mismatch: {pred.shape[0]} predictions vs {ref.shape[0]} references")
    if pred.shape[0] == 0:
        raise ValueError("empty input")
    total = 0.0
    n = ref.shape[0]
    for c in range(n_classes):
        support = int(np.sum(ref == c))
        if support == 0:
            continue
        tp = int(np.sum((pred == c) & (ref == c)))
        fp = int(np.sum((pred == c) & (ref != c)))
        fn = support - tp
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom else 0.0
        total += (support / n) * f1
    return total


def confusion_matrix(
    router_choices: Sequence[int],
    ensemble_choices: Sequence[int],
    first_n: int,
    n_classes: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Row-normalized confusion over the first ``first_n`` paired choices.

    Rows index the ensemble choice, columns the router choice. Returns
    (matrix, row_counts); rows with zero support stay all-zero and are
    flagged by their count.
    """
    router = _as_labels(router_choices, n_classes, "router choices")
    ensemble = _as_labels(ensemble_choices, n_classes, "ensemble choices")
    if router.shape[0] != ensemble.shape[0]:
        raise ValueError("length mismatch between router and ensemble choices")
    if first_n > router.shape[0]:
        raise ValueError(f"first_n={first_n} exceeds sequence length {router.shape[0]}")
    counts = np.zeros((n_classes, n_classes))
    for r, e in zip(router[:first_n], ensemble[:first_n]):
        counts[e, r] += 1.0
    row_counts = counts.sum(axis=1)
    matrix = np.zeros_like(counts)
    supported = row_counts > 0
    matrix[supported] = counts[supported] / row_counts[supported, None]
    return matrix, row_counts.astype(np.int64)


def windowed_f1_series(
    router_choices: Sequence[int],
    ensemble_choices: Sequence[int],
    n_classes: int,
    window: int = 100,
) -> np.ndarray:
    """Weighted F1 over a sliding window, indexed by the window's last step.

    Entry t (t >= window-1) covers steps [t-window+1, t]; earlier entries
    are NaN so the series aligns with the step index.
    """
    router = _as_labels(router_choices, n_classes, "router choices")
    ensemble = _as_labels(ensemble_choices, n_classes, "ensemble choices")
    if router.shape[0] != ensemble.shape[0]:
        raise ValueError("length mismatch between router and ensemble choices")
    if window < 1:
        raise ValueError("window must be >= 1")
    n = router.shape[0]
    series = np.full(n, np.nan)
    for t in range(window - 1, n):
        series[t] = weighted_f1(router[t - window + 1 : t + 1], ensemble[t - window + 1 : t + 1], n_classes)
    return series
