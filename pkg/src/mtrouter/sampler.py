"""Probability-weighted sampling of an ordered set of distinct engines.

Construction: perturb each log-probability with independent standard
Gumbel noise and keep the top min(m, K) by perturbed value, descending.
This is equivalent to sequential weighted sampling without replacement,
and the first element's marginal law is exactly the input distribution —
so under a confident prediction the sampled set starts with the predicted
engine with probability max_i p_i, which is what keeps exploration cheap.

Engines with zero probability can never precede positive-probability ones;
they fill the tail in ascending engine_id order so requesting m = K always
yields a full permutation.
"""

from __future__ import annotations

import numpy as np

from .domain import ClassProbabilities


def sample_engines(p, m: int, rng: np.random.Generator) -> list[int]:
    """Draw min(m, K) distinct engine ids, weighted by ``p``, in order.

    Deterministic given the generator state; always consumes exactly K
    Gumbel variates regardless of m.
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    probs = np.asarray(getattr(p, "probs", p), dtype=np.float64)
    k = probs.shape[0]
    gumbel = rng.gumbel(size=k)
    with np.errstate(divide="ignore"):
        keys = np.where(probs > 0.0, np.log(np.maximum(probs, 1e-300)) + gumbel, -np.inf)
    # Stable sort on negated keys: equal keys (the -inf tail) keep ascending id order.
    order = np.argsort(-keys, kind="stable")
    return [int(e) for e in order[: min(m, k)]]
