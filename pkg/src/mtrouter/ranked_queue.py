"""Pending-request queue ranked by classifier uncertainty.

Every entry caches the normalized entropy of the classifier's prediction
for its features, tagged with the model version (``updates_seen``) that
produced it. Policies trade ranking exactness for throughput:

    full      recompute every entry on rerank; pops are true maxima
    subset:n  recompute only the n stalest entries per rerank
    lazy      recompute nothing on rerank; pop refreshes candidates until
              the winning entry is current
    auto      full while the queue holds <= 1024 entries, subset:64 beyond

Entries live in parallel arrays with swap-remove deletion so a full rerank
is a single (n, F) × (F, K) matrix product.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .classifier import entropies_batch
from .domain import TranslationRequest, parse_rerank_policy

AUTO_FULL_THRESHOLD = 1024
AUTO_SUBSET_SIZE = 64

_INITIAL_CAPACITY = 16
_NEVER = -1  # model version marking an entry whose entropy was never computed


class RankedQueue:
    def __init__(
        self,
        model=None,
        policy: str = "auto",
        auto_full_threshold: int = AUTO_FULL_THRESHOLD,
        auto_subset_size: int = AUTO_SUBSET_SIZE,
    ):
        self._kind, self._subset_size = parse_rerank_policy(policy)
        self.policy = policy
        self._model = model
        self._auto_full_threshold = auto_full_threshold
        self._auto_subset_size = auto_subset_size
        self._requests: list[Optional[TranslationRequest]] = []
        self._feats: Optional[np.ndarray] = None
        self._entropy = np.zeros(_INITIAL_CAPACITY)
        self._version = np.full(_INITIAL_CAPACITY, _NEVER, dtype=np.int64)
        self._arrival = np.zeros(_INITIAL_CAPACITY, dtype=np.int64)
        self._size = 0
        self._ids: set[str] = set()
        self.recompute_count = 0  # cumulative entropy recomputations, for instrumentation

    def __len__(self) -> int:
        return self._size

    def request_ids(self) -> set[str]:
        return set(self._ids)

    def _grow(self, needed: int) -> None:
        cap = self._entropy.shape[0]
        if needed <= cap:
            return
        new_cap = max(needed, cap * 2)
        self._entropy = np.resize(self._entropy, new_cap)
        self._version = np.resize(self._version, new_cap)
        self._arrival = np.resize(self._arrival, new_cap)
        if self._feats is not None:
            grown = np.zeros((new_cap, self._feats.shape[1]))
            grown[: self._size] = self._feats[: self._size]
            self._feats = grown

    def push(self, request: TranslationRequest) -> None:
        if request.id in self._ids:
            raise ValueError(f"duplicate request id {request.id!r}")
        self._grow(self._size + 1)
        if self._feats is None:
            self._feats = np.zeros((self._entropy.shape[0], request.features.dim))
        i = self._size
        if i < len(self._requests):
            self._requests[i] = request
        else:
            self._requests.append(request)
        self._feats[i] = request.features.values
        # Optimistic hint: never-ranked entries look maximally uncertain, so
        # lazy pops must refresh them before passing them over.
        self._entropy[i] = 1.0
        self._version[i] = _NEVER
        self._arrival[i] = request.arrival_index
        self._ids.add(request.id)
        self._size += 1

    def _resolved_policy(self) -> tuple[str, Optional[int]]:
        if self._kind == "auto":
            if self._size <= self._auto_full_threshold:
                return "full", None
            return "subset", self._auto_subset_size
        return self._kind, self._subset_size

    def _recompute_rows(self, rows: np.ndarray, model) -> None:
        probs = model.probs_batch(self._feats[rows])
        self._entropy[rows] = entropies_batch(probs)
        self._version[rows] = model.updates_seen
        self.recompute_count += int(rows.shape[0])

    def rerank(self, model=None) -> int:
        """Refresh cached entropies per policy; returns how many were recomputed."""
        if model is not None:
            self._model = model
        model = self._model
        if model is None or self._size == 0:
            return 0
        kind, subset = self._resolved_policy()
        if kind == "lazy":
            return 0
        if kind == "full":
            rows = np.arange(self._size)
        else:
            order = np.lexsort((self._arrival[: self._size], self._version[: self._size]))
            rows = order[: min(subset, self._size)]
        self._recompute_rows(rows, model)
        return int(rows.shape[0])

    def _argmax_entry(self) -> int:
        ent = self._entropy[: self._size]
        top = np.nonzero(ent == ent.max())[0]
        if top.shape[0] == 1:
            return int(top[0])
        return int(top[np.argmin(self._arrival[top])])

    def pop_max_entropy(self) -> TranslationRequest:
        """Remove and return a maximal-entropy entry; ties go to the oldest."""
        if self._size == 0:
            raise IndexError("pop from empty queue")
        model = self._model
        kind, _ = self._resolved_policy()
        if model is not None:
            current = model.updates_seen
            if kind == "lazy":
                while True:
                    i = self._argmax_entry()
                    if self._version[i] == current:
                        break
                    self._recompute_rows(np.array([i]), model)
            elif kind == "full" and np.any(self._version[: self._size] != current):
                # Guarantee the full-policy freshness invariant even when the
                # caller popped without an explicit rerank.
                self._recompute_rows(np.arange(self._size), model)
        i = self._argmax_entry()
        request = self._requests[i]
        assert request is not None
        last = self._size - 1
        if i != last:
            self._requests[i] = self._requests[last]
            self._feats[i] = self._feats[last]
            self._entropy[i] = self._entropy[last]
            self._version[i] = self._version[last]
            self._arrival[i] = self._arrival[last]
        self._requests[last] = None
        self._size = last
        self._ids.remove(request.id)
        return request
