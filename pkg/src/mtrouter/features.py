"""Source-segment featurization.

Surface features are language-agnostic and purely lexical: counts, ratios
and hashed character-trigram bucket frequencies. Heavier signals (neural
sentence embeddings) are ingested from a precomputed store rather than
computed here, keeping this module dependency-free and deterministic.

Vector layout produced by :func:`extract_surface`, in order:

    0: token count            (maximal runs of non-whitespace)
    1: character count        (code points)
    2: average token length   (0 when there are no tokens)
    3: digit ratio            (code points with str.isdigit)
    4: punctuation ratio      (Unicode category P*)
    5: uppercase ratio        (code points with str.isupper)
    6..6+B-1: hashed character-trigram bucket frequencies

Trigrams are all contiguous 3-code-point substrings. Buckets are assigned
by FNV-1a 64-bit over the trigram's UTF-8 bytes, reduced modulo B, so
vectors are bit-reproducible across platforms and runs.
"""

from __future__ import annotations

import unicodedata
from typing import Mapping, Optional

import numpy as np

from .domain import FeatureVector

SURFACE_BASE_DIM = 6
DEFAULT_TRIGRAM_BUCKETS = 64

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash. Fixed forever: feature vectors depend on it."""
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h


def surface_dim(trigram_buckets: int = DEFAULT_TRIGRAM_BUCKETS) -> int:
    return SURFACE_BASE_DIM + trigram_buckets


def extract_surface(source: str, trigram_buckets: int = DEFAULT_TRIGRAM_BUCKETS) -> FeatureVector:
    """Map text to its surface feature vector. Pure and total."""
    if trigram_buckets < 1:
        raise ValueError("trigram_buckets must be >= 1")
    out = np.zeros(SURFACE_BASE_DIM + trigram_buckets)
    tokens = source.split()
    n_chars = len(source)
    out[0] = len(tokens)
    out[1] = n_chars
    if tokens:
        out[2] = sum(len(t) for t in tokens) / len(tokens)
    if n_chars:
        digits = sum(1 for ch in source if ch.isdigit())
        punct = sum(1 for ch in source if unicodedata.category(ch).startswith("P"))
        upper = sum(1 for ch in source if ch.isupper())
        out[3] = digits / n_chars
        out[4] = punct / n_chars
        out[5] = upper / n_chars
    if n_chars >= 3:
        encoded = source
        n_trigrams = n_chars - 2
        for i in range(n_trigrams):
            bucket = fnv1a64(encoded[i:i + 3].encode("utf-8")) % trigram_buckets
            out[SURFACE_BASE_DIM + bucket] += 1.0
        out[SURFACE_BASE_DIM:] /= n_trigrams
    return FeatureVector(out)


class VectorStore:
    """Precomputed embedding vectors keyed by request id.

    File format: one record per line — request id, a tab, then
    comma-separated decimal floats.
    """

    def __init__(self, vectors: Mapping[str, np.ndarray]):
        self._vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}

    @classmethod
    def from_file(cls, path) -> "VectorStore":
        vectors: dict[str, np.ndarray] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line:
                    continue
                try:
                    rid, payload = line.split("\t", 1)
                    vec = np.array([float(x) for x in payload.split(",")])
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: malformed vector record") from exc
                vectors[rid] = vec
        return cls(vectors)

    def get(self, request_id: str) -> np.ndarray:
        if request_id not in self._vectors:
            raise KeyError(f"no stored vector for request id {request_id!r}")
        return self._vectors[request_id]

    def __len__(self) -> int:
        return len(self._vectors)


def ingest_precomputed(
    request_id: str,
    store: VectorStore,
    expected_dim: int,
    surface: Optional[FeatureVector] = None,
) -> FeatureVector:
    """Fetch a stored embedding, optionally appended after surface features.

    Raises KeyError when the id is absent and ValueError when the stored
    vector does not have ``expected_dim`` entries.
    """
    vec = store.get(request_id)
    if vec.shape[0] != expected_dim:
        raise ValueError(
            f"stored vector for {request_id!r} has dim {vec.shape[0]}, configured dim is {expected_dim}"
        )
    if surface is not None:
        return FeatureVector(np.concatenate([surface.values, vec]))
    return FeatureVector(vec)


VARIANCE_FLOOR = 1e-12


class RunningStats:
    """Per-dimension Welford accumulator for online standardization.

    Single-writer: exactly one stream updates an instance. Dimensions whose
    variance sits below ``VARIANCE_FLOOR`` pass through untouched so
    constant features stay intact.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    @property
    def variance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros(self.dim)
        return self._m2 / self.count

    def update(self, values: np.ndarray) -> None:
        if values.shape[0] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {values.shape[0]}")
        self.count += 1
        delta = values - self.mean
        self.mean = self.mean + delta / self.count
        self._m2 = self._m2 + delta * (values - self.mean)

    def transform(self, values: np.ndarray) -> np.ndarray:
        """Z-score using current statistics; floor-variance dims pass through."""
        if values.shape[0] != self.dim:
            raise ValueError(f"expected dim {self.dim}, got {values.shape[0]}")
        var = self.variance
        scaled = np.where(var >= VARIANCE_FLOOR, var, 1.0)
        centered = np.where(var >= VARIANCE_FLOOR, values - self.mean, values)
        return centered / np.sqrt(scaled)

    def inverse_transform(self, values: np.ndarray) -> np.ndarray:
        var = self.variance
        scaled = np.where(var >= VARIANCE_FLOOR, var, 1.0)
        raw = values * np.sqrt(scaled)
        return np.where(var >= VARIANCE_FLOOR, raw + self.mean, values)


def standardize(fv: FeatureVector, stats: RunningStats) -> tuple[FeatureVector, RunningStats]:
    """Z-score ``fv`` with the statistics seen so far, then absorb it.

    The returned vector never reflects its own contribution; the returned
    stats object is ``stats`` updated in place.
    """
    transformed = stats.transform(fv.values)
    stats.update(fv.values)
    return FeatureVector(transformed), stats
