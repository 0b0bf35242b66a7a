"""Scoring/embedding model implementations behind one small interface.

Two families:

* ``hashed-lexical:<dim>`` — deterministic, dependency-free default. The
  embedding is an L2-normalized bag of hashed character trigrams; the
  score blends embedding cosine with a length-ratio term. Useful for
  development, wire-protocol conformance and latency testing; it is not a
  trained quality model.

* ``sbert:<model-id>`` — wraps a sentence-transformers checkpoint (extra
  dependency, downloads weights on first load). The score is the rescaled
  cosine between source and hypothesis embeddings.

Both are stateless after construction and deterministic for fixed inputs.
"""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np


class ScoringModel(Protocol):
    identifier: str
    dim: int

    def embed(self, text: str) -> np.ndarray: ...

    def score_batch(self, source: str, hypotheses: Sequence[str]) -> list[float]: ...


def _bucket(trigram: str, dim: int) -> int:
    digest = hashlib.blake2b(trigram.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "big") % dim


class HashedLexicalModel:
    def __init__(self, dim: int = 256):
        if dim < 8:
            raise ValueError("embedding dim must be >= 8")
        self.identifier = f"hashed-lexical:{dim}"
        self.dim = dim

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim)
        padded = f" {text.lower()} "
        for i in range(max(len(padded) - 2, 0)):
            vec[_bucket(padded[i:i + 3], self.dim)] += 1.0
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    def _score_one(self, source_vec: np.ndarray, source: str, hypothesis: str) -> float:
        cosine = float(source_vec @ self.embed(hypothesis))
        ls, lh = len(source), len(hypothesis)
        length_ratio = 1.0 if max(ls, lh) == 0 else min(ls, lh) / max(ls, lh)
        return 0.8 * (cosine + 1.0) / 2.0 + 0.2 * length_ratio

    def score_batch(self, source: str, hypotheses: Sequence[str]) -> list[float]:
        source_vec = self.embed(source)
        return [self._score_one(source_vec, source, h) for h in hypotheses]


class SentenceTransformerModel:
    def __init__(self, model_id: str, device: str = "cpu"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise RuntimeError(
                "sentence-transformers is not installed; install the 'neural' extra"
            ) from exc
        self.identifier = f"sbert:{model_id}"
        self._model = SentenceTransformer(model_id, device=device)
        self.dim = int(self._model.get_sentence_embedding_dimension())

    def embed(self, text: str) -> np.ndarray:
        return np.asarray(self._model.encode([text], convert_to_numpy=True)[0], dtype=np.float64)

    def score_batch(self, source: str, hypotheses: Sequence[str]) -> list[float]:
        vectors = np.asarray(
            self._model.encode([source, *hypotheses], convert_to_numpy=True), dtype=np.float64
        )
        src = vectors[0]
        src = src / max(np.linalg.norm(src), 1e-12)
        out = []
        for vec in vectors[1:]:
            vec = vec / max(np.linalg.norm(vec), 1e-12)
            out.append(float((src @ vec + 1.0) / 2.0))
        return out


def load_model(identifier: str, device: str = "cpu") -> ScoringModel:
    if identifier.startswith("hashed-lexical"):
        _, _, suffix = identifier.partition(":")
        dim = int(suffix) if suffix else 256
        return HashedLexicalModel(dim=dim)
    if identifier.startswith("sbert:"):
        return SentenceTransformerModel(identifier.split(":", 1)[1], device=device)
    raise ValueError(f"unknown model identifier {identifier!r}")
