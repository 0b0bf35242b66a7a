"""MT-engine and quality-estimator backends.

Two families behind the same protocols:

* Simulated backends for desk-scale experiments. Every hidden quality draw
  and every observation noise draw is a pure function of
  (seed, request_id, engine_id, stream tag) — repeated calls are identical,
  there is no shared mutable state, and the evaluation harness can recover
  the noise-free truth without going through the router.

* HTTP clients speaking a fixed wire protocol (compact JSON bodies):

      POST /translate  {"id", "source", "target_lang"} -> {"translation"}
      POST /score      {"source", "hypotheses": [...]} -> {"scores": [...]}
      POST /embed      {"source"}                      -> {"embedding": [...]}

  Non-2xx responses carry {"error": string}. Clients never retry unless
  explicitly configured to, and they count every request they send so cost
  accounting can be audited.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import requests

from .domain import EngineSpec, QEScore, TranslationRequest


class BackendError(RuntimeError):
    """A backend call failed; carries the backend identity for reporting."""

    def __init__(self, message: str, backend: str = ""):
        super().__init__(message)
        self.backend = backend


class BackendTimeout(BackendError):
    pass


class BackendHTTPError(BackendError):
    def __init__(self, message: str, backend: str = "", status: int = 0):
        super().__init__(message, backend)
        self.status = status


class BackendProtocolError(BackendError):
    """Response did not match the wire protocol (malformed body, bad types)."""


class SimulationContractError(BackendError):
    """Simulated QE was asked to score a hypothesis it never produced."""


def stable_hash64(text: str) -> int:
    """Platform-independent 64-bit hash used to derive per-request RNG streams."""
    return int.from_bytes(hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest(), "big")


_QUALITY_STREAM = 0
_QE_STREAM = 1
_TEXT_STREAM = 2


def _stream_rng(seed: int, request_id: str, engine_id: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, stable_hash64(request_id), engine_id, stream])


@dataclass(frozen=True)
class SimulatedEngineModel:
    """Ground truth of the simulated engine fleet.

    quality_matrix[e, d] is the mean quality of engine e on latent domain d;
    a request's hidden quality is that mean plus Gaussian noise, clamped to
    [0, 1].
    """

    quality_matrix: np.ndarray  # (K, D)
    quality_noise_sigma: float
    prices: tuple[float, ...]  # per engine, per million source characters

    def __post_init__(self):
        matrix = np.array(self.quality_matrix, dtype=np.float64)
        matrix.setflags(write=False)
        object.__setattr__(self, "quality_matrix", matrix)
        object.__setattr__(self, "prices", tuple(float(p) for p in self.prices))
        if matrix.ndim != 2:
            raise ValueError("quality_matrix must be 2-D (engines x domains)")
        if np.any(matrix < 0.0) or np.any(matrix > 1.0):
            raise ValueError("quality_matrix entries must lie in [0, 1]")
        if self.quality_noise_sigma < 0:
            raise ValueError("quality_noise_sigma must be >= 0")
        if len(self.prices) != matrix.shape[0]:
            raise ValueError("one price per engine required")
        if any(p < 0 for p in self.prices):
            raise ValueError("prices must be >= 0")

    @property
    def n_engines(self) -> int:
        return self.quality_matrix.shape[0]

    @property
    def n_domains(self) -> int:
        return self.quality_matrix.shape[1]


def hidden_quality(
    model: SimulatedEngineModel, seed: int, request_id: str, engine_id: int, domain: int
) -> float:
    """The true quality q* an engine achieves on one request. Pure."""
    base = model.quality_matrix[engine_id, domain]
    if model.quality_noise_sigma == 0.0:
        return float(base)
    noise = model.quality_noise_sigma * _stream_rng(seed, request_id, engine_id, _QUALITY_STREAM).standard_normal()
    return float(np.clip(base + noise, 0.0, 1.0))


# Synthetic translations carry a parseable marker so the simulated QE can
# recover (engine_id, request_id) statelessly; the id is length-prefixed
# because ids are arbitrary strings.
_MARKER_RE = re.compile(r"^\[mt:e(\d+):n(\d+):")

_SYLLABLES = (
    "ta", "re", "mi", "loso", "ven", "dra", "ku", "shi", "pal", "or",
    "ne", "va", "zu", "lin", "gor", "sa",
)


def _pseudo_words(rng: np.random.Generator, n_words: int) -> str:
    words = []
    for _ in range(n_words):
        n_syl = int(rng.integers(1, 4))
        words.append("".join(_SYLLABLES[int(rng.integers(len(_SYLLABLES)))] for _ in range(n_syl)))
    return " ".join(words)


def encode_translation(engine_id: int, request_id: str, seed: int) -> str:
    body = _pseudo_words(_stream_rng(seed, request_id, engine_id, _TEXT_STREAM), 5)
    return f"[mt:e{engine_id}:n{len(request_id)}:{request_id}] {body}"


def decode_translation(hypothesis: str) -> tuple[int, str]:
    m = _MARKER_RE.match(hypothesis)
    if m:
        engine_id = int(m.group(1))
        id_len = int(m.group(2))
        start = m.end()
        rid = hypothesis[start:start + id_len]
        if len(rid) == id_len and hypothesis[start + id_len:start + id_len + 2] == "] ":
            return engine_id, rid
    raise SimulationContractError(
        f"hypothesis was not produced by a simulated engine in this run: {hypothesis[:60]!r}",
        backend="sim-qe",
    )


class SimulatedTranslator:
    """Deterministic stand-in for one MT engine."""

    def __init__(
        self,
        engine_id: int,
        model: SimulatedEngineModel,
        domain_by_id: Mapping[str, int],
        seed: int,
    ):
        self.engine_id = engine_id
        self.model = model
        self._domains = domain_by_id
        self.seed = seed
        self.call_count = 0

    def _domain(self, request_id: str) -> int:
        try:
            return self._domains[request_id]
        except KeyError:
            raise SimulationContractError(
                f"request {request_id!r} is not part of the simulated corpus",
                backend=f"sim-engine-{self.engine_id}",
            ) from None

    def translate(self, source: str, request_id: str) -> str:
        self._domain(request_id)  # unknown requests fail before producing text
        self.call_count += 1
        return encode_translation(self.engine_id, request_id, self.seed)

    def hidden_quality(self, request_id: str) -> float:
        """Harness-only access to q*; router code must not call this."""
        return hidden_quality(self.model, self.seed, request_id, self.engine_id, self._domain(request_id))


class SimulatedQualityEstimator:
    """Noisy observation of hidden quality: score = q* + Normal(0, sigma)."""

    def __init__(
        self,
        model: SimulatedEngineModel,
        domain_by_id: Mapping[str, int],
        observation_noise_sigma: float,
        seed: int,
    ):
        if observation_noise_sigma < 0:
            raise ValueError("observation_noise_sigma must be >= 0")
        self.model = model
        self._domains = domain_by_id
        self.observation_noise_sigma = observation_noise_sigma
        self.seed = seed
        self.call_count = 0

    def score(self, source: str, hypothesis: str) -> float:
        engine_id, request_id = decode_translation(hypothesis)
        if request_id not in self._domains:
            raise SimulationContractError(
                f"request {request_id!r} is not part of the simulated corpus", backend="sim-qe"
            )
        if not 0 <= engine_id < self.model.n_engines:
            raise SimulationContractError(f"unknown engine id {engine_id}", backend="sim-qe")
        self.call_count += 1
        q = hidden_quality(self.model, self.seed, request_id, engine_id, self._domains[request_id])
        if self.observation_noise_sigma == 0.0:
            return q
        nu = self.observation_noise_sigma * _stream_rng(self.seed, request_id, engine_id, _QE_STREAM).standard_normal()
        return q + nu

    def score_batch(self, source: str, hypotheses: Sequence[str]) -> list[float]:
        return [self.score(source, h) for h in hypotheses]


@dataclass
class HttpClientConfig:
    timeout: float = 10.0  # seconds, applies to connect and read
    retries: int = 0  # extra attempts after the first; never implicit
    max_concurrency: int = 8


class _HttpJsonClient:
    def __init__(self, endpoint: str, config: Optional[HttpClientConfig] = None):
        self.endpoint = endpoint.rstrip("/")
        self.config = config or HttpClientConfig()
        self.call_count = 0  # every HTTP request actually sent, retries included
        self._session = requests.Session()
        self._gate = threading.BoundedSemaphore(self.config.max_concurrency)

    def _post(self, path: str, body: dict) -> dict:
        url = self.endpoint + path
        payload = json.dumps(body, separators=(",", ":"))
        attempts = self.config.retries + 1
        last_exc: Optional[BackendError] = None
        for _ in range(attempts):
            try:
                with self._gate:
                    self.call_count += 1
                    resp = self._session.post(
                        url,
                        data=payload,
                        headers={"Content-Type": "application/json"},
                        timeout=self.config.timeout,
                    )
            except requests.Timeout as exc:
                last_exc = BackendTimeout(f"timeout calling {url}", backend=url)
                last_exc.__cause__ = exc
                continue
            except requests.RequestException as exc:
                last_exc = BackendError(f"transport failure calling {url}: {exc}", backend=url)
                last_exc.__cause__ = exc
                continue
            if not 200 <= resp.status_code < 300:
                message = ""
                try:
                    message = resp.json().get("error", "")
                except Exception:
                    pass
                last_exc = BackendHTTPError(
                    f"{url} returned {resp.status_code}: {message or resp.text[:200]}",
                    backend=url,
                    status=resp.status_code,
                )
                continue
            try:
                return resp.json()
            except ValueError as exc:
                raise BackendProtocolError(f"{url} returned a malformed JSON body", backend=url) from exc
        assert last_exc is not None
        raise last_exc


class HttpTranslator(_HttpJsonClient):
    """Client for a remote MT engine speaking POST /translate."""

    def __init__(self, endpoint: str, target_lang: str = "xx", config: Optional[HttpClientConfig] = None):
        super().__init__(endpoint, config)
        self.target_lang = target_lang

    def translate(self, source: str, request_id: str) -> str:
        body = self._post(
            "/translate", {"id": request_id, "source": source, "target_lang": self.target_lang}
        )
        translation = body.get("translation")
        if not isinstance(translation, str):
            raise BackendProtocolError(
                f"{self.endpoint}/translate response lacks a string 'translation'", backend=self.endpoint
            )
        return translation


class HttpQualityEstimator(_HttpJsonClient):
    """Client for a remote QE service speaking POST /score."""

    def score(self, source: str, hypothesis: str) -> float:
        return self.score_batch(source, [hypothesis])[0]

    def score_batch(self, source: str, hypotheses: Sequence[str]) -> list[float]:
        body = self._post("/score", {"source": source, "hypotheses": list(hypotheses)})
        scores = body.get("scores")
        if not isinstance(scores, list) or len(scores) != len(hypotheses) or not all(
            isinstance(s, (int, float)) and not isinstance(s, bool) for s in scores
        ):
            raise BackendProtocolError(
                f"{self.endpoint}/score response lacks a matching 'scores' list", backend=self.endpoint
            )
        return [float(s) for s in scores]


class HttpEmbedder(_HttpJsonClient):
    """Client for a remote sentence-embedding endpoint (POST /embed)."""

    def embed(self, source: str) -> np.ndarray:
        body = self._post("/embed", {"source": source})
        embedding = body.get("embedding")
        if not isinstance(embedding, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in embedding
        ):
            raise BackendProtocolError(
                f"{self.endpoint}/embed response lacks a numeric 'embedding'", backend=self.endpoint
            )
        return np.asarray(embedding, dtype=np.float64)


def translate(engine: EngineSpec, source: str, request_context) -> str:
    """Translate through the engine's bound backend."""
    if engine.backend is None:
        raise BackendError(f"engine {engine.name!r} has no backend bound", backend=engine.name)
    request_id = request_context.id if isinstance(request_context, TranslationRequest) else str(request_context)
    return engine.backend.translate(source, request_id)


def qe_score(qe, source: str, hypothesis: str) -> QEScore:
    return QEScore(qe.score(source, hypothesis))


def batch_qe_score(qe, source: str, hypotheses: Sequence[str]) -> list[QEScore]:
    """Elementwise qe_score, order-preserving."""
    return [QEScore(v) for v in qe.score_batch(source, hypotheses)]
