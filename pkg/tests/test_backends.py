import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtrouter.backends import (
    BackendError,
    BackendHTTPError,
    BackendProtocolError,
    BackendTimeout,
    HttpClientConfig,
    HttpEmbedder,
    HttpQualityEstimator,
    HttpTranslator,
    SimulatedEngineModel,
    SimulatedQualityEstimator,
    SimulatedTranslator,
    SimulationContractError,
    batch_qe_score,
    decode_translation,
    encode_translation,
    hidden_quality,
    qe_score,
    translate,
)
from mtrouter.domain import EngineSpec

CONFORMANCE = json.load(
    open(os.path.join(os.path.dirname(__file__), "..", "conformance", "wire_protocol.json"))
)


@pytest.fixture
def engine_model():
    matrix = np.array([
        [0.8, 0.5, 0.6],
        [0.5, 0.9, 0.4],
    ])
    return SimulatedEngineModel(quality_matrix=matrix, quality_noise_sigma=0.05, prices=(10.0, 30.0))


@pytest.fixture
def domains():
    return {"r1": 0, "r2": 1, "r3": 2}


class TestSimulatedTranslator:
    def test_same_inputs_same_text_and_quality(self, engine_model, domains):
        t = SimulatedTranslator(0, engine_model, domains, seed=9)
        assert t.translate("src", "r1") == t.translate("src", "r1")
        assert t.hidden_quality("r1") == t.hidden_quality("r1")

    def test_different_engines_differ(self, engine_model, domains):
        a = SimulatedTranslator(0, engine_model, domains, seed=9)
        b = SimulatedTranslator(1, engine_model, domains, seed=9)
        assert a.translate("src", "r1") != b.translate("src", "r1")

    def test_zero_noise_quality_equals_matrix(self, domains):
        model = SimulatedEngineModel(
            quality_matrix=np.array([[0.8, 0.5, 0.6]]), quality_noise_sigma=0.0, prices=(10.0,)
        )
        t = SimulatedTranslator(0, model, domains, seed=9)
        assert t.hidden_quality("r2") == 0.5

    def test_quality_clamped(self, domains):
        model = SimulatedEngineModel(
            quality_matrix=np.array([[1.0, 0.0, 0.5]]), quality_noise_sigma=5.0, prices=(1.0,)
        )
        t = SimulatedTranslator(0, model, domains, seed=1)
        for rid in domains:
            assert 0.0 <= t.hidden_quality(rid) <= 1.0

    def test_unknown_request_rejected(self, engine_model, domains):
        t = SimulatedTranslator(0, engine_model, domains, seed=9)
        with pytest.raises(SimulationContractError):
            t.translate("src", "unknown")

    def test_invalid_matrix_rejected(self):
        with pytest.raises(ValueError):
            SimulatedEngineModel(quality_matrix=np.array([[1.2]]), quality_noise_sigma=0.0, prices=(1.0,))


class TestTranslationMarker:
    def test_round_trip(self):
        text = encode_translation(3, "r000123", seed=4)
        assert decode_translation(text) == (3, "r000123")

    @given(st.text(min_size=1, max_size=40).filter(lambda s: "\n" not in s))
    @settings(max_examples=100, deadline=None)
    def test_round_trip_arbitrary_ids(self, rid):
        text = encode_translation(7, rid, seed=0)
        assert decode_translation(text) == (7, rid)

    def test_foreign_text_rejected(self):
        with pytest.raises(SimulationContractError):
            decode_translation("an ordinary translation from a real engine")


class TestSimulatedQE:
    def test_zero_noise_equals_hidden_quality(self, engine_model, domains):
        t = SimulatedTranslator(1, engine_model, domains, seed=9)
        qe = SimulatedQualityEstimator(engine_model, domains, observation_noise_sigma=0.0, seed=9)
        hyp = t.translate("src", "r2")
        assert qe.score("src", hyp) == t.hidden_quality("r2")

    def test_repeated_scores_identical(self, engine_model, domains):
        t = SimulatedTranslator(0, engine_model, domains, seed=9)
        qe = SimulatedQualityEstimator(engine_model, domains, observation_noise_sigma=0.07, seed=9)
        hyp = t.translate("src", "r1")
        assert qe.score("src", hyp) == qe.score("src", hyp)

    def test_observation_noise_scale(self):
        # Monte Carlo: with zero quality noise the score spread across
        # requests is exactly the observation noise.
        n = 10_000
        domains = {f"r{i}": 0 for i in range(n)}
        model = SimulatedEngineModel(
            quality_matrix=np.array([[0.5]]), quality_noise_sigma=0.0, prices=(1.0,)
        )
        t = SimulatedTranslator(0, model, domains, seed=3)
        qe = SimulatedQualityEstimator(model, domains, observation_noise_sigma=0.05, seed=3)
        scores = np.array([qe.score("s", t.translate("s", rid)) for rid in domains])
        assert abs(scores.std() - 0.05) < 0.005
        assert abs(scores.mean() - 0.5) < 0.005

    def test_unknown_hypothesis_contract_error(self, engine_model, domains):
        qe = SimulatedQualityEstimator(engine_model, domains, observation_noise_sigma=0.0, seed=9)
        with pytest.raises(SimulationContractError):
            qe.score("src", "something from outside the run")

    def test_batch_is_elementwise_and_order_preserving(self, engine_model, domains):
        t0 = SimulatedTranslator(0, engine_model, domains, seed=9)
        t1 = SimulatedTranslator(1, engine_model, domains, seed=9)
        qe = SimulatedQualityEstimator(engine_model, domains, observation_noise_sigma=0.02, seed=9)
        h0, h1 = t0.translate("s", "r1"), t1.translate("s", "r1")
        batch = qe.score_batch("s", [h0, h1])
        assert batch == [qe.score("s", h0), qe.score("s", h1)]
        assert qe.score_batch("s", [h1, h0]) == [batch[1], batch[0]]
        dup = qe.score_batch("s", [h0, h0])
        assert dup[0] == dup[1]

    def test_singleton_batch(self, engine_model, domains):
        t = SimulatedTranslator(0, engine_model, domains, seed=9)
        qe = SimulatedQualityEstimator(engine_model, domains, observation_noise_sigma=0.0, seed=9)
        h = t.translate("s", "r1")
        assert qe.score_batch("s", [h]) == [qe.score("s", h)]


class TestOpFunctions:
    def test_translate_requires_backend(self):
        engine = EngineSpec(engine_id=0, name="x", price_per_million_chars=1.0)
        with pytest.raises(BackendError):
            translate(engine, "src", "r1")

    def test_qe_score_wraps_value(self, engine_model, domains):
        t = SimulatedTranslator(0, engine_model, domains, seed=9)
        qe = SimulatedQualityEstimator(engine_model, domains, observation_noise_sigma=0.0, seed=9)
        h = t.translate("s", "r1")
        assert qe_score(qe, "s", h).value == qe.score("s", h)
        assert [s.value for s in batch_qe_score(qe, "s", [h])] == [qe.score("s", h)]


class _FixtureHandler(BaseHTTPRequestHandler):
    """Scriptable loopback server for client tests."""

    behavior = {}
    recorded = []

    def log_message(self, *args):
        pass

    def _reply(self, status, payload):
        body = json.dumps(payload, separators=(",", ":")).encode()
        try:
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        except BrokenPipeError:
            pass  # client gave up (timeout test); nothing to report

    def do_POST(self):
        raw = self.rfile.read(int(self.headers.get("Content-Length", "0")))
        type(self).recorded.append((self.path, raw.decode()))
        mode = self.behavior.get(self.path, "ok")
        if mode == "sleep":
            time.sleep(0.5)
            mode = "ok"
        if mode == "fail-once":
            self.behavior[self.path] = "ok"
            self._reply(503, {"error": "transient"})
            return
        if mode == "http-error":
            self._reply(500, {"error": "model exploded"})
            return
        if mode == "malformed":
            body = b"this is not json"
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        if mode == "wrong-shape":
            self._reply(200, {"unexpected": True})
            return
        request = json.loads(raw)
        if self.path == "/translate":
            self._reply(200, {"translation": CONFORMANCE["translate"]["response"]["translation"]})
        elif self.path == "/score":
            self._reply(200, {"scores": [(i + 1) / 10 for i in range(len(request["hypotheses"]))]})
        elif self.path == "/embed":
            self._reply(200, {"embedding": [0.5, -0.5, 1.0]})
        else:
            self._reply(404, {"error": "no such endpoint"})


@pytest.fixture
def http_server():
    _FixtureHandler.behavior = {}
    _FixtureHandler.recorded = []
    server = ThreadingHTTPServer(("127.0.0.1", 0), _FixtureHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_address[1]}", _FixtureHandler
    server.shutdown()
    thread.join(timeout=2)


class TestHttpClients:
    def test_translate_round_trip_matches_fixture(self, http_server):
        url, handler = http_server
        fixture = CONFORMANCE["translate"]
        client = HttpTranslator(url, target_lang=fixture["request"]["target_lang"])
        out = client.translate(fixture["request"]["source"], fixture["request"]["id"])
        assert out == fixture["response"]["translation"]
        path, body = handler.recorded[0]
        assert path == fixture["path"]
        sent = json.loads(body)
        assert set(sent) == set(fixture["request_keys"])
        assert sent == fixture["request"]
        assert " " not in body.split('",')[0]  # compact separators, no padding

    def test_score_order_preserving(self, http_server):
        url, _ = http_server
        client = HttpQualityEstimator(url)
        hyps = CONFORMANCE["score"]["request"]["hypotheses"]
        scores = client.score_batch(CONFORMANCE["score"]["request"]["source"], hyps)
        assert scores == [0.1, 0.2, 0.3]
        assert client.score("src", "single") == 0.1

    def test_embed(self, http_server):
        url, _ = http_server
        client = HttpEmbedder(url)
        vec = client.embed(CONFORMANCE["embed"]["request"]["source"])
        assert np.array_equal(vec, np.array([0.5, -0.5, 1.0]))

    def test_http_error_reported_with_status_and_message(self, http_server):
        url, handler = http_server
        handler.behavior["/translate"] = "http-error"
        client = HttpTranslator(url)
        with pytest.raises(BackendHTTPError) as exc_info:
            client.translate("src", "r1")
        assert exc_info.value.status == 500
        assert "model exploded" in str(exc_info.value)

    def test_malformed_body(self, http_server):
        url, handler = http_server
        handler.behavior["/score"] = "malformed"
        with pytest.raises(BackendProtocolError):
            HttpQualityEstimator(url).score("s", "h")

    def test_wrong_shape_is_protocol_error(self, http_server):
        url, handler = http_server
        handler.behavior["/score"] = "wrong-shape"
        with pytest.raises(BackendProtocolError):
            HttpQualityEstimator(url).score("s", "h")

    def test_timeout(self, http_server):
        url, handler = http_server
        handler.behavior["/translate"] = "sleep"
        client = HttpTranslator(url, config=HttpClientConfig(timeout=0.1))
        with pytest.raises(BackendTimeout):
            client.translate("src", "r1")

    def test_no_implicit_retry(self, http_server):
        url, handler = http_server
        handler.behavior["/translate"] = "fail-once"
        client = HttpTranslator(url)
        with pytest.raises(BackendHTTPError):
            client.translate("src", "r1")
        assert client.call_count == 1

    def test_explicit_retry_with_call_audit(self, http_server):
        url, handler = http_server
        handler.behavior["/translate"] = "fail-once"
        client = HttpTranslator(url, config=HttpClientConfig(retries=1))
        out = client.translate("src", "r1")
        assert out == CONFORMANCE["translate"]["response"]["translation"]
        assert client.call_count == 2

    def test_connection_refused_is_backend_error(self):
        client = HttpTranslator("http://127.0.0.1:1", config=HttpClientConfig(timeout=0.5))
        with pytest.raises(BackendError):
            client.translate("src", "r1")


class TestHiddenQualityDerivation:
    def test_pure_function_of_inputs(self, engine_model):
        a = hidden_quality(engine_model, 5, "rid", 1, 2)
        b = hidden_quality(engine_model, 5, "rid", 1, 2)
        assert a == b
        assert hidden_quality(engine_model, 6, "rid", 1, 2) != a
        assert hidden_quality(engine_model, 5, "other", 1, 2) != a
