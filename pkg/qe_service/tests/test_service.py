import json
import os

import numpy as np
import pytest
from fastapi.testclient import TestClient

from qe_service.app import create_app
from qe_service.config import ServiceConfig
from qe_service.models import HashedLexicalModel, load_model

CONFORMANCE = json.load(
    open(os.path.join(os.path.dirname(__file__), "..", "..", "conformance", "wire_protocol.json"))
)


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app(ServiceConfig()), raise_server_exceptions=False)


class TestConformance:
    """The shared protocol fixture suite, replayed against the live app."""

    def test_score_shape_and_count(self, client):
        fixture = CONFORMANCE["score"]
        resp = client.post(fixture["path"], json=fixture["request"])
        assert resp.status_code == 200
        body = resp.json()
        assert set(body) == set(fixture["response_keys"])
        assert len(body["scores"]) == len(fixture["request"]["hypotheses"])
        assert all(isinstance(s, float) for s in body["scores"])

    def test_score_order_preservation(self, client):
        fixture = CONFORMANCE["score"]["request"]
        forward = client.post("/score", json=fixture).json()["scores"]
        permuted_request = dict(fixture, hypotheses=list(reversed(fixture["hypotheses"])))
        backward = client.post("/score", json=permuted_request).json()["scores"]
        assert backward == list(reversed(forward))

    def test_batching_equivalence(self, client):
        fixture = CONFORMANCE["score"]["request"]
        tolerance = CONFORMANCE["score"]["batching_equivalence_tolerance"]
        batched = client.post("/score", json=fixture).json()["scores"]
        singles = [
            client.post("/score", json={"source": fixture["source"], "hypotheses": [h]}).json()["scores"][0]
            for h in fixture["hypotheses"]
        ]
        assert np.allclose(batched, singles, atol=tolerance)

    def test_embed_dim_matches_meta(self, client):
        fixture = CONFORMANCE["embed"]
        meta = client.get(CONFORMANCE["meta"]["path"]).json()
        assert set(meta) >= set(CONFORMANCE["meta"]["response_keys"])
        resp = client.post(fixture["path"], json=fixture["request"])
        assert resp.status_code == 200
        embedding = resp.json()["embedding"]
        assert len(embedding) == meta["dim"]

    def test_error_responses_carry_error_key(self, client):
        resp = client.post("/score", json={"source": "x", "hypotheses": []})
        assert resp.status_code == 400
        assert set(resp.json()) == {"error"}
        resp = client.post("/score", json={"wrong": "shape"})
        assert resp.status_code == 400
        assert "error" in resp.json()


class TestBehavior:
    def test_identical_requests_identical_scores(self, client):
        body = {"source": "the cat sat", "hypotheses": ["le chat", "il gatto", "die Katze"]}
        a = client.post("/score", json=body).json()["scores"]
        b = client.post("/score", json=body).json()["scores"]
        assert a == b

    def test_identical_sources_identical_embeddings(self, client):
        a = client.post("/embed", json={"source": "hello there"}).json()["embedding"]
        b = client.post("/embed", json={"source": "hello there"}).json()["embedding"]
        assert a == b

    def test_unrelated_sentences_differ(self, client):
        a = client.post("/embed", json={"source": "the quarterly report is due"}).json()["embedding"]
        b = client.post("/embed", json={"source": "zebras gallop across the plain"}).json()["embedding"]
        assert a != b

    def test_max_batch_size_does_not_change_scores(self):
        wide = TestClient(create_app(ServiceConfig(max_batch_size=32)))
        narrow = TestClient(create_app(ServiceConfig(max_batch_size=1)))
        body = {"source": "abc def", "hypotheses": [f"hyp {i}" for i in range(7)]}
        assert wide.post("/score", json=body).json() == narrow.post("/score", json=body).json()

    def test_model_failure_returns_500_with_error(self, monkeypatch):
        class ExplodingModel:
            identifier = "exploding"
            dim = 4

            def embed(self, text):
                raise RuntimeError("boom")

            def score_batch(self, source, hypotheses):
                raise RuntimeError("boom")

        import qe_service.app as app_module

        monkeypatch.setattr(app_module, "load_model", lambda *a, **k: ExplodingModel())
        broken = TestClient(create_app(ServiceConfig()), raise_server_exceptions=False)
        resp = broken.post("/score", json={"source": "x", "hypotheses": ["y"]})
        assert resp.status_code == 500
        assert "error" in resp.json()


class TestModels:
    def test_lexical_embedding_is_normalized(self):
        model = HashedLexicalModel(dim=64)
        vec = model.embed("some reasonable sentence")
        assert np.isclose(np.linalg.norm(vec), 1.0)

    def test_lexical_scores_bounded(self):
        model = HashedLexicalModel(dim=64)
        scores = model.score_batch("source text", ["a", "source text", "completely different"])
        assert all(0.0 <= s <= 1.0 for s in scores)
        assert scores[1] == max(scores)  # identical text scores highest

    def test_empty_text_embeds_to_zero(self):
        model = HashedLexicalModel(dim=32)
        assert np.all(model.embed("") == 0.0)

    def test_load_model_identifiers(self):
        assert load_model("hashed-lexical:128").dim == 128
        assert load_model("hashed-lexical").dim == 256
        with pytest.raises(ValueError):
            load_model("mystery-model")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ServiceConfig(max_batch_size=0)
        with pytest.raises(ValueError):
            ServiceConfig(port=0)
