import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtrouter.classifier import (
    OnlineSoftmaxModel,
    entropies_batch,
    normalized_entropy,
    softmax,
)
from mtrouter.domain import ClassProbabilities


def finite_difference_gradients(model, x, label, eps=1e-6):
    """Independent oracle: central differences of model.loss over every
    parameter. Deliberately ignorant of the analytic formulas."""
    grad_w = np.zeros_like(model.weights)
    for i in range(model.n_classes):
        for j in range(model.n_features):
            orig = model.weights[i, j]
            model.weights[i, j] = orig + eps
            up = model.loss(x, label)
            model.weights[i, j] = orig - eps
            down = model.loss(x, label)
            model.weights[i, j] = orig
            grad_w[i, j] = (up - down) / (2 * eps)
    grad_b = np.zeros_like(model.bias)
    for i in range(model.n_classes):
        orig = model.bias[i]
        model.bias[i] = orig + eps
        up = model.loss(x, label)
        model.bias[i] = orig - eps
        down = model.loss(x, label)
        model.bias[i] = orig
        grad_b[i] = (up - down) / (2 * eps)
    return grad_w, grad_b


class TestPredictProba:
    def test_zero_model_is_uniform(self):
        model = OnlineSoftmaxModel(5, 3)
        p = model.predict_proba(np.array([1.0, -2.0, 0.5]))
        assert np.all(p.probs == 0.2)

    def test_shift_invariance(self):
        rng = np.random.default_rng(1)
        model = OnlineSoftmaxModel(4, 6)
        model.weights = rng.normal(size=(4, 6))
        model.bias = rng.normal(size=4)
        x = rng.normal(size=6)
        before = model.predict_proba(x).probs
        model.bias = model.bias + 3.7  # constant shift of every logit
        after = model.predict_proba(x).probs
        assert np.allclose(before, after, atol=1e-12)
        assert np.argmax(before) == np.argmax(after)

    def test_repeated_training_concentrates(self):
        # Oracle is the update rule itself: 200 steps on one example.
        model = OnlineSoftmaxModel(4, 5, learning_rate=0.1, l2=0.0)
        x = np.array([0.5, -1.0, 2.0, 0.0, 1.0])
        for _ in range(200):
            model.learn(x, 2)
        assert model.predict_proba(x).probs[2] > 0.9

    def test_dimension_mismatch(self):
        model = OnlineSoftmaxModel(3, 4)
        with pytest.raises(ValueError):
            model.predict_proba(np.zeros(5))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        model = OnlineSoftmaxModel(4, 8)
        model.weights = rng.normal(size=(4, 8))
        model.bias = rng.normal(size=4)
        X = rng.normal(size=(10, 8))
        batch = model.probs_batch(X)
        for i in range(10):
            assert np.allclose(batch[i], model.predict_proba(X[i]).probs, atol=1e-12)

    def test_output_satisfies_simplex(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            model = OnlineSoftmaxModel(4, 6)
            model.weights = rng.normal(scale=5.0, size=(4, 6))
            model.bias = rng.normal(scale=5.0, size=4)
            ClassProbabilities(model.predict_proba(rng.normal(size=6)).probs)


class TestLearn:
    def test_single_step_increases_target_probability(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            model = OnlineSoftmaxModel(5, 4, learning_rate=0.2, l2=0.0)
            model.weights = rng.normal(size=(5, 4))
            model.bias = rng.normal(size=5)
            x = rng.normal(size=4)
            label = int(rng.integers(5))
            before = model.predict_proba(x).probs[label]
            model.learn(x, label)
            assert model.predict_proba(x).probs[label] > before

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            k = int(rng.integers(2, 6))
            f = int(rng.integers(2, 8))
            model = OnlineSoftmaxModel(k, f, learning_rate=0.1, l2=1e-3)
            model.weights = rng.normal(size=(k, f))
            model.bias = rng.normal(size=k)
            x = rng.normal(size=f)
            label = int(rng.integers(k))
            analytic_w, analytic_b = model.gradients(x, label)
            numeric_w, numeric_b = finite_difference_gradients(model, x, label)
            rel_w = np.linalg.norm(analytic_w - numeric_w) / max(np.linalg.norm(numeric_w), 1e-12)
            rel_b = np.linalg.norm(analytic_b - numeric_b) / max(np.linalg.norm(numeric_b), 1e-12)
            assert rel_w < 1e-5
            assert rel_b < 1e-5

    def test_alternating_labels_balance_with_decay(self):
        model = OnlineSoftmaxModel(4, 3, learning_rate=0.5, l2=0.0, lr_decay=True)
        x = np.array([1.0, 0.5, -0.5])
        for i in range(1000):
            model.learn(x, 0 if i % 2 == 0 else 1)
        p = model.predict_proba(x).probs
        assert abs(p[0] - p[1]) < 0.1

    def test_label_out_of_range(self):
        model = OnlineSoftmaxModel(3, 2)
        with pytest.raises(ValueError):
            model.learn(np.zeros(2), 3)
        with pytest.raises(ValueError):
            model.learn(np.zeros(2), -1)

    def test_updates_seen_increments(self):
        model = OnlineSoftmaxModel(3, 2)
        model.learn(np.ones(2), 1)
        model.learn(np.ones(2), 2)
        assert model.updates_seen == 2

    def test_parameters_stay_finite(self):
        rng = np.random.default_rng(6)
        model = OnlineSoftmaxModel(3, 4, learning_rate=0.5, l2=1e-6)
        for _ in range(2000):
            model.learn(rng.normal(size=4), int(rng.integers(3)))
        assert np.all(np.isfinite(model.weights))
        assert np.all(np.isfinite(model.bias))


class TestNormalizedEntropy:
    def test_uniform_is_one(self):
        assert normalized_entropy(np.full(6, 1 / 6)) == pytest.approx(1.0, abs=1e-12)

    def test_one_hot_is_zero(self):
        assert normalized_entropy(np.array([0.0, 1.0, 0.0])) == 0.0

    def test_half_half(self):
        # ln 2 / ln 4 by direct evaluation
        assert normalized_entropy(np.array([0.5, 0.5, 0.0, 0.0])) == pytest.approx(0.5, abs=1e-12)

    def test_accepts_class_probabilities(self):
        p = ClassProbabilities(np.array([0.5, 0.5]))
        assert normalized_entropy(p) == pytest.approx(1.0, abs=1e-12)

    def test_single_class(self):
        assert normalized_entropy(np.array([1.0])) == 0.0

    @given(st.lists(st.floats(min_value=1e-9, max_value=1.0), min_size=2, max_size=8))
    @settings(max_examples=200, deadline=None)
    def test_bounded(self, raw):
        p = np.array(raw)
        p = p / p.sum()
        v = normalized_entropy(p)
        assert 0.0 <= v <= 1.0

    def test_one_iff_uniform(self):
        assert normalized_entropy(np.array([0.4, 0.3, 0.3])) < 1.0
        assert normalized_entropy(np.full(3, 1 / 3)) == pytest.approx(1.0, abs=1e-12)

    def test_batch_agrees_with_scalar(self):
        rng = np.random.default_rng(7)
        P = rng.dirichlet(np.ones(5), size=20)
        batch = entropies_batch(P)
        for i in range(20):
            assert batch[i] == pytest.approx(normalized_entropy(P[i]), abs=1e-12)


class TestSoftmax:
    def test_overflow_safe(self):
        p = softmax(np.array([1000.0, 0.0, -1000.0]))
        assert p[0] == 1.0
        assert np.all(np.isfinite(p))


class TestCheckpoint:
    def test_round_trip_is_byte_exact(self, tmp_path):
        rng = np.random.default_rng(8)
        model = OnlineSoftmaxModel(4, 7, learning_rate=0.3, l2=1e-6)
        for _ in range(50):
            model.learn(rng.normal(size=7), int(rng.integers(4)))
        first = tmp_path / "model1.txt"
        second = tmp_path / "model2.txt"
        model.save(first)
        loaded = OnlineSoftmaxModel.load(first)
        loaded.save(second)
        assert first.read_bytes() == second.read_bytes()
        assert np.array_equal(model.weights, loaded.weights)
        assert np.array_equal(model.bias, loaded.bias)
        assert loaded.updates_seen == model.updates_seen
        x = rng.normal(size=7)
        assert np.array_equal(model.predict_proba(x).probs, loaded.predict_proba(x).probs)

    def test_rejects_other_files(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a checkpoint\n")
        with pytest.raises(ValueError):
            OnlineSoftmaxModel.load(path)
