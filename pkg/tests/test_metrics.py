import numpy as np
import pytest
from sklearn.metrics import f1_score

from mtrouter.metrics import confusion_matrix, weighted_f1, windowed_f1_series


class TestWeightedF1:
    def test_identical_sequences(self):
        assert weighted_f1([0, 1, 2, 1], [0, 1, 2, 1], n_classes=3) == 1.0

    def test_constant_predictions_binary(self):
        # Hand derivation: predictions all 0, references half 0 half 1.
        # Class 0: precision 1/2, recall 1 -> F1 = 2/3, weight 1/2.
        # Class 1: no predictions -> F1 = 0, weight 1/2. Total = 1/3.
        preds = [0, 0, 0, 0]
        refs = [0, 0, 1, 1]
        assert weighted_f1(preds, refs, n_classes=2) == pytest.approx(1 / 3, abs=1e-12)

    def test_disjoint_label_sets(self):
        assert weighted_f1([0, 0], [1, 1], n_classes=2) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            weighted_f1([0, 1], [0], n_classes=2)

    def test_empty_input(self):
        with pytest.raises(ValueError):
            weighted_f1([], [], n_classes=2)

    def test_out_of_range_labels(self):
        with pytest.raises(ValueError):
            weighted_f1([0, 5], [0, 1], n_classes=2)

    def test_matches_sklearn_on_random_cases(self):
        # Independent oracle: sklearn's weighted-average F1.
        rng = np.random.default_rng(0)
        for _ in range(50):
            k = int(rng.integers(2, 7))
            n = int(rng.integers(1, 60))
            pred = rng.integers(k, size=n)
            ref = rng.integers(k, size=n)
            ours = weighted_f1(pred, ref, n_classes=k)
            theirs = f1_score(ref, pred, average="weighted", labels=range(k), zero_division=0)
            assert ours == pytest.approx(theirs, abs=1e-12)


class TestConfusionMatrix:
    def test_identity_when_equal(self):
        choices = [0, 1, 2, 0, 1, 2]
        matrix, counts = confusion_matrix(choices, choices, first_n=6, n_classes=3)
        assert np.array_equal(matrix, np.eye(3))
        assert counts.tolist() == [2, 2, 2]

    def test_rows_are_ensemble_columns_are_router(self):
        # One pair: ensemble chose 2, router chose 1.
        matrix, _ = confusion_matrix([1], [2], first_n=1, n_classes=3)
        assert matrix[2, 1] == 1.0
        assert matrix.sum() == 1.0

    def test_supported_rows_sum_to_one(self):
        rng = np.random.default_rng(1)
        router = rng.integers(4, size=200)
        ensemble = rng.integers(4, size=200)
        matrix, counts = confusion_matrix(router, ensemble, first_n=150, n_classes=4)
        for i in range(4):
            if counts[i]:
                assert matrix[i].sum() == pytest.approx(1.0, abs=1e-9)
            else:
                assert np.all(matrix[i] == 0.0)

    def test_unsupported_rows_flagged_zero(self):
        matrix, counts = confusion_matrix([0, 0], [0, 0], first_n=2, n_classes=3)
        assert counts[1] == 0 and counts[2] == 0
        assert np.all(matrix[1] == 0.0) and np.all(matrix[2] == 0.0)

    def test_prefix_restricts_counting(self):
        matrix, counts = confusion_matrix([0, 1], [0, 1], first_n=1, n_classes=2)
        assert counts.tolist() == [1, 0]

    def test_first_n_too_large(self):
        with pytest.raises(ValueError):
            confusion_matrix([0], [0], first_n=2, n_classes=2)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            confusion_matrix([0, 1], [0], first_n=1, n_classes=2)


class TestWindowedSeries:
    def test_constant_agreement_is_one(self):
        series = windowed_f1_series([1] * 50, [1] * 50, n_classes=2, window=10)
        assert np.all(np.isnan(series[:9]))
        assert np.all(series[9:] == 1.0)

    def test_window_slides(self):
        router = [0] * 10 + [1] * 10
        ensemble = [1] * 20
        series = windowed_f1_series(router, ensemble, n_classes=2, window=10)
        assert series[9] == 0.0  # first window: total disagreement
        assert series[19] == 1.0  # last window: total agreement

    def test_bad_window(self):
        with pytest.raises(ValueError):
            windowed_f1_series([0], [0], n_classes=2, window=0)
