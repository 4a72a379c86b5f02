import numpy as np
import pytest

from streamtune.classifier import IncrementalSVM


class TestPredict:
    def test_no_classes(self):
        with pytest.raises(RuntimeError, match="no classes seen"):
            IncrementalSVM(3).predict(np.zeros(3))

    def test_single_class(self):
        svm = IncrementalSVM(2)
        svm.learn([1.0, 0.0], 7)
        for x in ([0.0, 0.0], [-5.0, 3.0], [100.0, -100.0]):
            assert svm.predict(x) == 7

    def test_argmax(self):
        svm = IncrementalSVM(1)
        svm.register(0)
        svm.register(1)
        svm.weights[:] = [[0.9], [0.1]]
        assert svm.predict([1.0]) == 0

    def test_tie_goes_to_lowest_id(self):
        svm = IncrementalSVM(2)
        for c in (5, 2, 9):
            svm.register(c)
        assert svm.predict([0.3, -0.2]) == 2

    def test_dimension_mismatch(self):
        svm = IncrementalSVM(3)
        svm.register(0)
        with pytest.raises(ValueError, match="dimension mismatch"):
            svm.predict(np.zeros(4))


class TestLearn:
    def test_first_update(self):
        lam = 1e-4
        svm = IncrementalSVM(3, lam)
        x = np.array([0.5, -1.0, 2.0])
        svm.learn(x, 4)
        assert svm.classes == [4]
        assert svm.step_count == 1
        np.testing.assert_allclose(svm.weights[0], x / lam)
        assert svm.biases[0] == pytest.approx(1 / lam)

    def test_update_rule_by_hand(self):
        lam = 0.5
        svm = IncrementalSVM(2, lam)
        svm.learn([1.0, 0.0], 0)  # eta 2: w0 = [2, 0], b0 = 2
        svm.learn([0.0, 1.0], 1)  # eta 1: decay by 0.5 first
        # class 0: target -1, margin -(0 + 2) = -2 < 1 -> w0 = 0.5*[2,0] - [0,1], b0 = 2 - 1
        # class 1: new, target +1, margin 0 < 1 -> w1 = [0, 1], b1 = 1
        np.testing.assert_allclose(svm.weights, [[1.0, -1.0], [0.0, 1.0]])
        np.testing.assert_allclose(svm.biases, [1.0, 1.0])

    def test_non_finite(self):
        svm = IncrementalSVM(2)
        with pytest.raises(ValueError, match="non-finite"):
            svm.learn([np.nan, 0.0], 0)
        assert svm.step_count == 0 and svm.classes == []

    def test_first_seen_order_once(self):
        svm = IncrementalSVM(2)
        for y in (3, 1, 3, 0, 1, 0, 3):
            svm.learn([1.0, 1.0], y)
        assert svm.classes == [3, 1, 0]
        assert svm.weights.shape == (3, 2)

    def test_repeated_example_is_learned(self):
        svm = IncrementalSVM(2)
        svm.learn([1.0, 0.0], 0)
        x = np.array([0.6, 0.8])
        for _ in range(50):
            svm.learn(x, 1)
        assert svm.predict(x) == 1

    def test_separable_blobs(self):
        rng = np.random.default_rng(0)
        X = np.vstack([rng.normal([-2, -2], 0.5, (100, 2)), rng.normal([2, 2], 0.5, (100, 2))])
        y = np.repeat([0, 1], 100)
        svm = IncrementalSVM(2, lam=1e-2)
        for _ in range(3):
            for i in rng.permutation(200):
                svm.learn(X[i], int(y[i]))
        accuracy = np.mean([svm.predict(x) == t for x, t in zip(X, y)])
        assert accuracy == 1.0

    def test_deterministic(self):
        rng = np.random.default_rng(1)
        data = [(rng.standard_normal(4), int(rng.integers(0, 3))) for _ in range(200)]
        a, b = IncrementalSVM(4), IncrementalSVM(4)
        for x, y in data:
            a.learn(x, y)
            b.learn(x, y)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.biases, b.biases)

    @pytest.mark.slow
    def test_finite_after_a_million_updates(self):
        rng = np.random.default_rng(2)
        svm = IncrementalSVM(8)
        X = rng.standard_normal((1_000_000, 8))
        labels = rng.integers(0, 4, size=1_000_000)
        for x, y in zip(X, labels.tolist()):
            svm.learn(x, y)
        assert svm.step_count == 1_000_000
        assert np.all(np.isfinite(svm.weights)) and np.all(np.isfinite(svm.biases))
