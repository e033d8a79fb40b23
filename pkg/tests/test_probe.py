"""Linear-probe fitting against closed forms and an independent optimizer."""

import numpy as np
import pytest
from scipy.optimize import minimize

from porc.errors import ConfigError, ShapeError
from porc.probe import predict, predict_proba, train_probe


def blobs(rng, centers, per_class, spread=0.1):
    xs, ys = [], []
    for label, c in enumerate(centers):
        xs.append(rng.normal(loc=c, scale=spread, size=(per_class, len(c))))
        ys.append(np.full(per_class, label))
    return np.concatenate(xs), np.concatenate(ys)


class TestTraining:
    def test_separable_two_class_is_perfect(self):
        rng = np.random.default_rng(0)
        x, y = blobs(rng, [(-1.0,), (1.0,)], per_class=20)
        model = train_probe(x, y)
        assert (predict(model, x) == y).all()
        assert model.n_iters <= 1000

    def test_separable_three_class_is_perfect(self):
        rng = np.random.default_rng(1)
        x, y = blobs(rng, [(3, 0), (0, 3), (-3, -3)], per_class=15)
        model = train_probe(x, y)
        assert (predict(model, x) == y).all()

    def test_fit_is_deterministic(self):
        rng = np.random.default_rng(2)
        x, y = blobs(rng, [(-1.0, 0.5), (1.0, -0.5)], per_class=10)
        a = train_probe(x, y)
        b = train_probe(x, y)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.bias, b.bias)
        assert a.n_iters == b.n_iters

    def test_first_step_matches_closed_form(self):
        # from zero weights the predictions are uniform, so one update is
        # w = -lr * x'(1/K - onehot)/n exactly
        rng = np.random.default_rng(3)
        x, y = blobs(rng, [(-1.0,), (1.0,)], per_class=4)
        model = train_probe(x, y, lr=0.1, max_iters=1)
        n, k = len(y), 2
        onehot = np.zeros((n, k))
        onehot[np.arange(n), y] = 1.0
        residual = (np.full((n, k), 1.0 / k) - onehot) / n
        np.testing.assert_array_equal(model.weights, -0.1 * (x.T @ residual))
        np.testing.assert_array_equal(model.bias, -0.1 * residual.sum(axis=0))

    def test_matches_independent_minimizer_on_overlapping_data(self):
        # overlapping classes give a finite optimum both methods can reach
        rng = np.random.default_rng(4)
        x, y = blobs(rng, [(-0.3, 0.1), (0.3, -0.1)], per_class=25, spread=1.0)
        model = train_probe(x, y, max_iters=20000)

        n, d, k = len(y), x.shape[1], 2
        onehot = np.zeros((n, k))
        onehot[np.arange(n), y] = 1.0

        def objective(theta):
            w = theta[: d * k].reshape(d, k)
            b = theta[d * k :]
            z = x @ w + b
            z = z - z.max(axis=1, keepdims=True)
            logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
            return -(onehot * logp).sum() / n

        ref = minimize(objective, np.zeros(d * k + k), method="BFGS", tol=1e-12)
        assert model.final_loss <= ref.fun + 1e-4

    def test_loss_never_worse_than_uniform(self):
        rng = np.random.default_rng(5)
        x, y = blobs(rng, [(0.0, 0.0), (0.1, 0.0)], per_class=10, spread=2.0)
        model = train_probe(x, y)
        assert model.final_loss <= np.log(2) + 1e-12


class TestValidation:
    def test_probability_rows_sum_to_one(self):
        rng = np.random.default_rng(6)
        x, y = blobs(rng, [(-1.0,), (1.0,)], per_class=5)
        p = predict_proba(train_probe(x, y), x)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert (p >= 0).all()

    def test_label_range_checked(self):
        with pytest.raises(ConfigError):
            train_probe(np.ones((3, 2)), np.array([0, 1, 2]), n_classes=2)

    def test_float_labels_rejected(self):
        with pytest.raises(ShapeError):
            train_probe(np.ones((2, 2)), np.array([0.0, 1.0]))

    def test_row_count_mismatch(self):
        with pytest.raises(ShapeError):
            train_probe(np.ones((3, 2)), np.array([0, 1]))

    def test_empty_training_set(self):
        with pytest.raises(ConfigError):
            train_probe(np.zeros((0, 2)), np.zeros(0, dtype=int), n_classes=2)

    def test_predict_width_checked(self):
        rng = np.random.default_rng(7)
        x, y = blobs(rng, [(-1.0,), (1.0,)], per_class=3)
        model = train_probe(x, y)
        with pytest.raises(ShapeError):
            predict(model, np.ones((2, 5)))
