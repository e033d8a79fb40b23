"""Neighbor search against hand-worked small cases."""

import numpy as np
import pytest

from porc.errors import ConfigError, ShapeError
from porc.retrieval import accuracy_at_k, knn_classify, knn_search, majority_vote


class TestSearch:
    def test_five_point_hand_case(self):
        # unit-circle directions; cosine order is the angular order
        angles = np.deg2rad([0, 10, 50, 120, 200])
        index = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        query = index[:1]
        neighbors, dists = knn_search(query, index, k=5)
        np.testing.assert_array_equal(neighbors[0], [0, 1, 2, 3, 4])
        assert dists[0, 0] == 0.0
        assert (np.diff(dists[0]) > 0).all()

    def test_distance_is_normalized_euclidean(self):
        index = np.array([[1.0, 0.0], [0.0, 1.0]])
        _, dists = knn_search(np.array([[1.0, 0.0]]), index, k=2)
        assert abs(dists[0, 1] - np.sqrt(2.0)) < 1e-12

    def test_scaling_rows_changes_nothing(self):
        rng = np.random.default_rng(0)
        index = rng.normal(size=(20, 4))
        query = rng.normal(size=(3, 4))
        base, _ = knn_search(query, index, k=5)
        scaled, _ = knn_search(query * 7.0, index * rng.uniform(0.1, 9.0, size=(20, 1)), k=5)
        np.testing.assert_array_equal(base, scaled)

    def test_duplicate_rows_keep_index_order(self):
        index = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 0.0]])
        neighbors, dists = knn_search(np.array([[2.0, 0.0]]), index, k=4)
        np.testing.assert_array_equal(neighbors[0], [0, 2, 3, 1])
        assert dists[0, 0] == dists[0, 1] == dists[0, 2] == 0.0

    def test_zero_vector_does_not_nan(self):
        index = np.array([[0.0, 0.0], [1.0, 0.0]])
        _, dists = knn_search(np.array([[0.0, 0.0]]), index, k=2)
        assert np.isfinite(dists).all()

    def test_k_bounds(self):
        index = np.ones((3, 2))
        with pytest.raises(ConfigError):
            knn_search(np.ones((1, 2)), index, k=0)
        with pytest.raises(ConfigError):
            knn_search(np.ones((1, 2)), index, k=4)

    def test_width_mismatch(self):
        with pytest.raises(ShapeError):
            knn_search(np.ones((1, 3)), np.ones((4, 2)), k=1)


class TestScores:
    def test_any_hit_accuracy(self):
        index_labels = np.array([0, 1, 1, 0])
        query_labels = np.array([0, 1, 0])
        neighbors = np.array([[1, 2, 0], [1, 2, 3], [1, 2, 3]])
        assert accuracy_at_k(index_labels, query_labels, neighbors, k=1) == pytest.approx(1 / 3)
        assert accuracy_at_k(index_labels, query_labels, neighbors, k=3) == 1.0

    def test_depth_checked(self):
        with pytest.raises(ConfigError):
            accuracy_at_k(np.array([0, 1]), np.array([0]), np.array([[0, 1]]), k=3)

    def test_majority_vote_plain(self):
        labels = np.array([0, 0, 1, 1, 1])
        votes = majority_vote(labels, np.array([[0, 2, 3, 4, 1]]))
        assert votes[0] == 1

    def test_majority_tie_goes_to_nearest_class(self):
        # two votes each for A and B; A's first member is ranked closer
        labels = np.array(["A", "B", "B", "A", "C"])
        votes = majority_vote(labels, np.array([[0, 1, 2, 3, 4]]))
        assert votes[0] == "A"
        votes = majority_vote(labels, np.array([[1, 0, 3, 2, 4]]))
        assert votes[0] == "B"

    def test_classify_clustered_data(self):
        rng = np.random.default_rng(1)
        train = np.concatenate(
            [rng.normal(loc=c, scale=0.05, size=(10, 3)) for c in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
        )
        train_labels = np.repeat([0, 1, 2], 10)
        test = np.concatenate(
            [rng.normal(loc=c, scale=0.05, size=(4, 3)) for c in ((1, 0, 0), (0, 1, 0), (0, 0, 1))]
        )
        pred, neighbors = knn_classify(train, train_labels, test, k=5)
        np.testing.assert_array_equal(pred, np.repeat([0, 1, 2], 4))
        assert neighbors.shape == (12, 5)
