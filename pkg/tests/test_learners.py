import numpy as np
import pytest

from pacresp.core import DataError, InvalidParameter, construct_secret_space
from pacresp.learners import (
    ModelPool,
    TrainingError,
    accuracy,
    fit_centroids,
    make_synthetic_universe,
    predict_matrix,
    train_pool,
    train_single,
)


@pytest.mark.parametrize("kind", ["nearest_centroid", "logistic_gd"])
def test_pool_is_deterministic(small_world, kind):
    u, space, _ = small_world
    a = train_pool(u, space, kind, train_seed=5)
    b = train_pool(u, space, kind, train_seed=5)
    assert a.to_json() == b.to_json()
    assert a.m == space.m


def test_separable_line():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    y = np.array([0, 0, 1, 1])
    for kind in ("nearest_centroid", "logistic_gd"):
        pool = train_single(X, y, 2, kind)
        assert pool.predict_labels(np.array([[-1.5], [1.5]]))[:, 0].tolist() == [0, 1]


def test_members_close_to_full_data_model():
    u = make_synthetic_universe(600, 3, 2, 3.0, seed=1)
    space = construct_secret_space(u, 8, 1)
    pool = train_pool(u, space)
    full = train_single(u.X, u.y, 3)
    base = accuracy(full, u.X, u.y)
    for j in range(8):
        assert abs(accuracy(pool, u.X, u.y, member=j) - base) <= 0.05


def test_accuracy_tracks_separation():
    far = make_synthetic_universe(600, 3, 2, 10.0, seed=2)
    assert accuracy(train_single(far.X, far.y, 3), far.X, far.y) >= 0.99
    flat = make_synthetic_universe(3000, 3, 2, 0.0, seed=2)
    fresh = make_synthetic_universe(3000, 3, 2, 0.0, seed=3)
    acc = accuracy(train_single(flat.X, flat.y, 3), fresh.X, fresh.y)
    assert abs(acc - 1 / 3) <= 0.03


def test_matrix_rows(small_world):
    u, _, pool = small_world
    hard = predict_matrix(pool, u.X[0])
    assert hard.outputs.shape == (8, 3)
    assert np.all(hard.outputs.sum(axis=1) == 1) and set(np.unique(hard.outputs)) <= {0.0, 1.0}
    soft = predict_matrix(pool, u.X[0], mode="score")
    assert np.allclose(soft.outputs.sum(axis=1), 1.0, atol=1e-12)
    with pytest.raises(InvalidParameter):
        predict_matrix(pool, u.X[0], mode="sideways")
    with pytest.raises(DataError):
        predict_matrix(pool, u.X[:2])


def test_absent_class_never_predicted():
    X = np.array([[0.0], [0.1], [5.0]])
    y = np.array([0, 0, 1])
    cent = fit_centroids(X, y, 3)
    assert np.isnan(cent[2]).all()
    pool = train_single(X, y, 3)
    assert 2 not in pool.predict_labels(np.linspace(-10, 10, 50)[:, None])[:, 0]


def test_empty_subset_raises():
    with pytest.raises(TrainingError):
        train_single(np.empty((0, 2)), np.empty(0, int), 3)


def test_stable_with_wide_separation():
    u = make_synthetic_universe(300, 3, 2, 10.0, seed=4, scale=0.0)
    pool = train_pool(u, construct_secret_space(u, 8, 0))
    labels = pool.predict_labels(u.X)
    stable = np.mean((labels == labels[:, :1]).all(axis=1))
    assert stable >= 0.9


def test_pool_json_round_trip(small_world, tmp_path):
    u, _, pool = small_world
    pool.save(tmp_path / "pool.json")
    back = ModelPool.load(tmp_path / "pool.json")
    assert back.digest() == pool.digest()
    assert np.array_equal(back.predict_labels(u.X), pool.predict_labels(u.X))
    with pytest.raises(DataError):
        ModelPool.from_json('{"format": "something else"}')


def test_unknown_learner(small_world):
    u, space, _ = small_world
    with pytest.raises(InvalidParameter):
        train_pool(u, space, "forest")
