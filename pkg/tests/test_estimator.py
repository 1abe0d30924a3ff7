"""sklearn-facing wrapper: fit/predict/predict_proba/score surface."""

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from cntlab.errors import ConfigError, UsageError
from cntlab.estimator import NoisyTargetClassifier

FAST = dict(epochs=4, batch_size=64, embed_width=16, num_frequencies=4, random_state=0)


def four_blobs(n=256, seed=0):
    # well separated, dim 2: easy even for a few epochs
    rng = np.random.default_rng(seed)
    centers = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 3.0], [0.0, -3.0]])
    labels = rng.integers(0, 4, size=n)
    x = centers[labels] + 0.3 * rng.standard_normal((n, 2))
    return x, labels


def test_get_params_and_clone():
    est = NoisyTargetClassifier(mode="baseline", channels=12, learning_rate=0.05)
    params = est.get_params()
    assert params["mode"] == "baseline"
    assert params["channels"] == 12
    dup = clone(est)
    assert dup.get_params() == params
    est.set_params(channels=6)
    assert est.get_params()["channels"] == 6
    assert dup.get_params()["channels"] == 12


def test_predict_before_fit_raises():
    est = NoisyTargetClassifier()
    with pytest.raises(NotFittedError):
        est.predict(np.zeros((3, 2)))
    with pytest.raises(NotFittedError):
        est.predict_proba(np.zeros((3, 2)))


def test_fit_predict_single_output():
    x, y = four_blobs()
    est = NoisyTargetClassifier(mode="baseline", **FAST).fit(x, y)
    pred = est.predict(x)
    assert pred.shape == (len(x),)
    assert set(np.unique(pred)) <= set(range(4))
    assert np.array_equal(est.classes_, [0, 1, 2, 3])
    assert est.n_features_in_ == 2
    assert est.score(x, y) > 0.6
    assert len(est.history_) == FAST["epochs"]


def test_predict_proba_rows_sum_to_one():
    x, y = four_blobs()
    est = NoisyTargetClassifier(mode="cnt", **FAST).fit(x, y)
    proba = est.predict_proba(x)
    assert proba.shape == (len(x), 4)
    assert np.all(proba >= 0)
    assert np.allclose(proba.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(np.argmax(proba, axis=1), est.predict(x))


def test_cnt_predict_is_deterministic():
    # the pure-noise draw comes from a fixed substream of random_state
    x, y = four_blobs(n=128)
    est = NoisyTargetClassifier(mode="cnt", **FAST).fit(x, y)
    assert np.array_equal(est.predict(x), est.predict(x))
    twin = NoisyTargetClassifier(mode="cnt", **FAST).fit(x, y)
    assert np.array_equal(est.predict(x), twin.predict(x))


def test_noncontiguous_labels_round_trip():
    x, y = four_blobs()
    relabeled = np.array([3, 7, 11, 40])[y]
    est = NoisyTargetClassifier(mode="baseline", **FAST).fit(x, relabeled)
    assert np.array_equal(est.classes_, [3, 7, 11, 40])
    assert set(np.unique(est.predict(x))) <= {3, 7, 11, 40}


def test_multi_output_columns():
    x, y = four_blobs()
    y2 = np.stack([y % 2, np.where(y // 2 == 0, 5, 9)], axis=1)
    est = NoisyTargetClassifier(mode="cnt", **FAST).fit(x, y2)
    pred = est.predict(x)
    assert pred.shape == y2.shape
    assert set(np.unique(pred[:, 0])) <= {0, 1}
    assert set(np.unique(pred[:, 1])) <= {5, 9}
    assert np.array_equal(est.classes_[0], [0, 1])
    assert np.array_equal(est.classes_[1], [5, 9])
    with pytest.raises(UsageError, match="single-output"):
        est.predict_proba(x)


def test_single_class_column_rejected():
    x, _ = four_blobs(n=32)
    with pytest.raises(ConfigError, match="single class"):
        NoisyTargetClassifier(**FAST).fit(x, np.zeros(32, dtype=int))


def test_feature_count_checked_at_predict():
    x, y = four_blobs(n=64)
    est = NoisyTargetClassifier(mode="baseline", **FAST).fit(x, y)
    with pytest.raises(ConfigError, match="features"):
        est.predict(np.zeros((4, 3)))


def test_smallcnn_needs_matching_input_shape():
    rng = np.random.default_rng(3)
    x = rng.random((64, 64))  # flat 1x8x8 images
    y = rng.integers(0, 2, size=64)
    with pytest.raises(ConfigError, match="input_shape"):
        NoisyTargetClassifier(backbone="smallcnn", **FAST).fit(x, y)
    with pytest.raises(ConfigError, match="does not match"):
        NoisyTargetClassifier(backbone="smallcnn", input_shape=(1, 4, 4), **FAST).fit(x, y)
    est = NoisyTargetClassifier(
        backbone="smallcnn", num_blocks=2, input_shape=(1, 8, 8),
        epochs=2, batch_size=32, embed_width=16, num_frequencies=4,
    ).fit(x, y)
    assert est.predict(x).shape == (64,)
