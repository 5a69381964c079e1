import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from courage.estimator import CourageRegressor


@pytest.fixture
def small_data(rng):
    return rng.normal(size=(24, 3, 5)), rng.uniform(0, 50, size=(24, 2))


def fast(**kw):
    return CourageRegressor(d_model=8, n_heads=2, d_ff=16, epochs=3, batch_size=8, **kw)


def test_params_and_clone():
    est = fast(mixup=True, random_state=3)
    params = est.get_params()
    assert params["mixup"] is True and params["epochs"] == 3
    assert clone(est).get_params() == params


def test_fit_predict_shape(small_data):
    X, y = small_data
    est = fast().fit(X, y)
    pred = est.predict(X)
    assert pred.shape == (24, 2)
    assert (pred >= 0).all()
    assert len(est.loss_curve_) == 3
    assert est.n_features_in_ == 3


def test_predict_before_fit(small_data):
    with pytest.raises(NotFittedError):
        fast().predict(small_data[0])


def test_rejects_bad_shapes(small_data):
    X, y = small_data
    with pytest.raises(ValueError):
        fast().fit(X[:, :, 0], y)
    with pytest.raises(ValueError):
        fast().fit(X, y[:, :1])
    est = fast().fit(X, y)
    with pytest.raises(ValueError):
        est.predict(X[:, :2])


def test_zero_model_predicts_target_mean(small_data):
    X, y = small_data
    est = fast().fit(X, y)
    for k in est.params_.arrays:
        est.params_.arrays[k][:] = 0.0
    assert np.allclose(est.predict(X), np.maximum(y.mean(axis=0), 0.0))


def test_fit_is_deterministic(small_data):
    X, y = small_data
    a, b = fast(random_state=5).fit(X, y), fast(random_state=5).fit(X, y)
    assert np.array_equal(a.predict(X), b.predict(X))


def test_save_load(tmp_path, small_data):
    X, y = small_data
    est = fast().fit(X, y)
    est.save(tmp_path / "c.npz", meta={"cutoff": "2020-05-01"})
    back, meta = CourageRegressor.load(tmp_path / "c.npz")
    assert meta["cutoff"] == "2020-05-01"
    assert np.array_equal(back.predict(X), est.predict(X))
    assert back.get_params() == est.get_params()
