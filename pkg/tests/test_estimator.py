import numpy as np
import pytest
from sklearn.base import clone

from borrowkit.estimator import PSWBPPRegressor, encode_source
from borrowkit.exceptions import SchemaError


def _data(seed=0, n=120, n_e=300):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n + n_e, 2))
    t = np.r_[rng.random(n) < 0.5, np.zeros(n_e, bool)].astype(float)
    src = np.array(["current"] * n + ["external"] * n_e)
    y = 0.5 * t + X @ [1.0, -0.5] + rng.normal(size=n + n_e)
    return X, y, t, src


def test_params_roundtrip_and_clone():
    est = PSWBPPRegressor(strategy="fixed:0.5,0.5", n_draws=100)
    params = est.get_params()
    assert params["strategy"] == "fixed:0.5,0.5" and params["mpi_kind"] == "tail"
    other = clone(est)
    assert other.get_params() == params
    other.set_params(burn_in=10)
    assert est.burn_in == 2000


def test_fit_attributes_and_determinism():
    X, y, t, src = _data()
    a = PSWBPPRegressor(n_draws=2000, burn_in=100, random_state=3).fit(X, y, t, src)
    b = PSWBPPRegressor(n_draws=2000, burn_in=100, random_state=3).fit(X, y, t, src)
    assert a.effect_ == b.effect_
    assert 0 <= a.params_.a1 <= 1 and a.ess_ > 0
    assert a.n_features_in_ == 2 and a.n_external_controls_ == 300
    assert a.effect_.lower95 < a.effect_.mean < a.effect_.upper95
    pred = a.predict(X[:5], treatment=np.ones(5))
    assert pred.shape == (5,)
    assert np.isfinite(a.score(X[:120], y[:120], t[:120]))
    params, report = a.calibrate(X, y, t, src)
    assert params == a.params_ and report == a.mpi_


def test_no_borrowing_ignores_external_outcomes():
    X, y, t, src = _data(1)
    y2 = y.copy()
    y2[src == "external"] += 100.0
    kw = dict(strategy="fixed:0,0", n_draws=500, burn_in=0)
    a = PSWBPPRegressor(**kw).fit(X, y, t, src)
    b = PSWBPPRegressor(**kw).fit(X, y2, t, src)
    assert a.effect_ == b.effect_


def test_ps_pool_and_intercept_effect():
    X, y, t, src = _data(2)
    a = PSWBPPRegressor(ps_pool="controls", effect="intercept", n_draws=500).fit(X, y, t, src)
    np.testing.assert_array_equal(a.profile_, [1.0, 0.0, 0.0])


def test_input_validation():
    X, y, t, src = _data(3)
    with pytest.raises(SchemaError):
        encode_source(["current", "elsewhere"])
    np.testing.assert_array_equal(encode_source([1, 0, 1]), [1.0, 0.0, 1.0])
    with pytest.raises(ValueError):
        PSWBPPRegressor(ps_pool="all").fit(X, y, t, src)
    with pytest.raises(ValueError):
        PSWBPPRegressor(strategy="fixed:2,0").fit(X, y, t, src)
    with pytest.raises(SchemaError):
        PSWBPPRegressor().fit(X, y, t * 3, src)
    with pytest.raises(SchemaError):
        PSWBPPRegressor().fit(X, y, np.zeros_like(t), src)
    with pytest.raises(ValueError):
        PSWBPPRegressor().fit(X[:10], y, t, src)
