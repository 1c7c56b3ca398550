import numpy as np
import pytest
from sklearn.linear_model import LogisticRegression

from crowdlens import LogisticModel
from crowdlens.errors import SeparationDetected


def _data(n=500, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 1, (n, 3))
    eta = 0.3 + 1.2 * x[:, 0] - 0.7 * x[:, 1]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return x, y


def test_irls_matches_sklearn_unpenalized():
    x, y = _data()
    ours = LogisticModel().fit(x, y)
    ref = LogisticRegression(penalty=None, tol=1e-10, max_iter=500).fit(x, y)
    assert ours.intercept_ == pytest.approx(ref.intercept_[0], abs=1e-5)
    assert np.allclose(ours.coef_, ref.coef_[0], atol=1e-5)


def test_irls_matches_sklearn_weighted():
    x, y = _data(seed=3)
    rng = np.random.default_rng(5)
    w = rng.uniform(0.2, 3.0, len(y))
    ours = LogisticModel().fit(x, y, sample_weight=w)
    ref = LogisticRegression(penalty=None, tol=1e-10, max_iter=500).fit(
        x, y, sample_weight=w)
    assert ours.intercept_ == pytest.approx(ref.intercept_[0], abs=1e-4)
    assert np.allclose(ours.coef_, ref.coef_[0], atol=1e-4)


def test_separation_raises_then_ridge_converges():
    x = np.linspace(-1, 1, 40)[:, None]
    y = (x[:, 0] > 0).astype(float)  # perfectly separated
    with pytest.raises(SeparationDetected):
        LogisticModel().fit(x, y)
    model = LogisticModel(ridge=1e-4).fit(x, y)
    assert model.converged_
    assert model.coef_[0] > 0


def test_predict_proba_bounds_and_predict():
    x, y = _data(seed=7)
    model = LogisticModel().fit(x, y)
    proba = model.predict_proba(x)
    assert np.all((proba > 0) & (proba < 1))
    assert np.array_equal(model.predict(x), (proba >= 0.5).astype(int))
