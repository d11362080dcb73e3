import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volratio import portfolio as pf
from volratio.portfolio import PortfolioError, PortfolioSpec
from volratio.vecm import VecmModel


def _spec(w):
    return PortfolioSpec([f"a{i}" for i in range(len(w))], np.asarray(w, float))


def _flat_model(n):
    beta = np.vstack([np.eye(n - 1), -np.ones((1, n - 1))])
    return VecmModel(n, n - 1, 2, np.zeros((n, n - 1)), beta, np.zeros(n - 1),
                     [np.zeros((n, n))], np.eye(n) * 1e-4, np.zeros(n + 1))


def test_spec_validation():
    with pytest.raises(PortfolioError):
        _spec([0.5])
    with pytest.raises(PortfolioError):
        _spec([0.5, 1.0])
    with pytest.raises(PortfolioError):
        _spec([0.5, 0.0])
    with pytest.raises(PortfolioError):
        PortfolioSpec(["a", "b"], np.array([0.2, 0.3, 0.4]))
    assert _spec([0.2, 0.6]).normalized().weights.sum() == pytest.approx(1.0)


def test_quadratic_vol_examples():
    assert pf.quadratic_vol([0.5, 0.5], [0.02, 0.02], np.eye(2)) == pytest.approx(0.0141421356, rel=1e-8)
    w, s = np.array([0.3, 0.6]), np.array([0.02, 0.05])
    assert pf.quadratic_vol(w, s, np.ones((2, 2))) == pytest.approx(w @ s, rel=1e-14)
    R = np.array([[1, 0.5], [0.5, 1]])
    assert pf.quadratic_vol([0.6, 1e-9], [0.02, 0.03], R) == pytest.approx(0.6 * 0.02, rel=1e-6)


def test_vecm_path_examples():
    spec = _spec([0.6, 0.4])
    R = np.array([[1, 0.5], [0.5, 1]])
    logvol = np.log(np.tile([0.02, 0.01], (5, 1)))
    res = pf.vecm_portfolio_forecast(_flat_model(2), logvol, spec, 3, R)
    np.testing.assert_allclose(res.step_variances, 2.08e-4, rtol=1e-12)
    assert res.aggregate == pytest.approx(0.0144222051, rel=1e-9)
    assert not res.guardrail_triggered
    ident = pf.vecm_portfolio_forecast(_flat_model(2), logvol, spec, 2, np.eye(2))
    np.testing.assert_allclose(ident.step_variances, 0.36 * 4e-4 + 0.16 * 1e-4, rtol=1e-12)
    with pytest.raises(PortfolioError):
        pf.vecm_portfolio_forecast(_flat_model(2), logvol, spec, 0, R)
    with pytest.raises(PortfolioError):
        pf.vecm_portfolio_forecast(_flat_model(2), logvol, spec, 2, np.eye(3))


def test_aggregate_is_rms(rng):
    v = rng.random(5) * 1e-4
    assert pf.aggregate_vol(v) == np.sqrt(np.mean(v))


def test_guardrail_examples():
    assert pf.guardrail(4.0, 1.0) == (1.0, True)
    assert pf.guardrail(2.0, 1.0) == (2.0, False)
    assert pf.guardrail(3.0, 1.0) == (3.0, False)
    assert pf.guardrail(float("nan"), 1.0) == (1.0, True)
    with pytest.raises(PortfolioError):
        pf.guardrail(1.0, 0.0)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1e3), st.floats(1e-6, 1e3))
def test_guardrail_bound(f, a):
    out, _ = pf.guardrail(f, a)
    assert out <= max(f, a)


def test_unstable_falls_back(rng):
    m = _flat_model(2)
    m.alpha = np.array([[50.0], [50.0]])
    logvol = np.array([[0.0, 0.0], [1.0, 0.0]])
    res = pf.vecm_portfolio_forecast(m, logvol, _spec([0.5, 0.5]), 40, np.eye(2), trailing_avg=0.01)
    assert res.unstable and res.guardrail_triggered and res.aggregate == 0.01
    with pytest.raises(PortfolioError):
        pf.vecm_portfolio_forecast(m, logvol, _spec([0.5, 0.5]), 40, np.eye(2))


def test_classical_matches_degenerate_vecm(rng):
    r = rng.standard_normal((1000, 3)) @ np.array([[0.02, 0, 0], [0.01, 0.015, 0], [0.0, 0.005, 0.03]])
    spec = _spec([0.2, 0.5, 0.3])
    R = pf.CorrelationMatrix.from_returns(r)
    logvol = np.log(np.tile(r.std(axis=0, ddof=1), (3, 1)))
    v = pf.vecm_portfolio_forecast(_flat_model(3), logvol, spec, 4, R)
    c = pf.classical_forecast(r, spec, 4)
    assert v.aggregate == pytest.approx(c.aggregate, rel=1e-10)
    assert pf.classical_vol(r, spec, 200) == pytest.approx(np.sqrt(spec.weights @ np.cov(r[-200:].T) @ spec.weights))
    with pytest.raises(PortfolioError):
        pf.classical_vol(r, spec, 2000)


def test_homogeneity(rng):
    w, s = rng.random(4) * 0.9 + 0.05, rng.random(4) * 0.05 + 0.001
    R = pf.correlation(rng.standard_normal((100, 4)))
    assert pf.quadratic_vol(w, 3.7 * s, R) == pytest.approx(3.7 * pf.quadratic_vol(w, s, R), rel=1e-12)


def test_reconstruction_identity(rng):
    r = rng.standard_normal((500, 6)) * rng.random(6) * 0.03
    m = r @ rng.random(6) / 6
    sd = r.std(axis=0, ddof=1)
    sm = m.std(ddof=1)
    R = pf.correlation(r)
    S = pf.covariance_reconstruct(sd / sm, sm, R)
    np.testing.assert_allclose(S, np.cov(r.T), rtol=1e-12)
    assert np.allclose(S, S.T) and np.linalg.eigvalsh(S).min() > -1e-15
    np.testing.assert_allclose(pf.covariance_reconstruct(np.ones(3), 0.02, np.eye(3)), 4e-4 * np.eye(3))
    with pytest.raises(PortfolioError):
        pf.covariance_reconstruct(np.ones(2), 0.02, np.eye(3))


def test_capm_beta(rng):
    assert pf.capm_beta(1.0, 1.0) == 1.0
    assert pf.capm_beta(0.5, 1.6) == pytest.approx(0.8)
    m = 0.01 * rng.standard_normal(400)
    a = 1.3 * m + 0.01 * rng.standard_normal(400)
    corr = np.corrcoef(a, m)[0, 1]
    ols_beta = np.cov(a, m)[0, 1] / np.var(m, ddof=1)
    assert pf.capm_beta(corr, a.std(ddof=1) / m.std(ddof=1)) == pytest.approx(ols_beta, rel=1e-10)
    with pytest.raises(PortfolioError):
        pf.capm_beta(1.5, 1.0)


def test_correlation_checks():
    with pytest.raises(PortfolioError):
        pf.CorrelationMatrix(np.array([[1, 2], [2, 1.0]]))
    with pytest.raises(PortfolioError):
        pf.CorrelationMatrix(np.array([[1, 0.1], [0.2, 1.0]]))
    with pytest.raises(PortfolioError):
        pf.correlation(np.column_stack([np.ones(10), np.arange(10.0)]))


def test_forecast_result_save(tmp_path):
    res = pf.ForecastResult("Classical", np.full(2, 1e-4), 0.01)
    res.save(tmp_path / "f.json")
    d = json.loads((tmp_path / "f.json").read_text())
    assert d["aggregate"] == 0.01 and d["method"] == "Classical"
