import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from conftest import simulate_garch
from volratio import volcore
from volratio.ingest import ReturnSeries
from volratio.volcore import GarchModel, VolError, VolSeries, fit_garch11, hvr, rolling_vol


def rs(values, aid="A"):
    values = np.asarray(values, dtype=float)
    return ReturnSeries(aid, np.arange(values.size, dtype=np.int64) * 86400, values)


def vs(sigma, aid="A", k=5):
    sigma = np.asarray(sigma, dtype=float)
    return VolSeries(aid, k, np.arange(sigma.size, dtype=np.int64), sigma)


def test_rolling_vol_examples():
    assert np.all(rolling_vol(rs([0.01] * 10), 3).sigma == 0)
    v = rolling_vol(rs([0.01, -0.01, 0.01, -0.01]), 4)
    assert v.sigma[-1] == pytest.approx(np.std([0.01, -0.01, 0.01, -0.01], ddof=1), abs=1e-15)
    assert v.sigma[-1] == pytest.approx(0.011547, abs=1e-6)
    with pytest.raises(VolError):
        rolling_vol(rs([0.01, 0.02]), 1)
    with pytest.raises(VolError):
        rolling_vol(rs([0.01, 0.02]), 3)


def test_rolling_vol_timestamps_and_prepend(rng):
    r = rng.standard_normal(50)
    base = rolling_vol(rs(r), 7)
    np.testing.assert_array_equal(base.times, np.arange(6, 50) * 86400)
    longer = rs(np.concatenate([rng.standard_normal(13), r]))
    ext = rolling_vol(ReturnSeries("A", np.arange(-13, 50, dtype=np.int64) * 86400, longer.returns), 7)
    np.testing.assert_allclose(ext.sigma[-base.sigma.size:], base.sigma, rtol=1e-12)


def test_hvr_examples():
    a = vs([0.02, 0.01, 0.03])
    assert np.all(hvr(a, a).ratio == 1.0)
    out = hvr(vs([0.02, 0.02, 0.02]), vs([0.01, 0.0, 0.01], aid="M"))
    np.testing.assert_array_equal(out.ratio, [2.0, 2.0])
    assert out.n_excluded == 1
    with pytest.raises(VolError, match="window"):
        hvr(vs([1.0], k=5), vs([1.0], k=10))
    with pytest.raises(VolError):
        hvr(vs([1.0]), VolSeries("M", 5, np.array([99]), np.array([1.0])))


@settings(max_examples=25, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_hvr_scale_invariant(c, seed):
    rng = np.random.default_rng(seed)
    a, m = rng.standard_normal(60), rng.standard_normal(60)
    base = hvr(rolling_vol(rs(a), 10), rolling_vol(rs(m, "M"), 10)).ratio
    scaled = hvr(rolling_vol(rs(c * a), 10), rolling_vol(rs(c * m, "M"), 10)).ratio
    np.testing.assert_allclose(scaled, base, rtol=1e-12)


def test_garch_iid_returns(rng):
    x = 0.01 * rng.standard_normal(5000)
    m = fit_garch11(x)
    assert m.alpha + m.beta < 0.2
    assert m.unconditional_variance == pytest.approx(np.var(x), rel=0.10)


def test_garch_recovery():
    rng = np.random.default_rng(7)
    r = simulate_garch(20000, 1e-6, 0.05, 0.90, rng)
    m = fit_garch11(r)
    assert abs(m.alpha - 0.05) < 0.05
    assert abs(m.beta - 0.90) < 0.05
    assert m.persistence <= volcore.PERSISTENCE_CAP
    assert m.one_step_variance() >= m.omega > 0


def test_garch_too_short():
    with pytest.raises(VolError):
        fit_garch11(np.ones(50))


def test_garch_loglik_matches_filter(rng):
    r = simulate_garch(1500, 2e-6, 0.08, 0.88, rng)
    m = fit_garch11(r)
    s2 = m.conditional_variance(r)[:-1]
    ll = -0.5 * np.sum(np.log(2 * np.pi) + np.log(s2) + r * r / s2)
    assert m.log_likelihood == pytest.approx(ll, rel=1e-8)


def _model(v1, r=0.0, w=1e-6, a=0.05, b=0.9, n=500):
    return GarchModel(w, a, b, 0.0, n, r, v1)


def test_dvr_examples(rng):
    m = _model(1e-4, 0.01)
    assert volcore.dvr(m, m) == 1.0
    asset = GarchModel(4e-4, 0.0, 0.0, 0.0, 10, 0.0, 0.0)
    market = GarchModel(1e-4, 0.0, 0.0, 0.0, 10, 0.0, 0.0)
    assert volcore.dvr(asset, market) == pytest.approx(2.0)
    path = volcore.dvr(m, m, h=4)
    np.testing.assert_allclose(path, np.ones(4))


def test_dvr_scale_equivariance():
    rng = np.random.default_rng(3)
    r = simulate_garch(3000, 1e-6, 0.06, 0.9, rng)
    a, m = fit_garch11(2.5 * r), fit_garch11(r)
    assert volcore.dvr(a, m) == pytest.approx(2.5, rel=1e-5)


def test_garch_forecast_converges():
    m = _model(4e-5, 0.02)
    f = m.forecast_variance(400)
    assert f[-1] == pytest.approx(m.unconditional_variance, rel=1e-6)


def test_hvr_distribution_lognormal():
    rng = np.random.default_rng(11)
    d = volcore.hvr_distribution(np.exp(0.3 * rng.standard_normal(5000)))
    assert abs(d.skewness) < 0.05
    assert d.fitted_t_dof > 50
    assert np.all(np.diff(d.qq_points[:, 1]) >= 0)


def test_hvr_distribution_logt():
    rng = np.random.default_rng(12)
    d = volcore.hvr_distribution(np.exp(0.2 * stats.t.rvs(5, size=5000, random_state=rng)))
    assert 3.5 <= d.fitted_t_dof <= 7


def test_hvr_distribution_too_few():
    with pytest.raises(VolError):
        volcore.hvr_distribution([1.0, 2.0, 3.0])


def test_dvr_from_arima_random_walk(rng):
    x = 1.0 + np.cumsum(0.01 * rng.standard_normal(300))
    ratio = volcore.RatioSeries("A", "M", "HVR", 5, np.arange(300), x, 0)
    fc = volcore.dvr_from_arima(ratio, order=(0, 1, 0), h=3)
    np.testing.assert_allclose(fc, x[-1])


def test_save_ratio(tmp_path):
    r = volcore.RatioSeries("A", "M", "HVR", 10, np.array([0, 86400]), np.array([1.5, 2.0]), 3)
    csv_path, json_path = volcore.save_ratio(r, tmp_path / "x")
    assert csv_path.read_text() == "timestamp,value\n1970-01-01T00:00:00Z,1.5\n1970-01-02T00:00:00Z,2.0\n"
    meta = json.loads(json_path.read_text())
    assert meta == {
        "asset": "A", "benchmark": "M", "kind": "HVR", "k": 10,
        "frequency": "day", "n_points": 2, "exclusion_count": 3,
    }
