import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from volratio import linmod
from volratio.linmod import RegressionError, mape, mape_detail, ols, rmse
from volratio.volcore import VolSeries


def test_exact_fit_no_intercept():
    x = np.arange(1.0, 11.0)
    f = ols(2 * x, x, intercept=False)
    assert f.slope == pytest.approx(2.0)
    assert f.adj_r2 == pytest.approx(1.0)
    assert np.allclose(f.residuals, 0)
    assert f.intercept is None


def test_intercept_only_signal():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(1000)
    y = 3 + 0.5 * rng.standard_normal(1000)
    f = ols(y, x)
    assert f.intercept == pytest.approx(3.0, abs=0.05)
    assert f.slope_pvalue > 0.05


def test_against_lstsq_and_statsmodels(rng):
    x = rng.standard_normal(200)
    y = 1.0 + 0.7 * x + 0.3 * rng.standard_normal(200)
    f = ols(y, x)
    coef, *_ = np.linalg.lstsq(np.column_stack([np.ones(200), x]), y, rcond=None)
    assert f.intercept == pytest.approx(coef[0], rel=1e-10)
    assert f.slope == pytest.approx(coef[1], rel=1e-10)
    sm = pytest.importorskip("statsmodels.api")
    ref = sm.OLS(y, sm.add_constant(x)).fit()
    np.testing.assert_allclose(f.stderrs, ref.bse, rtol=1e-9)
    np.testing.assert_allclose(f.p_values, ref.pvalues, rtol=1e-7)
    assert f.adj_r2 == pytest.approx(ref.rsquared_adj, rel=1e-10)
    assert f.log_likelihood == pytest.approx(ref.llf, rel=1e-10)
    # variance counted as a parameter: one more than statsmodels' k
    assert f.aic == pytest.approx(ref.aic + 2, rel=1e-10)
    ref0 = sm.OLS(y, x).fit()
    f0 = ols(y, x, intercept=False)
    assert f0.r2 == pytest.approx(ref0.rsquared, rel=1e-10)  # uncentered
    assert f0.adj_r2 == pytest.approx(ref0.rsquared_adj, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(8, 200))
def test_ols_invariants(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = rng.standard_normal() + rng.standard_normal() * x + rng.standard_normal(n)
    f = ols(y, x)
    assert abs(f.residuals.mean()) < 1e-10 * max(1.0, np.abs(y).max())
    assert abs(f.residuals @ x) < 1e-8 * max(1.0, np.abs(y).sum() * np.abs(x).max())
    assert f.adj_r2 <= f.r2 + 1e-15 and f.r2 <= 1 + 1e-15
    assert f.bic >= f.aic
    f0 = ols(y, x, intercept=False)
    assert f0.slope == pytest.approx((x @ y) / (x @ x), rel=1e-10, abs=1e-14)


def test_errors():
    with pytest.raises(RegressionError):
        ols(np.ones(5), np.ones(4))
    with pytest.raises(RegressionError):
        ols(np.arange(5.0), np.ones(5))
    with pytest.raises(RegressionError):
        ols(np.arange(5.0), np.zeros(5), intercept=False)


def test_mape_examples():
    assert mape([1, 2, 3], [1, 2, 3]) == 0
    assert mape([1, 2], [1.1, 1.8]) == pytest.approx(10.0)
    val, nx = mape_detail([0, 1, 2], [5, 1.1, 1.8])
    assert (val, nx) == (pytest.approx(10.0), 1)
    with pytest.raises(ValueError):
        mape([0, 0], [1, 1])
    a, p = np.array([1.0, 4.0, 2.0]), np.array([1.5, 3.0, 2.5])
    assert mape(-3 * a, -3 * p) == pytest.approx(mape(a, p))
    assert rmse([0, 0], [3, 4]) == pytest.approx(np.sqrt(12.5))


def _vs(sigma, aid):
    return VolSeries(aid, 5, np.arange(sigma.size), sigma)


def test_battery_exact_fits(rng):
    panel = []
    for b in (0.5, 1.0, 2.0):
        x = 0.01 + rng.random(100)
        panel.append((_vs(b * x, "A"), _vs(x, "M")))
    c = linmod.naive_model_battery(panel, "5 days", "M1")
    assert c.pct_beta_significant == 100.0
    assert c.mean_adj_r2 == pytest.approx(100.0)
    assert c.mean_mape == pytest.approx(0.0, abs=1e-9)


def test_battery_size():
    rng = np.random.default_rng(9)
    panel = [(_vs(rng.standard_normal(200), "A"), _vs(rng.standard_normal(200), "M")) for _ in range(400)]
    c = linmod.naive_model_battery(panel, "x", "M2")
    assert 2.0 <= c.pct_beta_significant <= 8.5


def test_battery_zero_blanks_mape(rng):
    x = 0.01 + rng.random(50)
    y = x.copy()
    y[3] = 0.0
    c = linmod.naive_model_battery([(_vs(y, "A"), _vs(x, "M"))], "5 minutes", "M1")
    assert np.isnan(c.mean_mape) and c.n_mape_excluded == 1


def test_model_table_layout(tmp_path):
    rows = [
        linmod.ModelComparison("M1", "5 days", 100.0, 75.1, 43.9, -11051.0, -11040.0, 3),
        linmod.ModelComparison("M2", "5 days", 100.0, 43.8, float("nan"), -11515.0, -11498.0, 3),
    ]
    linmod.write_model_table(tmp_path / "t.csv", rows)
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ",5 days"
    assert lines[1] == "Model 1: No intercept,"
    assert lines[2] == "% beta significant (p<0.05),100%"
    assert lines[3] == "Mean Adj. R2 (%),75.1"
    assert lines[10] == "Mean MAPE (%),--"
    assert len(lines) == 13
