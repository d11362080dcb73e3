"""MacKinnon response-surface coefficients for Dickey-Fuller type statistics.

Critical values: MacKinnon (2010), "Critical Values for Cointegration Tests",
``cv(T) = b0 + b1/T + b2/T^2 + b3/T^3`` at 1%, 5%, 10%. The no-constant
case is from MacKinnon (1996). Index 0 is N = 1 (plain ADF), index 1 is
N = 2 (Engle-Granger residual test with two variables).

P-values: MacKinnon (1994) normal-CDF polynomial approximations.
"""
import numpy as np
from scipy.stats import norm

CRIT_LEVELS = (0.01, 0.05, 0.10)

CRIT = {
    "c": np.array([
        [[-3.43035, -6.5393, -16.786, -79.433],
         [-2.86154, -2.8903, -4.234, -40.040],
         [-2.56677, -1.5384, -2.809, 0.0]],
        [[-3.89644, -10.9519, -33.527, 0.0],
         [-3.33613, -6.1101, -6.823, 0.0],
         [-3.04445, -4.2412, -2.720, 0.0]],
    ]),
    "n": np.array([
        [[-2.56574, -2.2358, -3.627, 0.0],
         [-1.94100, -0.2686, -3.365, 31.223],
         [-1.61682, 0.2656, -2.714, 25.364]],
    ]),
}

TAU_STAR = {"c": [-1.61, -2.62], "n": [-1.04, -1.53]}
TAU_MIN = {"c": [-18.83, -18.86], "n": [-19.04, -19.62]}
TAU_MAX = {"c": [2.74, 0.92], "n": [np.inf, 1.51]}

# polynomial coefficients in increasing powers of the statistic
SMALLP = {
    "c": np.array([[2.1659, 1.4412, 3.8269e-2], [2.92, 1.5012, 3.9796e-2]]),
    "n": np.array([[0.6344, 1.2378, 3.2496e-2], [1.9129, 1.3857, 3.5322e-2]]),
}
LARGEP = {
    "c": np.array([[1.7339, 0.93202, -0.12745, -1.0368e-2], [2.1945, 0.64695, -0.29198, -4.2377e-2]]),
    "n": np.array([[0.4797, 0.93557, -0.06999, 3.3066e-2], [1.5578, 0.8558, -0.2083, -3.3549e-2]]),
}


def critical_values(n_series: int, regression: str, nobs: float) -> np.ndarray:
    """1%, 5%, 10% critical values for sample size ``nobs``."""
    b = CRIT[regression][n_series - 1]
    inv = 1.0 / nobs
    return b[:, 0] + b[:, 1] * inv + b[:, 2] * inv**2 + b[:, 3] * inv**3


def pvalue(stat: float, n_series: int, regression: str) -> float:
    i = n_series - 1
    if stat > TAU_MAX[regression][i]:
        return 1.0
    if stat < TAU_MIN[regression][i]:
        return 0.0
    coef = SMALLP[regression][i] if stat <= TAU_STAR[regression][i] else LARGEP[regression][i]
    return float(norm.cdf(np.polynomial.polynomial.polyval(stat, coef)))
