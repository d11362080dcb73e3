"""Hot numeric loops.

Every kernel exists twice: a loop version compiled with numba and a
vectorized numpy/scipy version. The public names at the bottom of the module
point at one or the other depending on ``volratio._accel.USE_NUMBA``; both
variants stay importable for parity tests and the benchmark script.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# rolling sample standard deviation (divisor k - 1)


@njit
def rolling_std_nb(x, k):
    n = x.shape[0]
    out = np.empty(n - k + 1)
    for end in range(k - 1, n):
        start = end - k + 1
        s = 0.0
        for i in range(start, end + 1):
            s += x[i]
        mean = s / k
        ss = 0.0
        for i in range(start, end + 1):
            d = x[i] - mean
            ss += d * d
        out[start] = np.sqrt(ss / (k - 1))
    return out


def rolling_std_np(x, k):
    return sliding_window_view(x, k).std(axis=1, ddof=1)


# ---------------------------------------------------------------------------
# GARCH(1,1) variance filter
#   sigma2[0] = s0, sigma2[t] = omega + alpha * r[t-1]^2 + beta * sigma2[t-1]
# Output has n + 1 entries; the last one is the one-step-ahead forecast.


@njit
def garch_filter_nb(r, omega, alpha, beta, s0):
    n = r.shape[0]
    out = np.empty(n + 1)
    out[0] = s0
    for t in range(1, n + 1):
        out[t] = omega + alpha * r[t - 1] * r[t - 1] + beta * out[t - 1]
    return out


def garch_filter_np(r, omega, alpha, beta, s0):
    drive = omega + alpha * r * r
    out = np.empty(r.shape[0] + 1)
    out[0] = s0
    out[1:] = lfilter([1.0], [1.0, -beta], drive, zi=[beta * s0])[0]
    return out


@njit
def garch_nll_nb(r, omega, alpha, beta, s0):
    n = r.shape[0]
    s2 = s0
    total = 0.0
    for t in range(n):
        if t > 0:
            s2 = omega + alpha * r[t - 1] * r[t - 1] + beta * s2
        total += np.log(s2) + r[t] * r[t] / s2
    return 0.5 * (total + n * np.log(2.0 * np.pi))


def garch_nll_np(r, omega, alpha, beta, s0):
    s2 = garch_filter_np(r, omega, alpha, beta, s0)[:-1]
    return 0.5 * (np.sum(np.log(s2) + r * r / s2) + r.shape[0] * np.log(2.0 * np.pi))


# ---------------------------------------------------------------------------
# ARMA conditional-sum-of-squares residuals, conditioning on the first p values
# and on zero pre-sample innovations.


@njit
def arma_css_residuals_nb(w, phi, theta):
    n = w.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    e = np.zeros(n)
    for t in range(p, n):
        acc = w[t]
        for i in range(p):
            acc -= phi[i] * w[t - 1 - i]
        for j in range(q):
            if t - 1 - j >= p:
                acc -= theta[j] * e[t - 1 - j]
        e[t] = acc
    return e[p:]


def arma_css_residuals_np(w, phi, theta):
    p = phi.shape[0]
    v = lfilter(np.r_[1.0, -phi], [1.0], w)[p:]
    return lfilter([1.0], np.r_[1.0, theta], v)


# ---------------------------------------------------------------------------
# Exact Gaussian ARMA likelihood through the Kalman filter (Harvey state-space
# form, unit innovation variance). Returns (sum v^2/F, sum log F, final
# predicted state, final predicted covariance). ``innov`` receives the one-step
# innovations when its length equals len(w); pass an empty array to skip.


@njit
def arma_kalman_nb(w, T, R, P0, tol, innov):
    n = w.shape[0]
    m = T.shape[0]
    keep = innov.shape[0] == n
    a = np.zeros(m)
    P = P0.copy()
    RR = np.outer(R, R)
    ssq = 0.0
    sumlog = 0.0
    converged = False
    F = 1.0
    gain = np.zeros(m)
    for t in range(n):
        v = w[t] - a[0]
        if keep:
            innov[t] = v
        if not converged:
            F = P[0, 0]
            for i in range(m):
                gain[i] = P[i, 0] / F
        ssq += v * v / F
        sumlog += np.log(F)
        au = a + gain * v
        a = T @ au
        if not converged:
            Pu = P - np.outer(gain, P[0, :])
            Pn = T @ Pu @ T.T + RR
            diff = 0.0
            for i in range(m):
                for j in range(m):
                    d = abs(Pn[i, j] - P[i, j])
                    if d > diff:
                        diff = d
            P = Pn
            if diff < tol:
                converged = True
                F = P[0, 0]
                for i in range(m):
                    gain[i] = P[i, 0] / F
    return ssq, sumlog, a, P


def arma_kalman_np(w, T, R, P0, tol, innov):
    n = w.shape[0]
    m = T.shape[0]
    keep = innov.shape[0] == n
    a = np.zeros(m)
    P = P0.copy()
    RR = np.outer(R, R)
    ssq = 0.0
    sumlog = 0.0
    t = 0
    while t < n:
        F = P[0, 0]
        gain = P[:, 0] / F
        v = w[t] - a[0]
        if keep:
            innov[t] = v
        ssq += v * v / F
        sumlog += np.log(F)
        a = T @ (a + gain * v)
        Pn = T @ (P - np.outer(gain, P[0, :])) @ T.T + RR
        done = np.max(np.abs(Pn - P)) < tol
        P = Pn
        t += 1
        if done:
            break
    if t < n:
        # steady state: the state follows a fixed linear recursion driven by w
        F = P[0, 0]
        gain = P[:, 0] / F
        Tg = T @ gain
        L = T - np.outer(Tg, np.eye(m)[0])
        states = lfilter_state(L, Tg, a, w[t:])
        v = w[t:] - states[:, 0]
        if keep:
            innov[t:] = v
        ssq += float(v @ v) / F
        sumlog += (n - t) * np.log(F)
        a = L @ states[-1] + Tg * w[-1]
    return ssq, sumlog, a, P


def lfilter_state(L, g, a0, u):
    """States a_s for s = 0..len(u)-1 of a_{s+1} = L a_s + g u_s, starting at a0."""
    m = L.shape[0]
    out = np.empty((u.shape[0], m))
    a = a0
    for s in range(u.shape[0]):
        out[s] = a
        a = L @ a + g * u[s]
    return out


if USE_NUMBA:
    rolling_std = rolling_std_nb
    garch_filter = garch_filter_nb
    garch_nll = garch_nll_nb
    arma_css_residuals = arma_css_residuals_nb
    arma_kalman = arma_kalman_nb
else:
    rolling_std = rolling_std_np
    garch_filter = garch_filter_np
    garch_nll = garch_nll_np
    arma_css_residuals = arma_css_residuals_np
    arma_kalman = arma_kalman_np

__all__ = [
    "rolling_std",
    "garch_filter",
    "garch_nll",
    "arma_css_residuals",
    "arma_kalman",
    "USE_NUMBA",
]
