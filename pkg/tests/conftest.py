import numpy as np
import pytest


def simulate_garch(n, omega, alpha, beta, rng, burn=500):
    z = rng.standard_normal(n + burn)
    r = np.empty(n + burn)
    s2 = omega / (1.0 - alpha - beta)
    for t in range(n + burn):
        r[t] = np.sqrt(s2) * z[t]
        s2 = omega + alpha * r[t] ** 2 + beta * s2
    return r[burn:]


def simulate_ar1(n, phi, rng, mu=0.0, sd=1.0, burn=200):
    e = sd * rng.standard_normal(n + burn)
    x = np.empty(n + burn)
    x[0] = e[0]
    for t in range(1, n + burn):
        x[t] = phi * x[t - 1] + e[t]
    return mu + x[burn:]


def simulate_vecm2(n, rng, alpha=(-0.2, 0.1), gamma=None, sd=0.05, c=0.3):
    """Bivariate log-vol system with cointegrating vector (1, -1) and mean gap c."""
    a = np.asarray(alpha)
    h = np.zeros((n, 2))
    h[0] = [c, 0.0]
    dprev = np.zeros(2)
    e = sd * rng.standard_normal((n, 2))
    for t in range(1, n):
        d = a * (h[t - 1, 0] - h[t - 1, 1] - c) + e[t]
        if gamma is not None:
            d = d + gamma @ dprev
        h[t] = h[t - 1] + d
        dprev = d
    return h


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
