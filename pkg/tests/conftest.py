import mpmath as mp
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def ml_reference(beta, x, digits=40):
    """E_beta(x) by brute-force power series in extended precision."""
    x = mp.mpf(x)
    extra = int(abs(float(x)) ** (1.0 / beta) / 2.3) + 10 if x < 0 else 10
    with mp.workdps(digits + extra):
        b = mp.mpf(beta)
        s = mp.mpf(0)
        k = 0
        while True:
            term = x ** k / mp.gamma(1 + b * k)
            s += term
            if k > 10 and abs(term) < mp.mpf(10) ** (-(digits + extra)) * max(abs(s), 1e-300):
                break
            k += 1
        return +s


def ml2_reference(beta, rho, x, digits=40):
    x = mp.mpf(x)
    extra = int(abs(float(x)) ** (1.0 / beta) / 2.3) + 10
    with mp.workdps(digits + extra):
        b = mp.mpf(beta)
        r = mp.mpf(rho)
        s = mp.mpf(0)
        k = 0
        while True:
            term = x ** k / mp.gamma(r + b * k)
            s += term
            if k > 10 and abs(term) < mp.mpf(10) ** (-(digits + extra)) * max(abs(s), 1e-300):
                break
            k += 1
        return +s


@pytest.fixture
def ml_ref():
    return ml_reference


@pytest.fixture
def ml2_ref():
    return ml2_reference
