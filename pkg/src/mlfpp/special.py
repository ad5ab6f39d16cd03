"""Mittag-Leffler functions and the classical special functions they need.

The one-parameter function is evaluated in three regimes: a compensated
power series for small arguments, the divergent large-argument expansion
with optimal truncation, and a tanh-sinh quadrature of the spectral
representation in between (see :mod:`mlfpp._kernels`).
"""

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import DomainError, EvaluationError

EULER_GAMMA = K.EULER_GAMMA
#: trigamma(1), the variance constant of the log-moment estimator
PI2_OVER_6 = math.pi ** 2 / 6.0


@dataclass(frozen=True)
class MlfEvalConfig:
    """Evaluation policy for the Mittag-Leffler function.

    Parameters
    ----------
    series_cutoff : float
        Largest ``|x|`` handled by the power series.
    target_rel_tol : float
        Requested relative accuracy, in (0, 1e-4].
    max_terms : int
        Term budget of the power series, at least 50.
    """

    series_cutoff: float = 1.0
    target_rel_tol: float = 1e-10
    max_terms: int = 1000

    def __post_init__(self):
        if not (math.isfinite(self.series_cutoff) and self.series_cutoff > 0):
            raise DomainError("series_cutoff must be positive")
        if not (0 < self.target_rel_tol <= 1e-4):
            raise DomainError("target_rel_tol must lie in (0, 1e-4]")
        if int(self.max_terms) != self.max_terms or self.max_terms < 50:
            raise DomainError("max_terms must be an integer >= 50")

    def args(self):
        return float(self.series_cutoff), float(self.target_rel_tol), int(self.max_terms)


DEFAULT_CONFIG = MlfEvalConfig()


def _check_beta(beta):
    if not (isinstance(beta, (int, float, np.floating, np.integer)) and 0 < beta <= 1):
        raise DomainError(f"beta must lie in (0, 1], got {beta!r}")
    return float(beta)


def _check_finite(x, name="x"):
    x = float(x)
    if not math.isfinite(x):
        raise DomainError(f"{name} must be finite, got {x!r}")
    return x


def log_gamma(x):
    """Natural log of |Gamma(x)|."""
    return math.lgamma(x)


def digamma(x):
    """Digamma function psi(x) for x > 0.

    Upward recurrence to x >= 10 followed by the asymptotic Bernoulli
    expansion; relative error below 1e-13 away from the root near 1.4616.
    """
    x = _check_finite(x)
    if x <= 0:
        raise DomainError("digamma is only provided for x > 0")
    return float(K.digamma(x))


def mittag_leffler(beta, x, config=None):
    """One-parameter Mittag-Leffler function E_beta(x) for real x.

    Parameters
    ----------
    beta : float
        Order in (0, 1].
    x : float
        Argument; any finite ``x <= 0``, and positive ``x`` small enough
        for the (positive, cancellation-free) series to be finite.
    config : MlfEvalConfig, optional

    Returns
    -------
    float

    Raises
    ------
    DomainError
        For invalid ``beta`` or non-finite ``x``.
    EvaluationError
        If no regime reaches ``config.target_rel_tol``.
    """
    beta = _check_beta(beta)
    x = _check_finite(x)
    cfg = config or DEFAULT_CONFIG
    cutoff, tol, max_terms = cfg.args()
    if x == 0.0:
        return 1.0
    if beta == 1.0:
        return math.exp(x)
    if x > 0.0:
        val, ok = K.series_two_param(beta, 1.0, x, tol, max_terms)
        if not ok or not math.isfinite(val):
            raise EvaluationError("series did not converge for positive argument", "series", val)
        return float(val)
    u = (-x) ** (1.0 / beta)
    f, g, d, b, reg, ok = K.ml_eval(beta, u, False, False, cutoff, tol, max_terms)
    if not ok:
        raise EvaluationError("Mittag-Leffler evaluation did not converge", K.REGIME_NAMES[reg], g)
    return float(g)


def _mp_two_param(beta, rho, x, tol):
    # extended-precision series for the rare (beta, rho, x) with no fast regime
    import mpmath as mp

    digits = int(30 + abs(x) ** (1.0 / beta) / 2.3 + -math.log10(tol))
    with mp.workdps(digits):
        b = mp.mpf(beta)
        r = mp.mpf(rho)
        z = mp.mpf(x)
        s = mp.mpf(0)
        k = 0
        eps = mp.mpf(10) ** (-digits + 5)
        while True:
            term = z ** k * mp.rgamma(r + b * k)
            s += term
            k += 1
            if k > 10 and abs(term) < eps * max(abs(s), mp.mpf(10) ** -300):
                break
            if k > 200000:
                raise EvaluationError("extended-precision series did not converge", "series", float(s))
        return float(s)


def mittag_leffler_two_param(beta, rho, x, config=None):
    """Two-parameter Mittag-Leffler function sum_k x^k / Gamma(rho + beta k).

    ``rho = beta`` (the density kernel) and ``rho = 1`` use the same regimes
    as :func:`mittag_leffler`; other ``rho`` with large negative ``x`` use
    the large-argument expansion and, failing that, an extended-precision
    series.
    """
    beta = _check_beta(beta)
    x = _check_finite(x)
    rho = _check_finite(rho, "rho")
    if rho <= 0:
        raise DomainError("rho must be positive")
    cfg = config or DEFAULT_CONFIG
    cutoff, tol, max_terms = cfg.args()
    if rho == 1.0:
        return mittag_leffler(beta, x, cfg)
    if x == 0.0:
        return float(K.rgamma(rho))
    if x > 0.0 or -x <= cutoff:
        val, ok = K.series_two_param(beta, rho, x, tol, max_terms)
        if ok and math.isfinite(val):
            return float(val)
        if x > 0.0:
            raise EvaluationError("series did not converge for positive argument", "series", val)
        return _mp_two_param(beta, rho, x, tol)
    t = -x
    if rho == beta:
        if beta == 1.0:
            return math.exp(x)
        u = t ** (1.0 / beta)
        f, g, d, b, reg, ok = K.ml_eval(beta, u, True, False, cutoff, tol, max_terms)
        if not ok:
            raise EvaluationError("density kernel did not converge", K.REGIME_NAMES[reg], d)
        # dens = u^{beta-1} E_{beta,beta}(-u^beta)
        return float(d * u ** (1.0 - beta))
    val, ok = K.asymptotic_two_param(beta, rho, t, tol)
    if ok:
        return float(val)
    return _mp_two_param(beta, rho, x, tol)
