"""Estimators of the Mittag-Leffler parameters from (weighted) samples.

Five methods, each accepting observation weights:

* ``LM``  log-moment closed form;
* ``ML``  maximum likelihood;
* ``CM``  Cramer-von Mises distance to mid-ranks;
* ``QLS`` least squares between theoretical and empirical quantiles;
* ``QB``  least squares between target probabilities and the fitted CDF at
  the empirical quantiles.

The optimizer-based methods start from the LM estimate. They work on the
data divided by the LM scale, so rescaling the data rescales sigma-hat
without changing the numerical path.
"""

import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .distribution import (Admissibility, MlfParams, QuantileSet, backend,
                           check_quantile_admissibility)
from .errors import DomainError, EstimationError, EvaluationError, WeightingError
from .optimize import OptimizerConfig, minimize_bounded
from .special import EULER_GAMMA

METHODS = ("LM", "ML", "CM", "QLS", "QB")
QB_DEFAULT = QuantileSet((0.1, 0.3, 0.5, 0.8, 0.925))
QLS_DEFAULT = QuantileSet((0.1, 0.3, 0.5, 0.7, 0.9))

_WEIGHT_SUM_TOL = 1e-12
_TAIL_TOL = 1e-12


class AdmissibilityWarning(UserWarning):
    """The quantile set is not known to give a consistent QB estimator."""


class WeightedSample:
    """Positive values with non-negative weights summing to one.

    Parameters
    ----------
    values : array_like
    weights : array_like, optional
        Uniform ``1/n`` when omitted.
    """

    def __init__(self, values, weights=None):
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            raise DomainError("sample is empty")
        if not np.all(np.isfinite(v)) or np.any(v <= 0):
            raise DomainError("values must be positive and finite")
        if weights is None:
            w = np.full(v.size, 1.0 / v.size)
            self.weighted = False
        else:
            w = np.asarray(weights, dtype=float).ravel()
            if w.shape != v.shape:
                raise WeightingError("values and weights differ in length")
            if not np.all(np.isfinite(w)) or np.any(w < 0):
                raise WeightingError("weights must be non-negative and finite")
            if abs(w.sum() - 1.0) > _WEIGHT_SUM_TOL:
                raise WeightingError(f"weights must sum to 1, got {w.sum()!r}")
            self.weighted = True
        self.values = v
        self.weights = w

    def __len__(self):
        return self.values.size

    @property
    def v_sum_sq(self):
        """V = sum of squared weights."""
        return float(np.dot(self.weights, self.weights))

    def scaled(self, c):
        return WeightedSample(self.values * c, self.weights if self.weighted else None)

    def support(self):
        """Values and weights with zero-weight observations removed."""
        m = self.weights > 0
        return self.values[m], self.weights[m]


@dataclass
class EstimateResult:
    params: MlfParams
    method: str
    converged: bool
    objective_value: float
    iterations: int
    wall_time: float
    quantile_set: QuantileSet = None
    admissibility: Admissibility = None
    start: MlfParams = None
    info: dict = field(default_factory=dict)


def empirical_quantile(s, alpha):
    """Weighted empirical alpha-quantile.

    The value ``x_(l)`` with ``l = max{h : sum_{i>=h} w_(i) >= 1 - alpha}``
    over the values sorted ascending (stable, so ties keep input order).
    A 1e-12 slack absorbs rounding in the tail sums.
    """
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise DomainError("alpha must lie in (0, 1)")
    return float(_quantiles(s, np.array([alpha]))[0])


def _sorted(s):
    order = np.argsort(s.values, kind="stable")
    return s.values[order], s.weights[order]


def _quantiles(s, alphas):
    if not s.weighted:
        # uniform weights: tail mass from rank h is (n - h + 1)/n, so the rule
        # selects rank l = n + 1 - ceil(n (1 - alpha) - slack)
        n = s.values.size
        need = np.ceil(n * (1.0 - alphas) - n * _TAIL_TOL)
        ranks = (n - np.clip(need, 1, n)).astype(np.int64)
        part = np.partition(s.values, np.unique(ranks))
        return part[ranks]
    xs, ws = _sorted(s)
    tail = np.cumsum(ws[::-1])[::-1]
    out = np.empty(alphas.size)
    for a, alpha in enumerate(alphas):
        idx = np.nonzero(tail >= 1.0 - alpha - _TAIL_TOL)[0]
        out[a] = xs[idx[-1]] if idx.size else xs[0]
    return out


def _check_estimable(s):
    x, w = s.support()
    if x.size < 2:
        raise EstimationError("at least two observations with positive weight are needed")
    if np.all(x == x[0]):
        raise EstimationError("sample is constant")
    if s.weighted and s.v_sum_sq >= 1.0:
        raise WeightingError("sum of squared weights must be below 1")
    return x, w


def _lm_params(x, w, cfg):
    lx = np.log(x)
    mu = float(np.dot(w, lx))
    v = float(np.dot(w, w))
    s2 = float(np.dot(w, (lx - mu) ** 2)) / (1.0 - v)
    beta = math.pi * math.sqrt(2.0) / math.sqrt(math.pi ** 2 + 6.0 * s2)
    lo, hi = cfg.beta_bounds
    beta = min(max(beta, lo), hi)
    return MlfParams(beta, math.exp(mu + EULER_GAMMA))


def estimate_lm(s, cfg=None):
    """Log-moment estimator.

    With weighted log-mean ``mu`` and bias-corrected weighted log-variance
    ``s2 = sum w (log x - mu)^2 / (1 - V)``, returns
    ``beta = pi*sqrt(2) / sqrt(pi^2 + 6 s2)`` (clamped to the box) and
    ``sigma = exp(mu + gamma)``, from ``E log X = log sigma - gamma`` and
    ``Var log X = (pi^2/6)(2/beta^2 - 1)``.
    """
    cfg = cfg or OptimizerConfig()
    t0 = time.perf_counter()
    x, w = _check_estimable(s)
    p = _lm_params(x, w, cfg)
    return EstimateResult(p, "LM", True, 0.0, 0, time.perf_counter() - t0, start=p)


def _fit(method, s, cfg, make_objective, qs=None, adm=None, report=None):
    """Shared driver: LM start, normalize by the LM scale, optimize."""
    t0 = time.perf_counter()
    x, w = _check_estimable(s)
    start = _lm_params(x, w, cfg)
    scale = start.sigma
    ncfg = OptimizerConfig(cfg.beta_bounds, cfg.sigma_lower / scale, cfg.grad_tol,
                           cfg.step_tol, cfg.max_iter)
    objective = make_objective(x / scale, w)
    try:
        p, diag = minimize_bounded(objective, MlfParams(start.beta, 1.0), ncfg)
    except EvaluationError as exc:
        raise EstimationError(f"{method}: {exc}") from exc
    params = MlfParams(p.beta, p.sigma * scale)
    value = diag.objective if report is None else report(diag.objective, scale)
    return EstimateResult(params, method, diag.converged and math.isfinite(value), value,
                          diag.iterations, time.perf_counter() - t0, qs, adm, start,
                          {"message": diag.message, "evaluations": diag.evaluations})


def estimate_ml(s, cfg=None, eval_config=None):
    """Maximum likelihood: argmax of ``sum w_i log f(x_i)``.

    ``objective_value`` is the attained weighted log-likelihood in the
    original units.
    """
    cfg = cfg or OptimizerConfig()
    be = backend(eval_config)

    def make(x, w):
        def obj(beta, sigma):
            ll, ok = K.weighted_loglik(beta, sigma, x, w, *be)
            if not ok:
                raise EvaluationError("log-likelihood evaluation failed", "ml")
            return -ll
        return obj

    # weights sum to one, so rescaling by c shifts the log-likelihood by -log c
    return _fit("ML", s, cfg, make, report=lambda f, scale: -f - math.log(scale))


def cm_mid_ranks(w_sorted):
    """Cumulative-weight mid-ranks ``C_i - w_(i)/2``; (2i-1)/(2n) for uniform weights."""
    c = np.cumsum(w_sorted)
    return c - 0.5 * w_sorted


def estimate_cm(s, cfg=None, eval_config=None):
    """Cramer-von Mises estimator: min of ``sum_i (m_i - F(x_(i)))^2``.

    ``m_i`` are the weighted mid-ranks of the sorted sample.
    """
    cfg = cfg or OptimizerConfig()
    be = backend(eval_config)

    def make(x, w):
        order = np.argsort(x, kind="stable")
        xs = np.ascontiguousarray(x[order])
        mid = cm_mid_ranks(w[order])

        def obj(beta, sigma):
            v, ok = K.cm_objective(beta, sigma, xs, mid, *be)
            if not ok:
                raise EvaluationError("cdf evaluation failed", "cm")
            return v
        return obj

    return _fit("CM", s, cfg, make)


def _resolve_qs(qs, default):
    if qs is None:
        return default
    return qs if isinstance(qs, QuantileSet) else QuantileSet(tuple(qs))


def estimate_qls(s, qs=None, cfg=None, eval_config=None):
    """Quantile least squares: min of ``sum_i (sigma Q(alpha_i; beta) - q_i)^2``.

    Internally divided by the squared largest empirical quantile for
    conditioning; ``objective_value`` is reported in squared data units.
    """
    cfg = cfg or OptimizerConfig()
    qs = _resolve_qs(qs, QLS_DEFAULT)
    alphas = qs.as_array()
    be = backend(eval_config)

    def make(x, w):
        q = _quantiles(WeightedSample(x, w), alphas)
        norm = float(q.max()) ** 2
        cache = {}
        std = np.empty(alphas.size)

        def obj(beta, sigma):
            key = float(beta)
            if key not in cache:
                if not K.std_quantiles(key, alphas, std, *be):
                    raise EvaluationError("quantile evaluation failed", "qls")
                cache[key] = std.copy()
                if len(cache) > 64:
                    cache.pop(next(iter(cache)))
            d = sigma * cache[key] - q
            return float(np.dot(d, d)) / norm

        holder["norm"] = norm
        return obj

    holder = {}
    return _fit("QLS", s, cfg, make, qs=qs,
                report=lambda f, scale: f * holder["norm"] * scale ** 2)


def estimate_qb(s, qs=None, cfg=None, eval_config=None, engine="lbfgsb", warn=True):
    """Quantile-based estimator: min of ``sum_i (alpha_i - F(q_i))^2``.

    Parameters
    ----------
    qs : QuantileSet, optional
        Defaults to (0.1, 0.3, 0.5, 0.8, 0.925).
    engine : {"lbfgsb", "lm"}
        ``lbfgsb`` uses the shared L-BFGS-B driver; ``lm`` the compiled
        projected Levenberg-Marquardt solver with analytic Jacobian used for
        the batched seasonal fits. Both target the same objective.
    warn : bool
        Emit :class:`AdmissibilityWarning` when the quantile set is not
        known to give a consistent estimator.
    """
    cfg = cfg or OptimizerConfig()
    qs = _resolve_qs(qs, QB_DEFAULT)
    adm = check_quantile_admissibility(qs)
    if warn and adm is Admissibility.NOT_ESTABLISHED:
        warnings.warn(f"quantile set {qs.alphas} is not known to be admissible", AdmissibilityWarning,
                      stacklevel=2)
    alphas = qs.as_array()
    be = backend(eval_config)
    if engine == "lm":
        return _qb_lm(s, qs, adm, alphas, cfg, be)
    if engine != "lbfgsb":
        raise DomainError(f"unknown engine {engine!r}")

    def make(x, w):
        q = _quantiles(WeightedSample(x, w), alphas)

        def obj(beta, sigma):
            v, ok = K.qb_objective(beta, sigma, q, alphas, *be)
            if not ok:
                raise EvaluationError("cdf evaluation failed", "qb")
            return v
        return obj

    return _fit("QB", s, cfg, make, qs=qs, adm=adm)


def _qb_lm(s, qs, adm, alphas, cfg, be):
    t0 = time.perf_counter()
    x, w = _check_estimable(s)
    start = _lm_params(x, w, cfg)
    q = _quantiles(WeightedSample(x, w), alphas)[None, :] / start.sigma
    out = [np.empty(1) for _ in range(3)]
    iters = np.empty(1, dtype=np.int64)
    conv = np.empty(1, dtype=np.bool_)
    lo, hi = cfg.beta_bounds
    K.qb_solve_batch(q, alphas, np.array([start.beta]), np.array([1.0]), lo, hi,
                     cfg.sigma_lower / start.sigma, int(cfg.max_iter), 1e-12, *be,
                     out[0], out[1], out[2], iters, conv)
    params = MlfParams(float(out[0][0]), float(out[1][0]) * start.sigma)
    return EstimateResult(params, "QB", bool(conv[0]), float(out[2][0]), int(iters[0]),
                          time.perf_counter() - t0, qs, adm, start, {"engine": "lm"})


def estimate(method, s, qs=None, cfg=None, eval_config=None):
    """Dispatch by method tag (LM, ML, CM, QLS, QB)."""
    m = method.upper()
    if m == "LM":
        return estimate_lm(s, cfg)
    if m == "ML":
        return estimate_ml(s, cfg, eval_config)
    if m == "CM":
        return estimate_cm(s, cfg, eval_config)
    if m == "QLS":
        return estimate_qls(s, qs, cfg, eval_config)
    if m == "QB":
        return estimate_qb(s, qs, cfg, eval_config)
    raise DomainError(f"unknown method {method!r}")
