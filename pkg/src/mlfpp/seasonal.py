"""Seasonal fractional Poisson process.

Each return time carries the calendar day (1..365) of the event that opens
it. For every day ``j`` the parameters are estimated from all return times,
weighted by an Epanechnikov kernel in circular calendar distance

    k_c(j, t) = 3 / (4c) * max(0, 1 - (d(t, j) / c)**2),

normalized to sum to one per day. The permutation test compares daily fits
of two halves of the years against random re-splits.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .distribution import (MlfParams, QuantileSet, backend, cdf, make_rng, quantile,
                           sample_from_rng)
from .errors import (DomainError, EmptyWindowError, MlfError, PermutationTestError)
from .estimators import QB_DEFAULT, QLS_DEFAULT, WeightedSample, estimate, estimate_qb
from .optimize import OptimizerConfig
from .seeding import derive_seed

DAYS = 365
HOURS_PER_DAY = 24.0
DEFAULT_BANDWIDTH = 46.0
DEFAULT_HORIZON = 72.0
DEFAULT_RT_ALPHA = 0.75


@dataclass
class ReturnTimeSeries:
    """Return times (hours) and the calendar day opening each interval."""

    return_times: np.ndarray
    start_days: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.return_times, dtype=float).ravel()
        d = np.asarray(self.start_days).ravel()
        if w.shape != d.shape:
            raise DomainError("return_times and start_days differ in length")
        if w.size == 0:
            raise DomainError("series is empty")
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise DomainError("return times must be positive and finite")
        if np.any(d != np.round(d)) or np.any((d < 1) | (d > DAYS)):
            raise DomainError("start days must be integers in 1..365")
        self.return_times = w
        self.start_days = d.astype(np.int64)

    def __len__(self):
        return self.return_times.size

    def rotated(self, shift):
        """Same data with every start day moved by ``shift`` (mod 365)."""
        days = (self.start_days - 1 + int(shift)) % DAYS + 1
        return ReturnTimeSeries(self.return_times.copy(), days)


@dataclass
class SeasonalFit:
    """Daily estimates; index ``j - 1`` holds calendar day ``j``.

    Missing days (empty window or failed fit) have ``None`` in
    ``daily_params`` and NaN in ``beta`` / ``sigma``.
    """

    daily_params: list
    bandwidth_days: float
    method: str
    effective_n: np.ndarray
    converged: np.ndarray
    errors: dict = field(default_factory=dict)

    @property
    def beta(self):
        return np.array([p.beta if p is not None else np.nan for p in self.daily_params])

    @property
    def sigma(self):
        return np.array([p.sigma if p is not None else np.nan for p in self.daily_params])

    @property
    def missing(self):
        return np.array([p is None for p in self.daily_params])


def _check_day(j):
    if int(j) != j or not (1 <= j <= DAYS):
        raise DomainError(f"calendar day must be an integer in 1..365, got {j!r}")
    return int(j)


def circular_distance(h, j):
    """Calendar distance ``min(|h - j|, 365 - |h - j|)``."""
    a = abs(_check_day(h) - _check_day(j))
    return min(a, DAYS - a)


def _raw_weights(j, start_days, c):
    d = np.abs(np.asarray(start_days, dtype=np.int64) - j)
    d = np.minimum(d, DAYS - d)
    z = d / c
    return 3.0 / (4.0 * c) * np.maximum(0.0, 1.0 - z * z)


def kernel_weights(j, start_days, c=DEFAULT_BANDWIDTH):
    """Normalized Epanechnikov weights for day ``j`` and the raw kernel mass.

    Returns
    -------
    (weights, raw_mass)

    Raises
    ------
    EmptyWindowError
        If no start day lies within distance < c of ``j``.
    """
    j = _check_day(j)
    if not (c > 0):
        raise DomainError("bandwidth must be positive")
    raw = _raw_weights(j, start_days, float(c))
    mass = float(raw.sum())
    if mass <= 0:
        raise EmptyWindowError(f"no observation within the window of day {j}")
    return raw / mass, mass


def fit_seasonal(series, c=DEFAULT_BANDWIDTH, method="QB", qs=None, cfg=None, engine="batch",
                 eval_config=None):
    """Weighted estimates for each calendar day.

    Parameters
    ----------
    series : ReturnTimeSeries
    c : float
        Kernel bandwidth in days; 46 gives positive weight to distances 0..45.
    method : {"LM", "ML", "CM", "QLS", "QB"}
    engine : {"batch", "scalar"}
        For QB, ``batch`` runs all 365 fits in one compiled loop with the
        Levenberg-Marquardt solver; ``scalar`` calls the general estimator
        per day. Other methods always use the per-day path.

    Per-day failures are recorded in ``errors`` and do not stop the fit.
    """
    if not (c > 0):
        raise DomainError("bandwidth must be positive")
    cfg = cfg or OptimizerConfig()
    method = method.upper()
    if method == "QB" and engine == "batch":
        return _fit_qb_batch(series, float(c), qs or QB_DEFAULT, cfg, eval_config)
    if engine not in ("batch", "scalar"):
        raise DomainError(f"unknown engine {engine!r}")
    if method in ("QB", "QLS") and qs is None:
        qs = QB_DEFAULT if method == "QB" else QLS_DEFAULT
    params = [None] * DAYS
    mass = np.zeros(DAYS)
    conv = np.zeros(DAYS, dtype=bool)
    errors = {}
    values = series.return_times
    for j in range(1, DAYS + 1):
        raw = _raw_weights(j, series.start_days, float(c))
        total = float(raw.sum())
        mass[j - 1] = total
        if total <= 0:
            errors[j] = "empty window"
            continue
        m = raw > 0
        w = raw[m] / total
        w = w / w.sum()
        try:
            s = WeightedSample(values[m], w)
            if method == "QB":
                r = estimate_qb(s, qs, cfg, eval_config, warn=False)
            else:
                r = estimate(method, s, qs, cfg, eval_config)
        except MlfError as exc:
            errors[j] = str(exc)
            continue
        params[j - 1] = r.params
        conv[j - 1] = r.converged
        if not r.converged:
            errors[j] = "not converged"
    return SeasonalFit(params, float(c), method, mass, conv, errors)


def _fit_qb_batch(series, c, qs, cfg, eval_config):
    qs = qs if isinstance(qs, QuantileSet) else QuantileSet(tuple(qs))
    order = np.argsort(series.return_times, kind="stable")
    xs = np.ascontiguousarray(series.return_times[order])
    days = np.ascontiguousarray(series.start_days[order])
    beta = np.empty(DAYS)
    sigma = np.empty(DAYS)
    mass = np.empty(DAYS)
    conv = np.empty(DAYS, dtype=np.bool_)
    lo, hi = cfg.beta_bounds
    K.seasonal_qb(xs, days, c, qs.as_array(), lo, hi, cfg.sigma_lower, int(cfg.max_iter), 1e-12,
                  *backend(eval_config), beta, sigma, mass, conv)
    params = []
    errors = {}
    for j in range(DAYS):
        if np.isfinite(beta[j]) and np.isfinite(sigma[j]) and sigma[j] > 0:
            params.append(MlfParams(beta[j], sigma[j]))
            if not conv[j]:
                errors[j + 1] = "not converged"
        else:
            params.append(None)
            errors[j + 1] = "empty window" if mass[j] <= 0 else "degenerate window"
    return SeasonalFit(params, c, "QB", mass, conv.astype(bool), errors)


def prob_within(p, horizon=DEFAULT_HORIZON):
    """Probability of the next event within ``horizon`` hours, ``F(horizon)``."""
    if not (horizon > 0):
        raise DomainError("horizon must be positive")
    return cdf(p, horizon)


def return_time_quantile(p, alpha=DEFAULT_RT_ALPHA):
    """The ``alpha`` quantile of the return time."""
    return quantile(p, alpha)


def weighted_freq_below(series, j, c=DEFAULT_BANDWIDTH, threshold=DEFAULT_HORIZON):
    """Kernel-weighted share of return times below ``threshold`` on day ``j``.

    Uses the normalized weights, so the result is a relative frequency in
    [0, 1].
    """
    w, _ = kernel_weights(j, series.start_days, c)
    return float(np.dot(w, series.return_times < threshold))


# ---------------------------------------------------------------------------
# years and the permutation test


@dataclass
class YearFragment:
    """Events of one calendar year as hour offsets from its Jan 1, 00:00.

    ``year_hours`` is 8760 or 8784 (leap year); calendar days are mapped to
    the 365-day scale with February 29 sharing day 59.
    """

    event_hours: np.ndarray
    year_hours: float = 8760.0

    def __post_init__(self):
        e = np.asarray(self.event_hours, dtype=float).ravel()
        if np.any(np.diff(e) < 0):
            raise DomainError("event offsets must be non-decreasing")
        if e.size and (e[0] < 0 or e[-1] >= self.year_hours):
            raise DomainError("event offsets must lie within the year")
        if self.year_hours not in (8760.0, 8784.0):
            raise DomainError("year_hours must be 8760 or 8784")
        self.event_hours = e

    def calendar_days(self):
        doy = np.floor(self.event_hours / HOURS_PER_DAY).astype(np.int64) + 1
        if self.year_hours == 8784.0:
            doy = np.where(doy >= 60, doy - 1, doy)
        return doy


def concatenate_years(fragments):
    """Join years end to end and recompute the return times across joins.

    The return time spanning a join runs from the last event of one year
    to the first event of the next, as if the years were contiguous.
    """
    times = []
    days = []
    offset = 0.0
    for fr in fragments:
        times.append(fr.event_hours + offset)
        days.append(fr.calendar_days())
        offset += fr.year_hours
    t = np.concatenate(times) if times else np.empty(0)
    d = np.concatenate(days) if days else np.empty(0, dtype=np.int64)
    if t.size < 2:
        raise DomainError("fewer than two events")
    w = np.diff(t)
    keep = w > 0
    return ReturnTimeSeries(w[keep], d[:-1][keep])


@dataclass
class PermutationTestResult:
    observed_distance_beta: float
    observed_distance_sigma: float
    permutation_distances_beta: np.ndarray
    permutation_distances_sigma: np.ndarray
    p_value_beta: float
    p_value_sigma: float
    reject_beta: bool
    reject_sigma: bool
    first_half_years: list
    second_half_years: list

    @property
    def p_values(self):
        return (self.p_value_beta, self.p_value_sigma)

    @property
    def reject_at_5pct(self):
        return (self.reject_beta, self.reject_sigma)


def _half_fit(fragments, c, method, qs, cfg, engine):
    fit = fit_seasonal(concatenate_years(fragments), c, method, qs, cfg, engine)
    failed = int(np.sum(fit.missing))
    if failed > DAYS // 2:
        raise PermutationTestError(f"{failed} of 365 daily fits failed")
    b = fit.beta
    s = fit.sigma
    # unconverged days count as missing
    b[~fit.converged] = np.nan
    s[~fit.converged] = np.nan
    return b, s


def _distances(b1, s1, b2, s2):
    ok = np.isfinite(b1) & np.isfinite(b2) & np.isfinite(s1) & np.isfinite(s2)
    return float(np.sum((b1[ok] - b2[ok]) ** 2)), float(np.sum((s1[ok] - s2[ok]) ** 2))


def permutation_test(series_by_year, c=DEFAULT_BANDWIDTH, method="QB", B=1000, seed=0,
                     split_year=None, qs=None, cfg=None, engine="batch"):
    """Test whether the daily parameters differ between two halves of the years.

    The observed halves are chronological: the years before ``split_year``
    (default: the first floor(K/2) years) against the rest. Each of the B
    replicates shuffles the years with its own derived seed, takes the first
    floor(K/2) of the shuffled order as one half, and concatenates each half
    in shuffled order. The distance is ``sum_j (b1(j) - b2(j))^2`` over days
    estimable in both halves, separately for beta and sigma, and
    ``p = (1 + #{replicates >= observed}) / (B + 1)``.

    Parameters
    ----------
    series_by_year : dict
        Year -> :class:`YearFragment`.
    """
    years = sorted(series_by_year)
    k = len(years)
    if k < 4:
        raise DomainError("the permutation test needs at least four years")
    if int(B) != B or B < 1:
        raise DomainError("B must be a positive integer")
    if split_year is None:
        first = years[: k // 2]
    else:
        first = [y for y in years if y < split_year]
    second = [y for y in years if y not in first]
    if not first or not second:
        raise DomainError("split leaves one half empty")
    frags = [series_by_year[y] for y in years]
    b1, s1 = _half_fit([series_by_year[y] for y in first], c, method, qs, cfg, engine)
    b2, s2 = _half_fit([series_by_year[y] for y in second], c, method, qs, cfg, engine)
    obs_b, obs_s = _distances(b1, s1, b2, s2)
    m = len(first)
    perm_b = np.empty(int(B))
    perm_s = np.empty(int(B))
    for r in range(int(B)):
        idx = make_rng(derive_seed(seed, r)).permutation(k)
        h1 = [frags[i] for i in idx[:m]]
        h2 = [frags[i] for i in idx[m:]]
        pb1, ps1 = _half_fit(h1, c, method, qs, cfg, engine)
        pb2, ps2 = _half_fit(h2, c, method, qs, cfg, engine)
        perm_b[r], perm_s[r] = _distances(pb1, ps1, pb2, ps2)
    p_b = (1.0 + np.sum(perm_b >= obs_b)) / (B + 1.0)
    p_s = (1.0 + np.sum(perm_s >= obs_s)) / (B + 1.0)
    return PermutationTestResult(obs_b, obs_s, perm_b, perm_s, float(p_b), float(p_s),
                                 bool(p_b <= 0.05), bool(p_s <= 0.05), first, second)


# ---------------------------------------------------------------------------
# synthetic data


def simulate_year(p, rng, year_hours=8760.0):
    """Events of one year from a renewal process started at Jan 1, 00:00."""
    out = []
    t = 0.0
    chunk = 64
    while True:
        w = sample_from_rng(p, chunk, rng)
        for x in w:
            t += x
            if t >= year_hours:
                return YearFragment(np.array(out), year_hours)
            out.append(t)


def sigma_for_rate(beta, events_per_year, year_hours=8760.0):
    """Scale giving ``events_per_year`` expected renewals in one year.

    Uses the renewal-function identity E N(t) = (t/sigma)^beta / Gamma(1+beta).
    """
    return year_hours * (events_per_year * math.gamma(1.0 + beta)) ** (-1.0 / beta)


def simulate_seasonal(beta_fn, sigma_fn, n_return_times, seed):
    """Seasonal process with day-dependent parameters.

    Each return time is drawn with the parameters of the calendar day
    (365-day years) on which it starts. Returns a :class:`ReturnTimeSeries`.
    """
    rng = make_rng(seed)
    w = np.empty(int(n_return_times))
    d = np.empty(int(n_return_times), dtype=np.int64)
    t = 0.0
    for i in range(w.size):
        day = int((t % (DAYS * HOURS_PER_DAY)) // HOURS_PER_DAY) + 1
        x = sample_from_rng(MlfParams(beta_fn(day), sigma_fn(day)), 1, rng)[0]
        w[i] = x
        d[i] = day
        t += x
    return ReturnTimeSeries(w, d)
