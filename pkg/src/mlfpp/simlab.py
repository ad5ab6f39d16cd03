"""Simulation studies: settings grid, MSE, efficiencies, timing, sensitivity curves.

Seeds are derived from one master seed with :func:`mlfpp.seeding.derive_seed`:
setting ``i`` gets ``derive_seed(master, i)`` and replicate ``r`` of a
setting with seed ``s`` draws its sample with ``derive_seed(s, r)``. Results
therefore do not depend on how work is scheduled.
"""

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .distribution import MlfParams, QuantileSet, quantile, sample
from .errors import DomainError, MlfError, UndefinedEfficiencyError
from .estimators import METHODS, QB_DEFAULT, QLS_DEFAULT, WeightedSample, estimate
from .optimize import OptimizerConfig
from .seeding import derive_seed

GRID_BETAS = tuple(round(0.6 + 0.05 * i, 2) for i in range(9))
GRID_SIGMAS = (25.0, 50.0, 100.0, 250.0, 500.0, 750.0, 1000.0, 1500.0, 2000.0)
GRID_NS = (200, 500, 1000, 5000)
DEFAULT_REPLICATES = 1000
THREADS_ENV = "MLFPP_NUM_THREADS"

CSV_HEADER = "beta,sigma,n,method,mse_beta,mse_sigma,mean_time_ms,failures"


@dataclass(frozen=True)
class SimSetting:
    beta: float
    sigma: float
    n: int
    replicates: int = DEFAULT_REPLICATES
    seed: int = 0

    def __post_init__(self):
        MlfParams(self.beta, self.sigma)
        if int(self.n) != self.n or self.n < 2:
            raise DomainError("n must be an integer >= 2")
        if int(self.replicates) != self.replicates or self.replicates < 1:
            raise DomainError("replicates must be a positive integer")

    @property
    def params(self):
        return MlfParams(self.beta, self.sigma)


@dataclass
class MethodStats:
    """Replicate estimates of one method in one setting (failures excluded)."""

    method: str
    beta_hat: np.ndarray
    sigma_hat: np.ndarray
    times: np.ndarray
    failures: int
    true: MlfParams

    def _mse(self, est, truth):
        if est.size == 0:
            return float("nan")
        return float(np.mean((est - truth) ** 2))

    @property
    def mse_beta(self):
        return self._mse(self.beta_hat, self.true.beta)

    @property
    def mse_sigma(self):
        return self._mse(self.sigma_hat, self.true.sigma)

    @property
    def rmse_beta(self):
        return math.sqrt(self.mse_beta)

    @property
    def rmse_sigma(self):
        return math.sqrt(self.mse_sigma)

    @property
    def mean_time(self):
        """Mean wall time per successful fit in seconds."""
        return float(np.mean(self.times)) if self.times.size else float("nan")

    def bias_variance(self, param="beta"):
        """(bias, variance) with the 1/m variance, so MSE = bias^2 + variance."""
        est = self.beta_hat if param == "beta" else self.sigma_hat
        truth = self.true.beta if param == "beta" else self.true.sigma
        if est.size == 0:
            return float("nan"), float("nan")
        m = float(np.mean(est))
        return m - truth, float(np.mean((est - m) ** 2))


@dataclass
class SimResult:
    setting: SimSetting
    stats: dict = field(default_factory=dict)

    def __getitem__(self, method):
        return self.stats[method.upper()]


_WARM = set()


def _warm_up(method, qs, cfg, eval_config):
    # first calls pay for loading compiled kernels and the lookup table
    key = (method, eval_config is None)
    if key in _WARM:
        return
    x = sample(MlfParams(0.8, 1.0), 64, 12345)
    try:
        estimate(method, WeightedSample(x), qs, cfg, eval_config)
    except MlfError:
        pass
    _WARM.add(key)


def _default_qs(method):
    return {"QB": QB_DEFAULT, "QLS": QLS_DEFAULT}.get(method)


def run_setting(st, methods=METHODS, qs=None, cfg=None, eval_config=None, timing=True):
    """Draw ``st.replicates`` samples and fit every method to each.

    Parameters
    ----------
    st : SimSetting
    methods : sequence of str
    qs : dict, optional
        Method -> QuantileSet, for QB and QLS.
    timing : bool
        Time each fit with a monotonic clock (estimator call only). When
        false, times are recorded as NaN.

    A fit that raises or does not converge counts as a failure and is left
    out of the MSE and the mean time.
    """
    cfg = cfg or OptimizerConfig()
    methods = [m.upper() for m in methods]
    if not methods:
        raise DomainError("no methods given")
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method {m!r}")
    qs = {k.upper(): v for k, v in (qs or {}).items()}
    qmap = {m: qs.get(m, _default_qs(m)) for m in methods}
    if timing:
        for m in methods:
            _warm_up(m, qmap[m], cfg, eval_config)
    p = st.params
    est = {m: ([], [], []) for m in methods}
    fails = dict.fromkeys(methods, 0)
    for r in range(int(st.replicates)):
        s = WeightedSample(sample(p, st.n, derive_seed(st.seed, r)))
        for m in methods:
            t0 = time.perf_counter()
            try:
                res = estimate(m, s, qmap[m], cfg, eval_config)
            except MlfError:
                fails[m] += 1
                continue
            dt = time.perf_counter() - t0
            if not res.converged:
                fails[m] += 1
                continue
            b, sg, tt = est[m]
            b.append(res.params.beta)
            sg.append(res.params.sigma)
            tt.append(dt if timing else float("nan"))
    out = SimResult(st)
    for m in methods:
        b, sg, tt = est[m]
        out.stats[m] = MethodStats(m, np.array(b), np.array(sg), np.array(tt), fails[m], p)
    return out


def relative_efficiency(reference, other, param="beta"):
    """``MSE(reference) / MSE(other)``; above 1 means ``other`` is better.

    ``reference`` and ``other`` are :class:`MethodStats` or plain MSE values.
    """
    def mse(x):
        if isinstance(x, MethodStats):
            return x.mse_beta if param == "beta" else x.mse_sigma
        return float(x)

    a = mse(reference)
    b = mse(other)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise UndefinedEfficiencyError("efficiency needs finite MSEs")
    if b <= 0:
        raise UndefinedEfficiencyError("MSE of the compared estimator is zero")
    return a / b


def paper_grid(replicates=DEFAULT_REPLICATES, master_seed=0):
    """The 9 x 9 x 4 = 324 settings (beta, sigma, n) with derived seeds."""
    out = []
    for b in GRID_BETAS:
        for s in GRID_SIGMAS:
            for n in GRID_NS:
                out.append((b, s, n))
    return make_grid(out, replicates, master_seed)


def make_grid(triples, replicates, master_seed=0):
    """Settings from (beta, sigma, n) triples; setting i gets seed derive_seed(master, i)."""
    return [SimSetting(b, s, int(n), int(replicates), derive_seed(master_seed, i))
            for i, (b, s, n) in enumerate(triples)]


def criterion_terms(ml, qb):
    """``MSE_ML(beta)/MSE_QB(beta) + MSE_ML(sigma)/MSE_QB(sigma)`` for one setting."""
    return relative_efficiency(ml, qb, "beta") + relative_efficiency(ml, qb, "sigma")


def quantile_search_criterion(grid, qs, replicates=None, cfg=None, eval_config=None,
                              ml_results=None):
    """Average over the grid of the two ML-vs-QB efficiency ratios.

    Parameters
    ----------
    grid : list of SimSetting
    qs : QuantileSet
        Quantile set of the QB estimator under study.
    replicates : int, optional
        Overrides the replicate count of every setting.
    ml_results : list of MethodStats, optional
        Precomputed ML results per setting, so that several quantile sets
        can be scored against the same ML runs. Seeds are shared, so QB and
        ML see identical samples.

    Raises
    ------
    UndefinedEfficiencyError
        Listing the settings whose ratio is undefined.
    """
    if not grid:
        raise DomainError("grid is empty")
    qs = qs if isinstance(qs, QuantileSet) else QuantileSet(tuple(qs))
    total = 0.0
    bad = []
    for i, st in enumerate(grid):
        if replicates is not None:
            st = SimSetting(st.beta, st.sigma, st.n, int(replicates), st.seed)
        if ml_results is None:
            res = run_setting(st, ("ML", "QB"), {"QB": qs}, cfg, eval_config, timing=False)
            ml = res["ML"]
        else:
            res = run_setting(st, ("QB",), {"QB": qs}, cfg, eval_config, timing=False)
            ml = ml_results[i]
        try:
            total += criterion_terms(ml, res["QB"])
        except UndefinedEfficiencyError:
            bad.append((st.beta, st.sigma, st.n))
    if bad:
        raise UndefinedEfficiencyError(f"undefined efficiency for settings {bad}")
    return total / len(grid)


def default_contamination_grid(p, size=100):
    """``size`` evenly spaced points from the 0.001 to the 0.999 quantile of ``p``.

    A single point is placed at the median.
    """
    size = int(size)
    if size < 1:
        raise DomainError("grid size must be positive")
    if size == 1:
        return np.array([quantile(p, 0.5)])
    return np.linspace(quantile(p, 0.001), quantile(p, 0.999), size)


@dataclass
class SensitivityCurve:
    method: str
    x: np.ndarray
    beta: np.ndarray
    sigma: np.ndarray
    failed: np.ndarray
    base: MlfParams


def sensitivity_curve(method, base_sample, x_grid, qs=None, cfg=None, eval_config=None):
    """``SC(x) = (n + 1) * (theta_hat(sample + x) - theta_hat(sample))`` for beta and sigma.

    Points where the contaminated fit fails are NaN and flagged in ``failed``.
    """
    m = method.upper()
    x0 = np.asarray(base_sample, dtype=float).ravel()
    n = x0.size
    qs = qs or _default_qs(m)
    base = estimate(m, WeightedSample(x0), qs, cfg, eval_config).params
    grid = np.asarray(x_grid, dtype=float).ravel()
    sb = np.full(grid.size, np.nan)
    ss = np.full(grid.size, np.nan)
    failed = np.zeros(grid.size, dtype=bool)
    for i, x in enumerate(grid):
        try:
            r = estimate(m, WeightedSample(np.append(x0, x)), qs, cfg, eval_config)
        except MlfError:
            failed[i] = True
            continue
        if not r.converged:
            failed[i] = True
        sb[i] = (n + 1) * (r.params.beta - base.beta)
        ss[i] = (n + 1) * (r.params.sigma - base.sigma)
    return SensitivityCurve(m, grid, sb, ss, failed, base)


# ---------------------------------------------------------------------------
# sweeps and reports


def fmt(x):
    """17 significant digits; NaN as NA."""
    if x is None:
        return "NA"
    x = float(x)
    if not math.isfinite(x):
        return "NA"
    return f"{x:.17g}"


def _run_one(args):
    st, methods, qs, cfg, timing = args
    return run_setting(st, methods, qs, cfg, None, timing)


def worker_count():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def run_sweep(settings, methods, qs=None, cfg=None, timing=True, workers=None):
    """Run every setting; results come back in input order whatever the worker count."""
    workers = worker_count() if workers is None else int(workers)
    jobs = [(st, tuple(methods), qs, cfg, timing) for st in settings]
    if workers <= 1 or len(jobs) <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_run_one, jobs))


def sweep_rows(results):
    rows = []
    for res in results:
        st = res.setting
        for m, ms in res.stats.items():
            t = ms.mean_time * 1000.0
            rows.append((st.beta, st.sigma, st.n, m, ms.mse_beta, ms.mse_sigma, t, ms.failures))
    return rows


def write_sweep_csv(results, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for b, s, n, m, mb, ms, t, f in sweep_rows(results):
            fh.write(f"{fmt(b)},{fmt(s)},{n},{m},{fmt(mb)},{fmt(ms)},{fmt(t)},{f}\n")


def sweep_summary(results, master_seed, replicates):
    """Per-method averages across settings, for the JSON report."""
    by = {}
    for res in results:
        for m, ms in res.stats.items():
            d = by.setdefault(m, {"mse_beta": [], "mse_sigma": [], "failures": 0})
            d["mse_beta"].append(ms.mse_beta)
            d["mse_sigma"].append(ms.mse_sigma)
            d["failures"] += ms.failures

    def mean(v):
        v = [x for x in v if math.isfinite(x)]
        return float(np.mean(v)) if v else None

    return {
        "settings": len(results),
        "replicates": int(replicates),
        "master_seed": int(master_seed),
        "methods": {m: {"mean_mse_beta": mean(d["mse_beta"]),
                        "mean_mse_sigma": mean(d["mse_sigma"]),
                        "failures": d["failures"]} for m, d in by.items()},
    }


def write_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
