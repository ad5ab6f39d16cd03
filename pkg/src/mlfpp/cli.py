"""Command-line interface: ``mlfpp fit | sweep | seasonal | permtest | sensitivity``.

Exit codes: 0 success, 1 input or usage error, 2 estimator did not converge
(``fit``). A ``--config`` TOML file supplies option defaults: top-level
keys apply to every command, a ``[command]`` table to that command only.
Explicit flags win. Floats are written with 17 significant digits and
missing values as ``NA``.
"""

import logging
import sys
import warnings
from pathlib import Path

import click
import numpy as np

try:
    import tomllib as tomli
except ModuleNotFoundError:  # Python < 3.11
    import tomli

from . import __version__
from .distribution import MlfParams, QuantileSet, sample
from .errors import DomainError, MlfError
from .estimators import METHODS, WeightedSample, estimate
from .optimize import OptimizerConfig
from .pot import (InputFormatError, extract_exceedances, read_observations, read_return_times,
                  to_return_times, years_from_events)
from .seasonal import (DAYS, fit_seasonal, permutation_test, prob_within, return_time_quantile,
                       weighted_freq_below)
from .simlab import paper_grid as full_paper_grid
from .simlab import (GRID_BETAS, GRID_NS, GRID_SIGMAS, default_contamination_grid, fmt,
                     make_grid, run_sweep, sensitivity_curve, sweep_summary, write_json,
                     write_sweep_csv)

log = logging.getLogger("mlfpp")

REFERENCE = "reference default"
ARTIFACT = "artifact default"


def _floats(text, what):
    try:
        vals = tuple(float(v) for v in str(text).split(",") if v.strip())
    except ValueError:
        raise click.BadParameter(f"{what} must be comma-separated numbers") from None
    if not vals:
        raise click.BadParameter(f"{what} is empty")
    return vals


def _qs(text):
    try:
        return QuantileSet(_floats(text, "quantiles"))
    except DomainError as exc:
        raise click.BadParameter(str(exc)) from None


def _methods(text):
    ms = [m.strip().upper() for m in str(text).split(",") if m.strip()]
    if not ms:
        raise click.UsageError("empty method list")
    bad = [m for m in ms if m not in METHODS]
    if bad:
        raise click.UsageError(f"unknown method(s) {','.join(bad)}; choose from {','.join(METHODS)}")
    return ms


def _outdir(path):
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _load_config(path):
    with open(path, "rb") as fh:
        data = tomli.load(fh)
    common = {k.replace("-", "_"): v for k, v in data.items() if not isinstance(v, dict)}
    out = {}
    for name in ("fit", "sweep", "seasonal", "permtest", "sensitivity"):
        d = dict(common)
        d.update({k.replace("-", "_"): v for k, v in data.get(name, {}).items()})
        out[name] = d
    return out


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.version_option(__version__, prog_name="mlfpp")
@click.option("--config", type=click.Path(exists=True, dir_okay=False),
              help="TOML file with option defaults (top level or per-command tables).")
@click.option("-v", "--verbose", is_flag=True, help="Log progress to stderr.")
@click.pass_context
def main(ctx, config, verbose):
    """Mittag-Leffler return-time modelling: estimation, simulation, seasonal analysis.

    Set MLFPP_NUM_THREADS to run sweep settings in parallel worker processes;
    outputs do not depend on the worker count.
    """
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if config:
        try:
            ctx.default_map = _load_config(config)
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise click.UsageError(f"cannot read config: {exc}") from None


# ---------------------------------------------------------------------------
# fit


def _read_weights(path, n):
    vals = []
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip().lower()
        if head != "weight":
            raise InputFormatError("expected header weight", path, 1)
        for i, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                vals.append(float(line))
            except ValueError:
                raise InputFormatError("not a number", path, i) from None
    w = np.array(vals)
    if w.size != n:
        raise InputFormatError(f"{w.size} weights for {n} observations", path)
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise InputFormatError("weights must be non-negative with a positive sum", path)
    return w / w.sum()


@main.command()
@click.argument("input", type=click.Path(dir_okay=False))
@click.option("--method", default="QB", show_default=True,
              help=f"Estimator: {', '.join(METHODS)}. [{ARTIFACT}]")
@click.option("--quantiles", default=None,
              help="Comma-separated probabilities for QB/QLS. "
                   f"[{REFERENCE}: QB 0.1,0.3,0.5,0.8,0.925; QLS 0.1,0.3,0.5,0.7,0.9]")
@click.option("--weights", type=click.Path(dir_okay=False), default=None,
              help="CSV with header 'weight', one row per return time; rescaled to sum 1.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=None,
              help="Also write fit.json here.")
def fit(input, method, quantiles, weights, output_dir):
    """Fit return times from a return_time_hours[,start_day] CSV."""
    method = _methods(method)[0]
    qs = _qs(quantiles) if quantiles else None
    try:
        series = read_return_times(input)
    except (OSError, MlfError) as exc:
        raise _InputError(str(exc)) from None
    if len(series) < 2:
        raise _InputError("need at least two return times")
    w = _read_weights(weights, len(series)) if weights else None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            res = estimate(method, WeightedSample(series.return_times, w), qs)
        except MlfError as exc:
            raise _InputError(str(exc)) from None
    for wmsg in caught:
        click.echo(f"warning: quantile set admissibility not established ({wmsg.message})",
                   err=True)
    out = {
        "method": res.method,
        "beta": res.params.beta,
        "sigma": res.params.sigma,
        "objective": res.objective_value,
        "converged": res.converged,
        "iterations": res.iterations,
        "wall_time_s": res.wall_time,
        "n": len(series),
    }
    if res.quantile_set is not None:
        out["quantiles"] = list(res.quantile_set.alphas)
        out["admissibility"] = res.admissibility.value
    for k, v in out.items():
        if isinstance(v, float):
            v = fmt(v)
        click.echo(f"{k}: {v}")
    if output_dir:
        write_json(out, _outdir(output_dir) / "fit.json")
    if not res.converged:
        sys.exit(2)


class _InputError(click.ClickException):
    exit_code = 1


# ---------------------------------------------------------------------------
# sweep


@main.command()
@click.option("--paper-grid", is_flag=True,
              help="All 9 x 9 x 4 = 324 (beta, sigma, n) settings. [reference grid]")
@click.option("--betas", default=",".join(str(b) for b in GRID_BETAS), show_default=True,
              help=f"Tail parameters. [{REFERENCE}]")
@click.option("--sigmas", default=",".join(f"{s:g}" for s in GRID_SIGMAS), show_default=True,
              help=f"Scales. [{REFERENCE}]")
@click.option("--ns", default=",".join(str(n) for n in GRID_NS), show_default=True,
              help=f"Sample sizes. [{REFERENCE}]")
@click.option("--replicates", default=1000, show_default=True, type=click.IntRange(1),
              help=f"Datasets per setting. [{REFERENCE}]")
@click.option("--methods", default=",".join(METHODS), show_default=True,
              help=f"Estimators to compare. [{REFERENCE}]")
@click.option("--qb-quantiles", default="0.1,0.3,0.5,0.8,0.925", show_default=True,
              help=f"QB probabilities. [{REFERENCE}]")
@click.option("--qls-quantiles", default="0.1,0.3,0.5,0.7,0.9", show_default=True,
              help=f"QLS probabilities. [{REFERENCE}]")
@click.option("--seed", default=0, show_default=True, type=int, help=f"Master seed. [{ARTIFACT}]")
@click.option("--no-timing", is_flag=True,
              help="Write mean_time_ms as NA so reruns are byte-identical.")
@click.option("--output-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def sweep(paper_grid, betas, sigmas, ns, replicates, methods, qb_quantiles, qls_quantiles, seed,
          no_timing, output_dir):
    """Simulation study: MSE and fit time per (beta, sigma, n, method).

    Writes sweep.csv and sweep_summary.json.
    """
    ms = _methods(methods)
    if paper_grid:
        grid = full_paper_grid(replicates, seed)
    else:
        try:
            triples = [(b, s, int(n)) for b in _floats(betas, "betas")
                       for s in _floats(sigmas, "sigmas") for n in _floats(ns, "ns")]
            grid = make_grid(triples, replicates, seed)
        except (DomainError, ValueError) as exc:
            raise _InputError(str(exc)) from None
    qs = {"QB": _qs(qb_quantiles), "QLS": _qs(qls_quantiles)}
    results = run_sweep(grid, ms, qs, OptimizerConfig(), timing=not no_timing)
    out = _outdir(output_dir)
    write_sweep_csv(results, out / "sweep.csv")
    write_json(sweep_summary(results, seed, replicates), out / "sweep_summary.json")
    click.echo(f"{len(grid)} settings written to {out / 'sweep.csv'}")


# ---------------------------------------------------------------------------
# seasonal


def _detect_kind(path):
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().strip().lower()
    if head.startswith("timestamp"):
        return "observations"
    if head.startswith("return_time_hours"):
        return "return-times"
    raise InputFormatError("unrecognized header", path, 1)


def _series_from_input(path, level, cadence):
    try:
        kind = _detect_kind(path)
        if kind == "return-times":
            return read_return_times(path)
        obs = read_observations(path, cadence)
        return to_return_times(extract_exceedances(obs, level))
    except (OSError, MlfError) as exc:
        raise _InputError(str(exc)) from None


@main.command()
@click.argument("input", type=click.Path(dir_okay=False))
@click.option("--level", default=0.99, show_default=True, type=float,
              help=f"Peaks-over-threshold quantile level. [{REFERENCE}]")
@click.option("--cadence", default=6.0, show_default=True, type=float,
              help=f"Sampling interval of observation files in hours. [{REFERENCE}]")
@click.option("--bandwidth", default=46.0, show_default=True, type=float,
              help=f"Kernel bandwidth c in days; 46 weights distances 0..45. [{REFERENCE}]")
@click.option("--method", default="QB", show_default=True, help=f"Estimator. [{REFERENCE}]")
@click.option("--horizon", default=72.0, show_default=True, type=float,
              help=f"Hours for the within-horizon probability and frequency. [{REFERENCE}]")
@click.option("--alpha", default=0.75, show_default=True, type=float,
              help=f"Return-time quantile reported per day. [{REFERENCE}]")
@click.option("--output-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def seasonal(input, level, cadence, bandwidth, method, horizon, alpha, output_dir):
    """Daily parameters and derived metrics; writes seasonal.csv (365 rows).

    INPUT is an observation CSV (timestamp,value) or a return-time CSV
    (return_time_hours,start_day). Days that cannot be fitted are NA; the
    command fails when more than half of the days do.
    """
    m = _methods(method)[0]
    series = _series_from_input(input, level, cadence)
    if len(series) < 2:
        raise _InputError("need at least two return times")
    try:
        sf = fit_seasonal(series, bandwidth, m)
    except MlfError as exc:
        raise _InputError(str(exc)) from None
    rows = []
    failed = 0
    for j in range(1, DAYS + 1):
        p = sf.daily_params[j - 1]
        if p is None:
            failed += 1
            q = pw = None
            b = s = None
        else:
            b, s = p.beta, p.sigma
            try:
                q = return_time_quantile(p, alpha)
                pw = prob_within(p, horizon)
            except MlfError:
                q = pw = None
        h = weighted_freq_below(series, j, bandwidth, horizon) if sf.effective_n[j - 1] > 0 else None
        rows.append((j, b, s, q, pw, h, sf.effective_n[j - 1]))
    out = _outdir(output_dir)
    with open(out / "seasonal.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("day,beta,sigma,q75_hours,p_within_72h,h_below_72,effective_n\n")
        for j, *vals in rows:
            fh.write(f"{j}," + ",".join(fmt(v) for v in vals) + "\n")
    click.echo(f"{DAYS - failed} of {DAYS} days fitted; written to {out / 'seasonal.csv'}")
    if failed > DAYS // 2:
        raise _InputError(f"{failed} of {DAYS} daily fits failed")


# ---------------------------------------------------------------------------
# permtest


@main.command()
@click.argument("input", type=click.Path(dir_okay=False))
@click.option("--split-year", type=int, default=None,
              help=f"First year of the second half; default splits the years in half. [{ARTIFACT}]")
@click.option("--B", "B", default=1000, show_default=True, type=click.IntRange(1),
              help=f"Number of permutations. [{REFERENCE}]")
@click.option("--bandwidth", default=46.0, show_default=True, type=float,
              help=f"Kernel bandwidth in days. [{REFERENCE}]")
@click.option("--method", default="QB", show_default=True, help=f"Estimator. [{REFERENCE}]")
@click.option("--level", default=0.99, show_default=True, type=float,
              help=f"Peaks-over-threshold quantile level. [{REFERENCE}]")
@click.option("--cadence", default=6.0, show_default=True, type=float,
              help=f"Sampling interval in hours. [{REFERENCE}]")
@click.option("--seed", default=0, show_default=True, type=int, help=f"Master seed. [{ARTIFACT}]")
@click.option("--output-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def permtest(input, split_year, B, bandwidth, method, level, cadence, seed, output_dir):
    """Seasonal stability test between two halves of the years; writes permtest.json.

    INPUT is an observation CSV (timestamp,value); exceedances are grouped
    by calendar year.
    """
    m = _methods(method)[0]
    try:
        obs = read_observations(input, cadence)
        events = extract_exceedances(obs, level).event_times
        years = years_from_events(events)
        res = permutation_test(years, bandwidth, m, B, seed, split_year)
    except (OSError, MlfError) as exc:
        raise _InputError(str(exc)) from None
    out = {
        "observed_distance_beta": res.observed_distance_beta,
        "observed_distance_sigma": res.observed_distance_sigma,
        "p_value_beta": res.p_value_beta,
        "p_value_sigma": res.p_value_sigma,
        "reject_beta_5pct": res.reject_beta,
        "reject_sigma_5pct": res.reject_sigma,
        "first_half_years": [int(y) for y in res.first_half_years],
        "second_half_years": [int(y) for y in res.second_half_years],
        "B": int(B),
        "seed": int(seed),
        "permutation_distances_beta": [float(v) for v in res.permutation_distances_beta],
        "permutation_distances_sigma": [float(v) for v in res.permutation_distances_sigma],
    }
    write_json(out, _outdir(output_dir) / "permtest.json")
    click.echo(f"p_beta: {fmt(res.p_value_beta)}  p_sigma: {fmt(res.p_value_sigma)}")


# ---------------------------------------------------------------------------
# sensitivity


@main.command()
@click.option("--methods", default=",".join(METHODS), show_default=True,
              help=f"Estimators. [{REFERENCE}]")
@click.option("--n", default=200, show_default=True, type=click.IntRange(2),
              help=f"Base sample size. [{REFERENCE}]")
@click.option("--beta", default=0.9, show_default=True, type=float, help=f"Base tail parameter. [{REFERENCE}]")
@click.option("--sigma", default=1.0, show_default=True, type=float, help=f"Base scale. [{REFERENCE}]")
@click.option("--grid-size", default=100, show_default=True, type=click.IntRange(1),
              help="Contamination points, evenly spaced from the 0.001 to the 0.999 quantile. "
                   f"[range: {REFERENCE}; size: {ARTIFACT}]")
@click.option("--seed", default=0, show_default=True, type=int, help=f"Seed of the base sample. [{ARTIFACT}]")
@click.option("--output-dir", type=click.Path(file_okay=False), default=".", show_default=True)
def sensitivity(methods, n, beta, sigma, grid_size, seed, output_dir):
    """Sensitivity curves of beta-hat and sigma-hat; writes sensitivity.csv."""
    ms = _methods(methods)
    try:
        p = MlfParams(beta, sigma)
    except DomainError as exc:
        raise _InputError(str(exc)) from None
    base = sample(p, n, seed)
    grid = default_contamination_grid(p, grid_size)
    out = _outdir(output_dir)
    with open(out / "sensitivity.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("method,x,sc_beta,sc_sigma,failed\n")
        for m in ms:
            c = sensitivity_curve(m, base, grid)
            for x, sb, ss, f in zip(c.x, c.beta, c.sigma, c.failed):
                fh.write(f"{m},{fmt(x)},{fmt(sb)},{fmt(ss)},{int(f)}\n")
    click.echo(f"{len(ms)} curve(s) written to {out / 'sensitivity.csv'}")


def run(argv=None):
    """Entry point mapping usage errors to exit code 1."""
    try:
        rv = main.main(args=argv, prog_name="mlfpp", standalone_mode=False)
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.ClickException as exc:
        exc.show()
        return 1
    except (MlfError, OSError) as exc:
        click.echo(f"Error: {exc}", err=True)
        return 1
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(run())
