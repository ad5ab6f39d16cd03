"""Bound-constrained minimization over (beta, sigma).

A thin layer over scipy's L-BFGS-B. The search runs in ``(beta, log sigma)``
with central finite-difference gradients (relative step 1e-7), switching to
a one-sided difference when a central step would leave the box. Each
L-BFGS-B run is confined to a trust box of half-width 0.25 in beta and 2 in
log sigma around the current point; the box is recentred while the solution
sits on its edge and shrunk when a run makes no progress.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .distribution import MlfParams
from .errors import DomainError, EvaluationError


@dataclass(frozen=True)
class OptimizerConfig:
    """Box and stopping rules for the (beta, sigma) search.

    ``grad_tol`` bounds the projected gradient (scipy ``gtol``), ``step_tol``
    the relative objective decrease per iteration (scipy ``ftol``).
    """

    beta_bounds: tuple = (1e-4, 1.0)
    sigma_lower: float = 1e-12
    grad_tol: float = 1e-8
    step_tol: float = 1e-12
    max_iter: int = 500

    def __post_init__(self):
        lo, hi = (float(v) for v in self.beta_bounds)
        if not (0.0 < lo < hi <= 1.0):
            raise DomainError("beta_bounds must satisfy 0 < lo < hi <= 1")
        if not (self.sigma_lower > 0.0):
            raise DomainError("sigma_lower must be positive")
        if not (self.grad_tol > 0.0 and self.step_tol > 0.0):
            raise DomainError("tolerances must be positive")
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise DomainError("max_iter must be a positive integer")
        object.__setattr__(self, "beta_bounds", (lo, hi))


@dataclass
class OptimizeDiagnostics:
    converged: bool
    iterations: int
    objective: float
    evaluations: int
    message: str = ""
    projected_gradient: float = field(default=float("nan"))


_PENALTY = 1e100


def _fd_gradient(fun, z, f0, lo, hi):
    g = np.empty(2)
    for k in range(2):
        h = 1e-7 * max(1.0, abs(z[k]))
        zp = z.copy()
        zm = z.copy()
        zp[k] += h
        zm[k] -= h
        if zp[k] > hi[k]:
            zp[k] = z[k]
            g[k] = (f0 - fun(zm)) / h
        elif zm[k] < lo[k]:
            zm[k] = z[k]
            g[k] = (fun(zp) - f0) / h
        else:
            g[k] = (fun(zp) - fun(zm)) / (2.0 * h)
    return g


def _projected_norm(z, g, lo, hi):
    pg = g.copy()
    for k in range(2):
        if z[k] >= hi[k] and pg[k] < 0:
            pg[k] = 0.0
        if z[k] <= lo[k] and pg[k] > 0:
            pg[k] = 0.0
    return float(np.max(np.abs(pg)))


def minimize_bounded(objective, start, cfg=None):
    """Minimize ``objective(beta, sigma)`` over (beta_lo, beta_hi] x [sigma_lower, inf).

    Parameters
    ----------
    objective : callable
        ``objective(beta, sigma) -> float``. May raise
        :class:`~mlfpp.errors.EvaluationError`; such points are treated as
        infeasible.
    start : MlfParams
    cfg : OptimizerConfig, optional

    Returns
    -------
    (MlfParams, OptimizeDiagnostics)
        The best iterate found, whether or not the stopping rule was met.
    """
    cfg = cfg or OptimizerConfig()
    blo, bhi = cfg.beta_bounds
    lo = np.array([blo, math.log(cfg.sigma_lower)])
    hi = np.array([bhi, np.inf])
    nev = [0]

    def fun(z):
        nev[0] += 1
        try:
            v = float(objective(float(z[0]), math.exp(z[1])))
        except (EvaluationError, DomainError, OverflowError):
            return _PENALTY
        return v if math.isfinite(v) else _PENALTY

    z0 = np.array([min(max(start.beta, blo), bhi), max(math.log(start.sigma), lo[1])])
    f_start = fun(z0)
    if f_start >= _PENALTY:
        raise EvaluationError("objective is not finite at the starting point", "optimizer", f_start)

    def fg(z):
        z = np.minimum(np.maximum(z, lo), hi)
        f = fun(z)
        return f, _fd_gradient(fun, z, f, lo, hi)

    # L-BFGS-B inside a moving trust box: an unrestricted first step can land
    # where the objective is not computable, which stalls the line search
    z, f = z0, f_start
    radius = np.array([0.25, 2.0])
    iters = 0
    message = ""
    converged = False
    pg = float("nan")
    for _ in range(40):
        tlo = np.maximum(lo, z - radius)
        thi = np.minimum(hi, z + radius)
        res = minimize(
            fg, z, jac=True, method="L-BFGS-B",
            bounds=list(zip(tlo, thi)),
            options={"maxiter": max(1, int(cfg.max_iter) - iters), "gtol": cfg.grad_tol,
                     "ftol": cfg.step_tol, "maxls": 40},
        )
        iters += int(res.nit)
        message = str(res.message)
        zn = np.minimum(np.maximum(res.x, tlo), thi)
        fn = fun(zn)
        improved = fn < f
        if fn <= f:
            z, f = zn, fn
        span = 1e-9 * np.maximum(1.0, np.abs(zn))
        at_edge = bool(np.any(((zn <= tlo + span) & (tlo > lo)) | ((zn >= thi - span) & (thi < hi))))
        if iters >= cfg.max_iter:
            break
        if at_edge and improved:
            continue
        g = _fd_gradient(fun, z, f, lo, hi)
        pg = _projected_norm(z, g, lo, hi)
        if not at_edge and (res.success or pg <= 1e-6 * max(1.0, abs(f))):
            # stalled line searches count when the gradient is at the difference noise floor
            converged = True
            break
        radius = radius / 4.0
        if radius[0] < 1e-8:
            break
    g = _fd_gradient(fun, z, f, lo, hi)
    pg = _projected_norm(z, g, lo, hi)
    if not converged and pg <= cfg.grad_tol:
        converged = True
    diag = OptimizeDiagnostics(converged=converged, iterations=iters, objective=f,
                               evaluations=nev[0], message=message, projected_gradient=pg)
    return MlfParams(float(z[0]), math.exp(z[1])), diag
