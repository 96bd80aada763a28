"""Explicit concentration bounds for additive functionals of the spacings.

All evaluators share one exponent,

    c2 = max( r^2 / range^2,
              4 eps (eps + s2) (sqrt(1 + r^2 / (2 eps (eps + s2)^2 u_inf^2)) - 1) ),

and the bound ``chi2norm * exp(-(t / rate) * c2)``.  ``rate`` is the Poincare
type constant: beta for the spacings, C_P for the centered particle system.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from .errors import InvalidQuery, ParseError, UnstableModel
from .model import ModelParams, centered_poincare_constant, compute_alphas, validate

EPS_GRID = (1e-6, 1e3, 64)


@dataclass(frozen=True)
class TailBoundQuery:
    t: float
    r: float
    eps: Optional[float]
    sigma2: float
    u_inf: float
    u_range: float
    rate: float
    chi2norm: float = 1.0

    def check(self, need_eps: bool = True) -> "TailBoundQuery":
        for name in ("t", "r", "u_inf", "u_range", "rate"):
            if not getattr(self, name) > 0:
                raise InvalidQuery(f"{name} must be positive, got {getattr(self, name)}")
        if need_eps and not (self.eps is not None and self.eps > 0):
            raise InvalidQuery(f"eps must be positive, got {self.eps}")
        if not self.sigma2 >= 0:
            raise InvalidQuery(f"sigma2 must be nonnegative, got {self.sigma2}")
        if self.u_range > 2 * self.u_inf * (1 + 1e-12):
            raise InvalidQuery("u_range cannot exceed 2 * u_inf")
        if not self.chi2norm >= 1:
            raise InvalidQuery(f"chi2norm must be >= 1, got {self.chi2norm}")
        return self

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, obj: dict) -> "TailBoundQuery":
        required = ("t", "r", "sigma2", "u_inf", "u_range", "rate")
        missing = [k for k in required if obj.get(k) is None]
        if missing:
            raise ParseError(f"query lacks {', '.join(missing)}")
        try:
            vals = {k: float(obj[k]) for k in required}
            eps = obj.get("eps")
            vals["eps"] = None if eps is None else float(eps)
            vals["chi2norm"] = float(obj.get("chi2norm", 1.0))
        except (TypeError, ValueError) as exc:
            raise ParseError(f"query fields must be numbers ({exc})") from None
        return cls(**vals)


class BoundValue(NamedTuple):
    bound: float
    raw: float


def _gaussian_branch(r, u_range):
    return r * r / (u_range * u_range)


def _eps_branch(r, eps, s2, u_inf):
    a = eps * (eps + s2)
    x = r * r / (2.0 * a * (eps + s2) * u_inf * u_inf)
    # sqrt(1 + x) - 1 without cancellation for small x
    return 4.0 * a * x / (np.sqrt(1.0 + x) + 1.0)


def exponent(q: TailBoundQuery) -> float:
    """The ``c2`` exponent shared by the bounds."""
    q.check()
    return float(max(_gaussian_branch(q.r, q.u_range), _eps_branch(q.r, q.eps, q.sigma2, q.u_inf)))


def theorem1_bound(q: TailBoundQuery) -> BoundValue:
    """Tail bound on P(time average of u >= r); the clamped value and the raw one."""
    raw = q.chi2norm * np.exp(-(q.t / q.rate) * exponent(q))
    return BoundValue(float(min(max(raw, 0.0), 1.0)), float(raw))


class EpsOptimum(NamedTuple):
    eps: float
    bound: float
    raw: float


def optimize_epsilon(q: TailBoundQuery, grid=EPS_GRID) -> EpsOptimum:
    """Minimize the bound over the free parameter eps.

    Only the eps-branch of the exponent depends on eps; it is maximized by a
    log-spaced grid scan followed by golden-section refinement in log eps
    around the best grid point.
    """
    lo, hi, points = grid
    if not (0 < lo < hi) or points < 3:
        raise InvalidQuery("eps grid must satisfy 0 < eps_min < eps_max with >= 3 points")
    q.check(need_eps=False)

    def neg_branch(log_eps):
        return -_eps_branch(q.r, np.exp(log_eps), q.sigma2, q.u_inf)

    logs = np.linspace(np.log(lo), np.log(hi), int(points))
    vals = np.array([neg_branch(v) for v in logs])
    i = int(np.argmin(vals))
    best_log = logs[i]
    if 0 < i < len(logs) - 1:
        res = optimize.minimize_scalar(neg_branch, bracket=(logs[i - 1], logs[i], logs[i + 1]),
                                       method="golden", options={"xtol": 1e-10})
        if res.fun <= vals[i]:
            best_log = float(res.x)
    eps = float(np.exp(best_log))
    val = theorem1_bound(replace(q, eps=eps))
    return EpsOptimum(eps, val.bound, val.raw)


def product_exponential_chi2norm(start_rates, nu_rates) -> float:
    """L2(nu) norm of d(kappa)/d(nu) for two product-exponential laws.

    Finite only when every ``start_rate > nu_rate / 2``.
    """
    rho = np.asarray(start_rates, dtype=float)
    a = np.asarray(nu_rates, dtype=float)
    if np.any(rho <= a / 2):
        raise InvalidQuery("chi2 norm is infinite unless start rates exceed half the nu rates")
    return float(np.prod(rho / np.sqrt(a * (2 * rho - a))))


class Corollary1(NamedTuple):
    c1_plus: float
    c1_minus: float
    c2: float
    upper_bound: float


def corollary1_bounds(r: float, t: float, nu_u_mean: float, q: TailBoundQuery) -> Corollary1:
    """Multiplicative thresholds and tail bound for the portfolio-to-market value ratio.

    ``q.rate`` plays the role of beta; ``q.r`` and ``q.t`` are overridden by
    ``r`` and ``t``.
    """
    q = replace(q, r=r, t=t)
    c2 = exponent(q)
    # thresholds beyond the float range are reported as inf
    with np.errstate(over="ignore"):
        return Corollary1(
            float(np.exp((r + nu_u_mean) * t)),
            float(np.exp((r - nu_u_mean) * t)),
            c2,
            float(q.chi2norm * np.exp(-t * c2 / q.rate)),
        )


def occupation_query(params: ModelParams, t: float, r: float, eps: Optional[float] = None,
                     chi2norm: float = 1.0) -> TailBoundQuery:
    """Query for u = 1{x_i = x_(j)} - 1/n under the centered system's stationary law."""
    validate(params)
    n = params.n
    return TailBoundQuery(t=t, r=r, eps=eps, sigma2=(n - 1) / n**2, u_inf=1 - 1 / n,
                          u_range=1.0, rate=centered_poincare_constant(params), chi2norm=chi2norm)


def occupation_bound(n: int, params: ModelParams, t: float, r: float,
                     eps: Optional[float] = None, chi2norm: float = 1.0) -> BoundValue:
    """Bound on P(occupation fraction of a (coordinate, rank) pair - 1/n >= r).

    ``eps=None`` optimizes eps.
    """
    if params.n != n:
        raise InvalidQuery(f"n={n} does not match params.n={params.n}")
    centered_poincare_constant(params)  # DegenerateDrift takes precedence
    _, stable = compute_alphas(params)
    if not stable:
        raise UnstableModel("occupation bound needs a stable model")
    q = occupation_query(params, t, r, eps, chi2norm)
    if eps is None:
        opt = optimize_epsilon(q)
        return BoundValue(opt.bound, opt.raw)
    return theorem1_bound(q)


@dataclass(frozen=True)
class TailRow:
    r: float
    empirical: float
    bound: float
    violation: bool


def empirical_tail_compare(values: Sequence[float], r_grid: Sequence[float],
                           template: TailBoundQuery) -> list:
    """Empirical frequency of {value >= r} against the eps-optimized bound, per r.

    A row is a violation when the frequency exceeds the bound by more than
    three binomial standard errors evaluated at the bound.
    """
    values = np.asarray(values, dtype=float)
    m = len(values)
    rows = []
    for r in r_grid:
        freq = float(np.mean(values >= r))
        bound = optimize_epsilon(replace(template, r=float(r))).bound
        se = np.sqrt(bound * (1 - bound) / m)
        rows.append(TailRow(float(r), freq, bound, bool(bound < 1 and freq > bound + 3 * se)))
    return rows


def write_comparison_csv(path, rows: Sequence[TailRow]) -> None:
    from .io import write_csv

    write_csv(path, ["r", "empirical", "bound", "violation"],
              [[row.r, row.empirical, row.bound, int(row.violation)] for row in rows],
              int_cols={3})


def variance_scaling_check(params: Optional[ModelParams], u: Optional[Callable],
                           t_grid: Sequence[float], n_paths: int, dt: float = 1e-2,
                           seed: int = 0, mode: str = "simulate",
                           workers: Optional[int] = None) -> float:
    """Slope of log Var(time average of u) against log t.

    ``mode="simulate"`` runs independent stationary ensembles of the particle
    system for each t; ``mode="white_noise"`` replaces u(Y) with i.i.d.
    standard normals per step, for which the slope is -1.
    """
    t_grid = [float(t) for t in t_grid]
    if len(t_grid) < 3:
        raise ValueError("the log-log fit needs at least 3 values of t")
    variances = []
    for j, t in enumerate(t_grid):
        if mode == "white_noise":
            rng = np.random.default_rng([seed, j])
            steps = int(round(t / dt))
            avgs = rng.standard_normal((n_paths, steps)).mean(axis=1)
        elif mode == "simulate":
            from .sde import SimConfig, TimeAverage, monte_carlo

            cfg = SimConfig(dt=dt, horizon=t, seed=seed + j, initial_state="sample_from_nu")
            avgs = monte_carlo(params, cfg, n_paths, TimeAverage(u, 0.0, t), workers=workers).values
        else:
            raise ValueError(f"unknown mode {mode!r}")
        variances.append(np.var(avgs, ddof=1))
    return float(stats.linregress(np.log(t_grid), np.log(variances)).slope)
