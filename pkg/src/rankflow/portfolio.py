"""Functionally generated portfolios in the rank-based market S_i = exp(X_i).

Generating functions act on market-weight vectors of shape (..., n) and
return values, gradients (..., n) and Hessians (..., n, n).  The drift
process is

    g(mu) = -1/(2 G(mu)) sum_ij D_ij G(mu) mu_i mu_j tau_ij(mu),
    tau_ij = sum_k (delta_ik - mu_k)(delta_jk - mu_k),

which for permutation-invariant G is a function ``u_tilde`` of the spacings.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import mpmath
import numpy as np
from scipy.special import logsumexp, softmax

from .errors import InvalidQuery, OffSimplex
from .model import ModelParams, validate

SIMPLEX_TOL = 1e-10


def check_simplex(x, tol: float = SIMPLEX_TOL) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0) or np.any(np.abs(x.sum(axis=-1) - 1.0) > tol):
        raise OffSimplex("weights must be strictly positive and sum to one")
    return x


def relative_covariance(mu: np.ndarray) -> np.ndarray:
    """tau_ij = delta_ij - mu_i - mu_j + sum_k mu_k^2 (unit volatilities)."""
    mu = np.asarray(mu, dtype=float)
    n = mu.shape[-1]
    s2 = np.sum(mu * mu, axis=-1)[..., None, None]
    return np.eye(n) - mu[..., :, None] - mu[..., None, :] + s2


class GeneratingFunction:
    """Base class; subclasses provide value, gradient, hessian and u_tilde."""

    name = "generic"

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def u_tilde(self, m):
        """Drift as a closed-form function of the ranked weights ``m``."""
        return drift_hessian_form(self, m)

    def to_dict(self) -> dict:
        return {"kind": self.name}


@dataclass(frozen=True)
class Diversity(GeneratingFunction):
    p: float
    name = "diversity"

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"diversity needs 0 < p < 1, got {self.p}")

    def value(self, x):
        return np.sum(np.asarray(x) ** self.p, axis=-1) ** (1 / self.p)

    def gradient(self, x):
        x = np.asarray(x)
        s = np.sum(x**self.p, axis=-1)[..., None]
        return s ** (1 / self.p - 1) * x ** (self.p - 1)

    def hessian(self, x):
        x = np.asarray(x)
        p = self.p
        s = np.sum(x**p, axis=-1)[..., None, None]
        xp1 = x ** (p - 1)
        outer = (1 - p) * s ** (1 / p - 2) * xp1[..., :, None] * xp1[..., None, :]
        diag = (p - 1) * s[..., 0] ** (1 / p - 1) * x ** (p - 2)
        return outer + _diag(diag)

    def u_tilde(self, m):
        m = np.asarray(m)
        sp = np.sum(m**self.p, axis=-1)
        s2p = np.sum(m ** (2 * self.p), axis=-1)
        return 0.5 * (1 - self.p) * (1 - s2p / sp**2)

    def to_dict(self):
        return {"kind": self.name, "p": self.p}


@dataclass(frozen=True)
class QuadraticGini(GeneratingFunction):
    name = "gini"

    def value(self, x):
        x = np.asarray(x)
        n = x.shape[-1]
        return 1 - 0.5 * np.sum((x - 1 / n) ** 2, axis=-1)

    def gradient(self, x):
        x = np.asarray(x)
        return -(x - 1 / x.shape[-1])

    def hessian(self, x):
        x = np.asarray(x)
        n = x.shape[-1]
        return np.broadcast_to(-np.eye(n), x.shape + (n,)).copy()

    def u_tilde(self, m):
        m = np.asarray(m)
        s2 = np.sum(m**2, axis=-1)
        s3 = np.sum(m**3, axis=-1)
        return (s2 - 2 * s3 + s2**2) / (2 * self.value(m))


@dataclass(frozen=True)
class RenyiEntropy(GeneratingFunction):
    """(1 - p)^{-1} log sum x^p; the drift has a removable singularity at the vertices."""

    p: float
    name = "renyi"
    # below this distance of sum x^p from 1 the drift is evaluated in extended precision
    vertex_tol = 1e-8

    def __post_init__(self):
        if self.p == 1 or not self.p > 0:
            raise ValueError(f"Renyi entropy needs p > 0, p != 1, got {self.p}")

    def value(self, x):
        return np.log(np.sum(np.asarray(x) ** self.p, axis=-1)) / (1 - self.p)

    def gradient(self, x):
        x = np.asarray(x)
        s = np.sum(x**self.p, axis=-1)[..., None]
        return self.p * x ** (self.p - 1) / ((1 - self.p) * s)

    def hessian(self, x):
        x = np.asarray(x)
        p = self.p
        s = np.sum(x**p, axis=-1)[..., None, None]
        xp1 = x ** (p - 1)
        outer = p**2 / (p - 1) * xp1[..., :, None] * xp1[..., None, :] / s**2
        return outer - _diag(p * x ** (p - 2) / s[..., 0])

    def _closed_form(self, m, lib=np):
        p = self.p
        sp = sum(v**p for v in m) if lib is mpmath else np.sum(m**p, axis=-1)
        if lib is mpmath:
            s2p = sum(v ** (2 * p) for v in m)
            sp1 = sum(v ** (p + 1) for v in m)
            s2 = sum(v**2 for v in m)
        else:
            s2p = np.sum(m ** (2 * p), axis=-1)
            sp1 = np.sum(m ** (p + 1), axis=-1)
            s2 = np.sum(m**2, axis=-1)
        bracket = 1 - p + p * s2p / sp**2 - 2 * sp1 / sp + s2
        return p / (2 * lib.log(sp)) * bracket

    def u_tilde(self, m):
        m = np.asarray(m, dtype=float)
        out = np.asarray(self._closed_form(m), dtype=float)
        near = np.abs(np.sum(m**self.p, axis=-1) - 1) < self.vertex_tol
        if np.any(near):
            flat_m = m.reshape(-1, m.shape[-1])
            flat_out = out.reshape(-1).copy()
            for i in np.flatnonzero(np.reshape(near, -1)):
                flat_out[i] = self._near_vertex(flat_m[i])
            out = flat_out.reshape(out.shape)
        return out

    def _near_vertex(self, m):
        # the largest weight is rebuilt as 1 - (sum of the others) so the
        # cancellation in sum m^p - 1 is resolved at 60 digits
        with mpmath.workdps(60):
            j = int(np.argmax(m))
            rest = [mpmath.mpf(float(v)) for i, v in enumerate(m) if i != j]
            full = rest + [1 - mpmath.fsum(rest)]
            return float(self._closed_form(full, lib=mpmath))

    def to_dict(self):
        return {"kind": self.name, "p": self.p}


@dataclass(frozen=True)
class Entropy(GeneratingFunction):
    name = "entropy"

    def value(self, x):
        x = np.asarray(x)
        return -np.sum(x * np.log(x), axis=-1)

    def gradient(self, x):
        return -(np.log(np.asarray(x)) + 1)

    def hessian(self, x):
        return _diag(-1 / np.asarray(x))

    def u_tilde(self, m):
        m = np.asarray(m, dtype=float)
        return np.sum(m * _complement(m), axis=-1) / (2 * self.value(m))


@dataclass(frozen=True)
class EqualWeight(GeneratingFunction):
    name = "equal"

    def value(self, x):
        return np.exp(np.mean(np.log(np.asarray(x)), axis=-1))

    def gradient(self, x):
        x = np.asarray(x)
        return self.value(x)[..., None] / (x.shape[-1] * x)

    def hessian(self, x):
        x = np.asarray(x)
        n = x.shape[-1]
        g = self.value(x)[..., None, None]
        return g / (n * x[..., :, None] * x[..., None, :]) * (1 / n - np.eye(n))

    def u_tilde(self, m):
        m = np.asarray(m)
        n = m.shape[-1]
        return np.full(m.shape[:-1], (n - 1) / (2 * n))


def _diag(v):
    v = np.asarray(v)
    out = np.zeros(v.shape + (v.shape[-1],))
    idx = np.arange(v.shape[-1])
    out[..., idx, idx] = v
    return out


def _complement(m):
    """1 - m_i, with the largest entry's complement summed from the others."""
    m = np.asarray(m, dtype=float)
    out = 1.0 - m
    j = np.argmax(m, axis=-1)[..., None]
    mask = np.ones(m.shape, dtype=bool)
    np.put_along_axis(mask, j, False, axis=-1)
    rest = np.sum(np.where(mask, m, 0.0), axis=-1, keepdims=True)
    np.put_along_axis(out, j, rest, axis=-1)
    return out


def generating_function(kind: str, p: Optional[float] = None) -> GeneratingFunction:
    kind = kind.lower()
    if kind == "diversity":
        return Diversity(0.5 if p is None else p)
    if kind in ("gini", "quadraticgini", "quadratic_gini"):
        return QuadraticGini()
    if kind == "renyi":
        return RenyiEntropy(0.5 if p is None else p)
    if kind == "entropy":
        return Entropy()
    if kind in ("equal", "equalweight", "equal_weight"):
        return EqualWeight()
    raise ValueError(f"unknown generating function {kind!r}")


def g_value(G: GeneratingFunction, x):
    return G.value(check_simplex(x))


def g_gradient(G: GeneratingFunction, x):
    return G.gradient(check_simplex(x))


def g_hessian(G: GeneratingFunction, x):
    return G.hessian(check_simplex(x))


def fgp_weights(G: GeneratingFunction, mu) -> np.ndarray:
    """pi_i = (D_i log G + 1 - sum_j mu_j D_j log G) mu_i."""
    mu = check_simplex(mu)
    dlog = G.gradient(mu) / G.value(mu)[..., None]
    centered = dlog + 1 - np.sum(mu * dlog, axis=-1, keepdims=True)
    return centered * mu


def drift_hessian_form(G: GeneratingFunction, mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    w = G.hessian(mu) * mu[..., :, None] * mu[..., None, :] * relative_covariance(mu)
    return -np.sum(w, axis=(-2, -1)) / (2 * G.value(mu))


def drift_g(G: GeneratingFunction, mu) -> np.ndarray:
    """Drift process evaluated at market weights ``mu`` (unit volatilities)."""
    mu = check_simplex(mu)
    if isinstance(G, RenyiEntropy):
        # the Hessian form loses all digits where G -> 0; u_tilde is permutation invariant
        near = np.abs(np.sum(mu**G.p, axis=-1) - 1) < G.vertex_tol
        if np.any(near):
            return G.u_tilde(mu)
    return drift_hessian_form(G, mu)


def ranked_weights(y) -> np.ndarray:
    """Ascending market weights M(y) from a spacing vector (log-domain evaluation)."""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise ValueError("spacings must be nonnegative")
    levels = np.concatenate([np.zeros(y.shape[:-1] + (1,)), np.cumsum(y, axis=-1)], axis=-1)
    return softmax(levels, axis=-1)


def log_ranked_weights(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    levels = np.concatenate([np.zeros(y.shape[:-1] + (1,)), np.cumsum(y, axis=-1)], axis=-1)
    return levels - logsumexp(levels, axis=-1, keepdims=True)


def drift_u_tilde(G: GeneratingFunction, y) -> np.ndarray:
    """Drift as a function of the spacings via the ranked weights."""
    return G.u_tilde(ranked_weights(y))


def drift_ranges(G: GeneratingFunction, n: int) -> tuple[float, float]:
    """Substitutes for (||u||_inf, range of u) built from the known drift ranges."""
    if isinstance(G, Diversity):
        top = (n - 1) * (1 - G.p) / (2 * n)
        return top, 2 * top
    if isinstance(G, QuadraticGini):
        c = (1 - 1 / n) ** 2
        return 2 / (2 - c), 2 / (1 - 0.5 * c)
    raise InvalidQuery(f"no closed-form drift range for {G.name}")


class MasterDecomposition(NamedTuple):
    lhs: float
    g_term: float
    drift_integral: float
    residual: float


def _check_unit_sigma(params: ModelParams):
    validate(params)
    if not np.all(params.sigma == 1.0):
        raise ValueError("portfolio analysis assumes unit volatilities")


def relative_value_batch(params: ModelParams, G: GeneratingFunction, dt: float, n_steps: int,
                         generators, x0: np.ndarray) -> np.ndarray:
    """Master-formula terms for a batch of paths; returns an array (P, 4).

    Wealth is compounded per step, V <- V (1 + sum_i pi_i dS_i / S_i), with
    weights fixed at the start of the step; the drift integral uses the
    trapezoidal rule.
    """
    from .sde import euler_maruyama, market_weights

    _check_unit_sigma(params)
    log_vp = log_vm = integral = 0.0
    prev_x = prev_g = prev_mu = prev_pi = mu0 = None
    for k, x in euler_maruyama(params, x0, dt, n_steps, generators):
        mu = market_weights(x)
        g = drift_g(G, mu)
        if k == 0:
            mu0 = mu
        else:
            ret = np.expm1(x - prev_x)
            log_vp = log_vp + np.log1p(np.sum(prev_pi * ret, axis=-1))
            log_vm = log_vm + np.log1p(np.sum(prev_mu * ret, axis=-1))
            integral = integral + 0.5 * dt * (prev_g + g)
        prev_x, prev_g, prev_mu, prev_pi = x, g, mu, fgp_weights(G, mu)
    lhs = log_vp - log_vm
    g_term = np.log(G.value(prev_mu)) - np.log(G.value(mu0))
    return np.column_stack([lhs, g_term, integral, lhs - g_term - integral])


def simulate_relative_value(params: ModelParams, G: GeneratingFunction, config,
                            path_index: int = 0) -> MasterDecomposition:
    """Check the master formula along one simulated path."""
    from .sde import _initial_states, path_generator

    gens = [path_generator(config.seed, path_index)]
    x0 = _initial_states(params, config, gens)
    row = relative_value_batch(params, G, config.dt, config.n_steps, gens, x0)[0]
    return MasterDecomposition(*map(float, row))


def master_formula_table(params: ModelParams, G: GeneratingFunction, horizon: float,
                         dts, seeds, initial_state="sample_from_nu") -> list:
    """Rows (seed, dt, lhs, g_term, drift_integral, residual) for every (dt, seed).

    Each row equals ``simulate_relative_value`` for that seed; seeds are
    batched for speed.
    """
    from .sde import SimConfig, _initial_states, path_generator

    rows = []
    for dt in dts:
        cfg = SimConfig(dt=dt, horizon=horizon, initial_state=initial_state)
        gens = [path_generator(s, 0) for s in seeds]
        x0 = _initial_states(params, cfg, gens)
        out = relative_value_batch(params, G, dt, cfg.n_steps, gens, x0)
        rows.extend((int(s), float(dt), *map(float, r)) for s, r in zip(seeds, out))
    return rows


def nu_mean_of_drift(G: GeneratingFunction, params: ModelParams, n_samples: int,
                     rng: Optional[np.random.Generator] = None) -> tuple[float, float]:
    """Monte Carlo estimate and standard error of the stationary mean of u_tilde."""
    from .equilibrium import NuSpec, sample_nu

    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    spec = NuSpec.from_params(params)
    rng = rng or np.random.default_rng(0)
    vals = drift_u_tilde(G, sample_nu(spec, rng, size=n_samples))
    se = float(np.std(vals, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else 0.0
    return float(np.mean(vals)), se
