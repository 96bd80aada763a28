"""Moments of the stationary ranked market weights of the Atlas model.

The Laplace transform tau(theta) = E exp(-theta / mu_(k)) is evaluated by
nested quadrature:

    tau(theta) = e^{-theta} phi(theta)^{n-k} E[psi(theta, B)^{k-1}],
    B ~ Beta(n - k + 1, k),

and moments follow from E mu_(k)^r = 1/(r-1)! int_0^inf theta^{r-1} tau(theta) dtheta.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import integrate, special

from .equilibrium import sample_ranked_weights_atlas
from .errors import QuadratureNotConverged

PSI_NODES = 128
TAIL_TOL = 1e-8
MOMENT_RTOL = 1e-6


@dataclass(frozen=True)
class AtlasSpec:
    n: int
    k: int
    delta: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if not 1 <= self.k <= self.n:
            raise ValueError(f"k must lie in 1..{self.n}, got {self.k}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    @property
    def alpha(self) -> float:
        return 2.0 * self.delta / self.n


def phi_alpha(theta: float, alpha: float) -> float:
    """E exp(-theta e^W) for W ~ Exp(alpha), as int_1^inf alpha u^{-alpha-1} e^{-theta u} du."""
    if theta < 0 or not alpha > 0:
        raise ValueError("need theta >= 0 and alpha > 0")
    if theta == 0:
        return 1.0
    val, _ = integrate.quad(lambda u: alpha * u ** (-alpha - 1) * math.exp(-theta * u),
                            1.0, np.inf, epsabs=1e-10, epsrel=1e-10, limit=200)
    return float(val)


@lru_cache(maxsize=None)
def _legendre(m: int):
    x, w = np.polynomial.legendre.leggauss(m)
    return 0.5 * (x + 1), 0.5 * w


def psi(theta: float, b, alpha: float, nodes: int = PSI_NODES):
    """int_0^1 exp(-theta (b / ((1-b) v + b))^{1/alpha}) dv, vectorized over ``b``.

    The integrand rises monotonically from e^{-theta} at v=0 towards 1 with a
    boundary layer of width ~b, so the rule is applied after the substitution
    s = -log((1-b) v + b), which spreads the layer over [0, -log b]:

        psi = 1/(1-b) int_0^{-log b} exp(-theta b^{1/alpha} e^{s/alpha}) e^{-s} ds.
    """
    b = np.asarray(b, dtype=float)
    if np.any((b <= 0) | (b >= 1)):
        raise ValueError("b must lie in (0, 1)")
    x, w = _legendre(nodes)
    length = -np.log(b)[..., None]
    s = length * x
    # exponent computed in log space so small b does not underflow b^{1/alpha}
    expo = np.exp((np.log(b)[..., None] + s) / alpha)
    f = np.exp(-theta * expo - s)
    val = length[..., 0] * np.sum(w * f, axis=-1) / (1 - b)
    return val


def _beta_expectation(theta: float, spec: AtlasSpec) -> float:
    k, n = spec.k, spec.n
    if k == 1:
        return 1.0
    a = spec.alpha

    def f(b):
        # limits of psi at the ends, which the weighted rule may sample
        if b <= 0.0:
            return 1.0
        if b >= 1.0:
            return math.exp(-theta * (k - 1))
        p = psi(theta, b, a)
        return math.exp((k - 1) * math.log(p)) if p > 0 else 0.0

    # Beta(n-k+1, k) density via the algebraic weight (b)^{n-k} (1-b)^{k-1}
    val, _ = integrate.quad(f, 0.0, 1.0, weight="alg", wvar=(n - k, k - 1),
                            epsabs=1e-8, limit=200)
    return float(val / special.beta(n - k + 1, k))


def tau(theta: float, spec: AtlasSpec) -> float:
    """Laplace transform E exp(-theta / mu_(k)) of the k-th smallest weight."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if theta == 0:
        return 1.0
    phi_part = phi_alpha(theta, spec.alpha) ** (spec.n - spec.k) if spec.k < spec.n else 1.0
    return float(math.exp(-theta) * phi_part * _beta_expectation(theta, spec))


def tail_cutoff(r: int, tol: float = TAIL_TOL) -> float:
    """Smallest Theta with Gamma(r, Theta)/(r-1)! < tol; tau <= e^{-theta} bounds the tail."""
    hi = 1.0
    while special.gammaincc(r, hi) >= tol:
        hi *= 2
    lo = 0.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if special.gammaincc(r, mid) >= tol else (lo, mid)
    return hi


def moment(spec: AtlasSpec, r: int, rtol: float = MOMENT_RTOL) -> float:
    """E[mu_(k)^r] for the stationary Atlas model."""
    if int(r) != r or r < 1:
        raise ValueError(f"r must be a positive integer, got {r}")
    r = int(r)
    cut = tail_cutoff(r)
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(lambda t: t ** (r - 1) * tau(t, spec), 0.0, cut,
                                      epsabs=1e-10, epsrel=rtol / 10, limit=200)
        except integrate.IntegrationWarning as exc:
            raise QuadratureNotConverged(f"{spec}, r={r}: {exc}") from None
    val /= math.factorial(r - 1)
    err /= math.factorial(r - 1)
    if err > rtol * abs(val) + TAIL_TOL:
        raise QuadratureNotConverged(f"{spec}, r={r}: estimate {val}, error {err}")
    return float(val)


def mc_oracle_moment(spec: AtlasSpec, r: int, n_draws: int,
                     rng: Optional[np.random.Generator] = None,
                     chunk: int = 250_000) -> tuple[float, float]:
    """Plain Monte Carlo of E[mu_(k)^r] with the exact ranked-weight sampler."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    rng = rng or np.random.default_rng(0)
    total = total_sq = 0.0
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        v = sample_ranked_weights_atlas(spec.n, spec.delta, rng, size=m)[:, spec.k - 1] ** r
        total += v.sum()
        total_sq += (v * v).sum()
        done += m
    mean = total / n_draws
    var = max(total_sq / n_draws - mean * mean, 0.0) * n_draws / max(n_draws - 1, 1)
    return float(mean), float(math.sqrt(var / n_draws))


def moment_table(n: int, delta: float, ks, rs, n_draws: int = 0, seed: int = 0) -> list:
    """Rows (n, k, delta, r, quadrature, mc, mc_se); mc columns are nan when n_draws=0."""
    rows = []
    for k in ks:
        spec = AtlasSpec(n, int(k), delta)
        for r in rs:
            q = moment(spec, int(r))
            if n_draws > 0:
                mc, se = mc_oracle_moment(spec, int(r), n_draws, np.random.default_rng([seed, k, r]))
            else:
                mc, se = float("nan"), float("nan")
            rows.append((n, int(k), float(delta), int(r), q, mc, se))
    return rows
