"""Exact samplers for the stationary laws and an empirical total-variation estimator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .errors import DimensionMismatch, NonDecaying, TooFewSamples, UnstableModel
from .model import ModelParams, alpha_tilde, compute_alphas


@dataclass(frozen=True)
class NuSpec:
    """Product of exponentials with the given rates."""

    rates: np.ndarray

    def __post_init__(self):
        rates = np.array(self.rates, dtype=float).reshape(-1)
        if not np.all(rates > 0):
            raise ValueError(f"rates must be positive, got {rates.tolist()}")
        object.__setattr__(self, "rates", rates)

    @classmethod
    def from_params(cls, params: ModelParams) -> "NuSpec":
        alpha, stable = compute_alphas(params)
        if not stable:
            raise UnstableModel(f"alpha = {alpha.tolist()} is not strictly positive")
        return cls(alpha_tilde(params, alpha))

    @property
    def dim(self) -> int:
        return len(self.rates)

    @property
    def mean(self) -> np.ndarray:
        return 1.0 / self.rates


def sample_nu(spec: NuSpec, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
    """One spacing vector, or ``size`` of them stacked as rows."""
    shape = spec.rates.shape if size is None else (size, spec.dim)
    return rng.exponential(1.0, size=shape) / spec.rates


def sample_ranked_weights_atlas(n: int, delta: float, rng: np.random.Generator,
                                size: Optional[int] = None) -> np.ndarray:
    """Ascending ranked market weights of the stationary Atlas model.

    Draws independent xi_i ~ Exp(2 delta (n - i) / n), i = 1..n-1, forms the
    partial sums eta_k = xi_1 + ... + xi_{k-1} (eta_1 = 0) and returns
    softmax(eta).
    """
    if n < 2 or not delta > 0:
        raise ValueError("need n >= 2 and delta > 0")
    rates = 2.0 * delta * (n - np.arange(1, n)) / n
    m = 1 if size is None else size
    xi = rng.exponential(1.0, size=(m, n - 1)) / rates
    eta = np.concatenate([np.zeros((m, 1)), np.cumsum(xi, axis=1)], axis=1)
    eta -= eta[:, -1:]
    w = np.exp(eta)
    w /= w.sum(axis=1, keepdims=True)
    return w[0] if size is None else w


@dataclass(frozen=True)
class QuantileGrid:
    """Per-coordinate box edges; the last box on each axis is unbounded."""

    edges: tuple

    @classmethod
    def for_nu(cls, spec: NuSpec, boxes_per_axis: int = 8) -> "QuantileGrid":
        q = np.arange(1, boxes_per_axis) / boxes_per_axis
        return cls(tuple(-np.log1p(-q) / r for r in spec.rates))

    @property
    def shape(self) -> tuple:
        return tuple(len(e) + 1 for e in self.edges)

    @property
    def n_boxes(self) -> int:
        return int(np.prod(self.shape))

    def frequencies(self, samples: np.ndarray) -> np.ndarray:
        samples = np.atleast_2d(samples)
        idx = [np.searchsorted(e, samples[:, j], side="right") for j, e in enumerate(self.edges)]
        flat = np.ravel_multi_index(idx, self.shape)
        return np.bincount(flat, minlength=self.n_boxes) / len(samples)

    def nu_probabilities(self, spec: NuSpec) -> np.ndarray:
        probs = None
        for e, r in zip(self.edges, spec.rates):
            cdf = np.concatenate([[0.0], -np.expm1(-r * e), [1.0]])
            p = np.diff(cdf)
            probs = p if probs is None else np.multiply.outer(probs, p)
        return probs.reshape(-1)


def tv_distance(p: np.ndarray, q: np.ndarray) -> float:
    """Half the L1 distance between two probability vectors."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def empirical_tv_to_nu(samples: np.ndarray, spec: NuSpec,
                       grid: Optional[QuantileGrid] = None) -> float:
    """Total-variation distance between the binned sample law and ``nu`` on ``grid``."""
    grid = grid or QuantileGrid.for_nu(spec)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0 or len(np.atleast_2d(samples)) < 10 * grid.n_boxes:
        raise TooFewSamples(f"need at least {10 * grid.n_boxes} samples for {grid.n_boxes} boxes")
    if np.atleast_2d(samples).shape[1] != spec.dim:
        raise DimensionMismatch("sample dimension does not match nu")
    return tv_distance(grid.frequencies(samples), grid.nu_probabilities(spec))


@dataclass(frozen=True)
class TvSeries:
    times: np.ndarray
    tv: np.ndarray
    grid: Optional[QuantileGrid] = None

    def to_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, ["t", "tv"], np.column_stack([self.times, self.tv]))


@dataclass(frozen=True)
class GeometricFit:
    M: float
    zeta: float
    r2: float


def fit_geometric_rate(series: TvSeries) -> GeometricFit:
    """Least-squares fit of ``log tv = log M + t log zeta``."""
    t = np.asarray(series.times, dtype=float)
    tv = np.asarray(series.tv, dtype=float)
    keep = tv > 0
    if keep.sum() < 4:
        raise ValueError("need at least 4 positive TV values to fit a rate")
    fit = stats.linregress(t[keep], np.log(tv[keep]))
    zeta = float(np.exp(fit.slope))
    if zeta >= 1:
        raise NonDecaying(f"fitted zeta = {zeta} >= 1")
    return GeometricFit(float(np.exp(fit.intercept)), zeta, float(fit.rvalue**2))


def tv_decay_series(params: ModelParams, y0: Sequence[float], times: Sequence[float],
                    n_paths: int, dt: float = 1e-2, seed: int = 0,
                    boxes_per_axis: int = 8, workers: Optional[int] = None) -> TvSeries:
    """Empirical TV distance to ``nu`` of the spacings started from ``y0``."""
    from .sde import SimConfig, Snapshots, monte_carlo

    spec = NuSpec.from_params(params)
    grid = QuantileGrid.for_nu(spec, boxes_per_axis)
    x0 = np.concatenate([[0.0], np.cumsum(np.asarray(y0, dtype=float))])
    if len(x0) != params.n:
        raise DimensionMismatch("y0 must have n - 1 entries")
    config = SimConfig(dt=dt, horizon=max(times), seed=seed)
    snaps = monte_carlo(params, config, n_paths, Snapshots(list(times)), workers=workers, x0=x0)
    tv = [empirical_tv_to_nu(snaps.values[:, i, :], spec, grid) for i in range(len(times))]
    return TvSeries(np.asarray(times, dtype=float), np.asarray(tv), grid)
