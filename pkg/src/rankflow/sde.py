"""Euler-Maruyama simulation of the rank-based particle system.

Every path owns an independent PCG64 stream derived from ``(seed, path_index)``,
so an ensemble gives the same numbers however its paths are batched or
scheduled.  Spacings are derived from sorted positions, never simulated.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import softmax

from .errors import EmptyWindow, UnstableModel
from .model import ModelParams, alpha_tilde, compute_alphas, validate

GENERATOR_ID = f"numpy.random.PCG64+SeedSequence(seed, spawn_key=(path,)) numpy-{np.__version__}"

# Upper bound on buffered normals per batch (float64 entries).
_NOISE_BUDGET = 1 << 21


def path_generator(seed: int, index: int = 0) -> np.random.Generator:
    """Independent generator for path ``index`` of the run seeded with ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: float
    seed: int = 0
    record_stride: int = 1
    initial_state: Union[Sequence[float], str, None] = None

    def __post_init__(self):
        if not (self.dt > 0 and self.horizon > 0):
            raise ValueError("dt and horizon must be positive")
        if not self.dt < self.horizon:
            raise ValueError(f"dt={self.dt} must be smaller than horizon={self.horizon}")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        init = self.initial_state
        if isinstance(init, str):
            if init != "sample_from_nu":
                raise ValueError(f"unknown initial_state token {init!r}")
        elif init is not None:
            object.__setattr__(self, "initial_state", tuple(float(v) for v in init))

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def to_dict(self) -> dict:
        init = self.initial_state
        return {
            "dt": self.dt,
            "horizon": self.horizon,
            "seed": int(self.seed),
            "record_stride": int(self.record_stride),
            "initial_state": list(init) if isinstance(init, tuple) else init,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "SimConfig":
        return cls(
            dt=float(obj["dt"]),
            horizon=float(obj["horizon"]),
            seed=int(obj.get("seed", 0)),
            record_stride=int(obj.get("record_stride", 1)),
            initial_state=obj.get("initial_state"),
        )


def ranks_of(x: np.ndarray) -> np.ndarray:
    """Zero-based ascending ranks along the last axis; ties go to the lower index."""
    x = np.asarray(x)
    order = np.argsort(x, axis=-1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(x.shape[-1]), x.shape), axis=-1)
    return ranks


def spacings(x: np.ndarray) -> np.ndarray:
    return np.diff(np.sort(x, axis=-1), axis=-1)


def market_weights(x: np.ndarray) -> np.ndarray:
    return softmax(x, axis=-1)


def step(state, dt: float, noise, params: ModelParams) -> np.ndarray:
    """One Euler-Maruyama step; works on a single state or a batch of states."""
    x = np.asarray(state, dtype=float)
    rk = ranks_of(x)
    return x + params.delta[rk] * dt + params.sigma[rk] * np.sqrt(dt) * np.asarray(noise)


def euler_maruyama(params: ModelParams, x0: np.ndarray, dt: float, n_steps: int,
                   generators: Sequence[np.random.Generator]):
    """Yield ``(k, x_k)`` for k = 0..n_steps for a batch of paths.

    ``x0`` has shape (P, n) and ``generators[p]`` drives path p.  Yielded
    arrays are fresh and never modified afterwards.
    """
    x = np.array(x0, dtype=float)
    n_paths, n = x.shape
    chunk = max(1, min(n_steps, _NOISE_BUDGET // (n_paths * n)))
    sqdt = np.sqrt(dt)
    delta, sigma = params.delta, params.sigma
    yield 0, x
    k = 0
    while k < n_steps:
        c = min(chunk, n_steps - k)
        noise = np.stack([g.standard_normal((c, n)) for g in generators], axis=1)
        for j in range(c):
            rk = ranks_of(x)
            x = x + delta[rk] * dt + sigma[rk] * sqdt * noise[j]
            k += 1
            yield k, x


def sample_start_from_nu(params: ModelParams, rng: np.random.Generator) -> np.ndarray:
    """Positions whose spacings follow the product-exponential law, labels shuffled."""
    alpha, stable = compute_alphas(params)
    if not stable:
        raise UnstableModel("sample_from_nu needs a stable model")
    y = rng.exponential(1.0 / alpha_tilde(params, alpha))
    ordered = np.concatenate([[0.0], np.cumsum(y)])
    ordered -= ordered.mean()
    return ordered[rng.permutation(params.n)]


def _initial_states(params, config, gens, x0=None):
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.ndim == 1:
            x0 = np.broadcast_to(x0, (len(gens), params.n))
        return np.array(x0)
    init = config.initial_state
    if init is None:
        return np.zeros((len(gens), params.n))
    if isinstance(init, str):
        return np.stack([sample_start_from_nu(params, g) for g in gens])
    if len(init) != params.n:
        raise ValueError(f"initial_state has {len(init)} entries, expected {params.n}")
    return np.tile(np.asarray(init, dtype=float), (len(gens), 1))


@dataclass(frozen=True)
class Trajectory:
    """Recorded path; ``ranks`` are one-based."""

    times: np.ndarray
    x: np.ndarray
    ranks: np.ndarray
    y: np.ndarray
    mu: np.ndarray

    @classmethod
    def from_positions(cls, times, x) -> "Trajectory":
        x = np.asarray(x, dtype=float)
        return cls(np.asarray(times, dtype=float), x, ranks_of(x) + 1, spacings(x), market_weights(x))

    @property
    def n(self) -> int:
        return self.x.shape[1]

    def to_csv(self, path) -> None:
        from .io import write_csv

        n = self.n
        header = (["t"] + [f"x_{i}" for i in range(1, n + 1)]
                  + [f"rank_{i}" for i in range(1, n + 1)]
                  + [f"y_{i}" for i in range(1, n)] + [f"mu_{i}" for i in range(1, n + 1)])
        rows = np.column_stack([self.times, self.x, self.ranks, self.y, self.mu])
        int_cols = set(range(1 + n, 1 + 2 * n))
        write_csv(path, header, rows, int_cols=int_cols)


def simulate_path(params: ModelParams, config: SimConfig, path_index: int = 0,
                  x0: Optional[np.ndarray] = None) -> Trajectory:
    """Simulate one path and record every ``record_stride``-th step (step 0 included)."""
    validate(params)
    gens = [path_generator(config.seed, path_index)]
    start = _initial_states(params, config, gens, x0)
    n_steps, stride = config.n_steps, int(config.record_stride)
    n_rec = n_steps // stride + 1
    xs = np.empty((n_rec, params.n))
    for k, x in euler_maruyama(params, start, config.dt, n_steps, gens):
        if k % stride == 0:
            xs[k // stride] = x[0]
    times = np.arange(n_rec) * stride * config.dt
    return Trajectory.from_positions(times, xs)


def additive_functional(traj: Trajectory, u: Callable, t0: float, t1: float) -> float:
    """Time average of ``u(Y)`` over [t0, t1] for the piecewise-constant path.

    The path is held at its left endpoint between recorded times, so this is
    the left-endpoint Riemann sum divided by ``t1 - t0``.
    """
    if not t1 > t0:
        raise EmptyWindow(f"empty window [{t0}, {t1}]")
    t = traj.times
    if t0 < t[0] or t1 > t[-1] + 1e-12 * max(1.0, abs(t[-1])):
        raise EmptyWindow(f"window [{t0}, {t1}] outside recorded range [{t[0]}, {t[-1]}]")
    right = np.append(t[1:], np.inf)
    w = np.clip(np.minimum(right, t1) - np.maximum(t, t0), 0.0, None)
    keep = w > 0
    vals = np.asarray(u(traj.y[keep]), dtype=float)
    # anchored at the first value so a constant integrand is returned exactly
    return float(vals[0] + np.dot(w[keep], vals - vals[0]) / (t1 - t0))


@dataclass(frozen=True)
class OccupationTally:
    counts: np.ndarray
    total: int

    @property
    def fractions(self) -> np.ndarray:
        return self.counts / self.total


def occupation_fractions(traj: Trajectory) -> OccupationTally:
    n = traj.n
    counts = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        counts[i] = np.bincount(traj.ranks[:, i] - 1, minlength=n)
    return OccupationTally(counts, int(len(traj.times)))


# --- ensemble machinery -------------------------------------------------------


class Reducer:
    """Per-path statistic accumulated while a batch of paths is stepped.

    Subclasses implement ``init`` (fresh state for a batch), ``update``
    (called for every step k, including k = 0) and ``result`` (array whose
    first axis indexes paths).
    """

    def init(self, n_paths: int, n: int, dt: float, n_steps: int):
        raise NotImplementedError

    def update(self, state, k: int, x: np.ndarray):
        raise NotImplementedError

    def result(self, state) -> np.ndarray:
        raise NotImplementedError


def _window_steps(t0, t1, dt, n_steps):
    k0, k1 = int(round(t0 / dt)), int(round(t1 / dt))
    if k1 <= k0:
        raise EmptyWindow(f"empty window [{t0}, {t1}]")
    if k0 < 0 or k1 > n_steps:
        raise EmptyWindow(f"window [{t0}, {t1}] outside [0, {n_steps * dt}]")
    return k0, k1


@dataclass
class TimeAverage(Reducer):
    """Left-endpoint time average of ``u(spacings)`` over [t0, t1]."""

    u: Callable
    t0: float
    t1: float

    def init(self, n_paths, n, dt, n_steps):
        k0, k1 = _window_steps(self.t0, self.t1, dt, n_steps)
        return {"k0": k0, "k1": k1, "acc": None}

    def update(self, st, k, x):
        if st["k0"] <= k < st["k1"]:
            v = np.asarray(self.u(spacings(x)), dtype=float)
            st["acc"] = v if st["acc"] is None else st["acc"] + v

    def result(self, st):
        return st["acc"] / (st["k1"] - st["k0"])


@dataclass
class FinalValue(Reducer):
    """``f(x)`` at the last step; ``f`` maps a (P, n) batch of positions."""

    f: Callable

    def init(self, n_paths, n, dt, n_steps):
        return {"last": n_steps, "val": None}

    def update(self, st, k, x):
        if k == st["last"]:
            st["val"] = np.asarray(self.f(x), dtype=float)

    def result(self, st):
        return st["val"]


@dataclass
class Snapshots(Reducer):
    """``f(x)`` at each of ``times``; result has shape (P, len(times), ...)."""

    times: Sequence[float]
    f: Callable = spacings

    def init(self, n_paths, n, dt, n_steps):
        ks = [int(round(t / dt)) for t in self.times]
        if any(k < 0 or k > n_steps for k in ks):
            raise EmptyWindow("snapshot time outside simulated range")
        return {"ks": ks, "vals": {}}

    def update(self, st, k, x):
        if k in st["ks"]:
            st["vals"][k] = np.asarray(self.f(x), dtype=float)

    def result(self, st):
        return np.stack([st["vals"][k] for k in st["ks"]], axis=1)


@dataclass
class RankOccupation(Reducer):
    """Counts of steps in [t0, t1) at which coordinate i holds rank j, per path."""

    t0: float
    t1: float

    def init(self, n_paths, n, dt, n_steps):
        k0, k1 = _window_steps(self.t0, self.t1, dt, n_steps)
        return {"k0": k0, "k1": k1, "counts": np.zeros((n_paths, n, n), dtype=np.int64)}

    def update(self, st, k, x):
        if st["k0"] <= k < st["k1"]:
            rk = ranks_of(x)
            p, n = rk.shape
            st["counts"][np.arange(p)[:, None], np.arange(n)[None, :], rk] += 1

    def result(self, st):
        return st["counts"]


@dataclass
class Combined(Reducer):
    """Run several reducers in one pass; result is a tuple."""

    parts: Sequence[Reducer] = field(default_factory=list)

    def init(self, *args):
        return [r.init(*args) for r in self.parts]

    def update(self, st, k, x):
        for r, s in zip(self.parts, st):
            r.update(s, k, x)

    def result(self, st):
        return tuple(r.result(s) for r, s in zip(self.parts, st))


@dataclass(frozen=True)
class MonteCarloResult:
    values: np.ndarray
    mean: np.ndarray
    se: np.ndarray


def default_workers() -> int:
    env = os.environ.get("RANKFLOW_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_batch(params: ModelParams, config: SimConfig, indices: Sequence[int], reducer: Reducer,
              x0: Optional[np.ndarray] = None):
    gens = [path_generator(config.seed, i) for i in indices]
    start = _initial_states(params, config, gens, x0)
    n_steps = config.n_steps
    st = reducer.init(len(indices), params.n, config.dt, n_steps)
    for k, x in euler_maruyama(params, start, config.dt, n_steps, gens):
        reducer.update(st, k, x)
    return reducer.result(st)


def _summarize(values: np.ndarray) -> MonteCarloResult:
    values = np.asarray(values, dtype=float)
    mean = values.mean(axis=0)
    if len(values) > 1:
        se = values.std(axis=0, ddof=1) / np.sqrt(len(values))
    else:
        se = np.zeros_like(mean)
    return MonteCarloResult(values, mean, se)


def _rows(x0, block):
    if x0 is None or x0.ndim == 1:
        return x0
    return x0[block.start:block.stop]


def monte_carlo(params: ModelParams, config: SimConfig, n_paths: int, reducer: Reducer,
                workers: Optional[int] = None, batch_size: int = 4096,
                x0: Optional[np.ndarray] = None):
    """Ensemble of ``n_paths`` paths reduced path-by-path.

    Paths are split into index-ordered batches which may run on several
    threads; results are concatenated in path order, so the output does not
    depend on ``workers`` or ``batch_size``.  Returns a ``MonteCarloResult``,
    or a tuple of them when ``reducer`` is ``Combined``.
    """
    validate(params)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    workers = workers or default_workers()
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
    blocks = [range(s, min(s + batch_size, n_paths)) for s in range(0, n_paths, batch_size)]
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda b: run_batch(params, config, b, reducer, _rows(x0, b)),
                                  blocks))
    else:
        parts = [run_batch(params, config, b, reducer, _rows(x0, b)) for b in blocks]
    if isinstance(reducer, Combined):
        return tuple(_summarize(np.concatenate([p[i] for p in parts]))
                     for i in range(len(reducer.parts)))
    return _summarize(np.concatenate(parts))
