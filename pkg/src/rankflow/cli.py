"""Command-line experiment runner.

Every subcommand writes its outputs under ``--out`` together with a
``<name>.manifest.json`` recording the resolved inputs; ``rankflow replay``
re-runs a manifest and reproduces the CSV outputs byte for byte.

Exit codes:
    0  success
    1  unexpected internal error
    2  command-line usage error
    3  ParseError (malformed JSON or missing fields)
    4  model errors (invalid, unstable or degenerate parameters, dimension mismatch)
    5  domain errors (invalid query, eps out of range, too few samples, empty window, ...)
    6  numerical failures (singular matrix, factorization, quadrature, non-decaying fit)
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from . import errors as E
from .io import RunManifest, dump_json, load_json, write_csv, write_json
from .model import ModelParams, derive, skew_symmetry_residual
from .sde import GENERATOR_ID

EXIT_CODES = [
    (E.ParseError, 3),
    (E.ModelError, 4),
    (E.DimensionMismatch, 4),
    (E.FactorizationFailure, 6),
    (E.SingularR, 6),
    (E.QuadratureNotConverged, 6),
    (E.NonDecaying, 6),
    (E.RankflowError, 5),
    (ValueError, 5),
]


def exit_code_for(exc: BaseException) -> int:
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def floats(text: str) -> list:
    return [float(v) for v in text.split(",") if v.strip()]


def ints(text: str) -> list:
    out = []
    for part in text.split(","):
        if "-" in part.strip()[1:]:
            lo, hi = part.split("-")
            out.extend(range(int(lo), int(hi) + 1))
        elif part.strip():
            out.append(int(part))
    return out


def params_from(obj) -> ModelParams:
    try:
        return ModelParams.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise E.ParseError(f"params must be an object with n, delta, sigma ({exc})") from None


# Each runner takes the resolved argument dict and the output directory and
# returns the list of files it wrote (relative to the directory).

def run_constants(a: dict, out: Path) -> list:
    params = params_from(a["params"])
    d = derive(params).to_dict()
    d["skew_residual"] = skew_symmetry_residual(params).residual
    d["n"] = params.n
    text = dump_json(d)
    sys.stdout.write(text)
    (out / "constants.json").write_text(text, encoding="utf-8")
    return ["constants.json"]


def run_simulate(a: dict, out: Path) -> list:
    from .sde import SimConfig, simulate_path

    params = params_from(a["params"])
    cfg = SimConfig.from_dict(a["config"])
    simulate_path(params, cfg, path_index=a["path_index"]).to_csv(out / "trajectory.csv")
    return ["trajectory.csv"]


def run_stationary(a: dict, out: Path) -> list:
    from .equilibrium import NuSpec, fit_geometric_rate, sample_nu, tv_decay_series

    params = params_from(a["params"])
    files = []
    if a.get("nu_samples"):
        spec = NuSpec.from_params(params)
        ys = sample_nu(spec, np.random.default_rng(a["seed"]), size=a["nu_samples"])
        write_csv(out / "nu_samples.csv", [f"y_{i}" for i in range(1, spec.dim + 1)], ys)
        files.append("nu_samples.csv")
    if a.get("y0") is not None:
        series = tv_decay_series(params, a["y0"], a["times"], a["paths"], dt=a["dt"],
                                 seed=a["seed"], boxes_per_axis=a["boxes"])
        series.to_csv(out / "tv.csv")
        files.append("tv.csv")
        fit = fit_geometric_rate(series)
        write_json(out / "tv_fit.json", asdict(fit))
        files.append("tv_fit.json")
    return files


def run_bounds(a: dict, out: Path) -> list:
    from dataclasses import replace

    from .bounds import (TailBoundQuery, empirical_tail_compare, occupation_query,
                         optimize_epsilon, theorem1_bound, write_comparison_csv)

    files = []
    if a.get("query") is not None:
        q = TailBoundQuery.from_dict(a["query"])
        if a["optimize_eps"]:
            opt = optimize_epsilon(q)
            rows = [[opt.eps, opt.bound, opt.raw]]
        else:
            v = theorem1_bound(q)
            rows = [[q.eps, v.bound, v.raw]]
        write_csv(out / "bound.csv", ["eps", "bound", "raw"], rows)
        files.append("bound.csv")
    if a.get("occupation") is not None:
        from .sde import RankOccupation, SimConfig, monte_carlo

        occ = a["occupation"]
        params = params_from(a["params"])
        cfg = SimConfig(dt=occ["dt"], horizon=occ["t"], seed=occ["seed"],
                        initial_state="sample_from_nu")
        res = monte_carlo(params, cfg, occ["paths"], RankOccupation(0.0, occ["t"]))
        dev = res.values[:, 0, 0] / cfg.n_steps - 1.0 / params.n
        template = replace(occupation_query(params, occ["t"], 1.0), eps=None)
        rows = empirical_tail_compare(dev, occ["r_grid"], template)
        write_comparison_csv(out / "comparison.csv", rows)
        files.append("comparison.csv")
    if not files:
        raise E.InvalidQuery("bounds needs --query and/or --occupation-t")
    return files


def run_portfolio(a: dict, out: Path) -> list:
    from .portfolio import generating_function, master_formula_table

    params = params_from(a["params"])
    G = generating_function(a["kind"], a.get("p"))
    rows = master_formula_table(params, G, a["horizon"], a["dts"], a["seeds"],
                                initial_state=a["init"])
    write_csv(out / "master.csv", ["seed", "dt", "lhs", "g_term", "drift_integral", "residual"],
              rows, int_cols={0})
    return ["master.csv"]


def run_moments(a: dict, out: Path) -> list:
    from .atlas import moment_table

    rows = moment_table(a["n"], a["delta"], a["k"], a["r"], n_draws=a["mc_draws"], seed=a["seed"])
    write_csv(out / "moments.csv", ["n", "k", "delta", "r", "quadrature", "mc", "mc_se"], rows,
              int_cols={0, 1, 3})
    return ["moments.csv"]


def run_lyapunov(a: dict, out: Path) -> list:
    from .lyapunov import certificate_for, farkas_criterion
    from .model import reflection_matrix, spacings_drift

    params = ModelParams.atlas(a["n"], a["delta"])
    report = certificate_for(params, a["eps"]).to_dict()
    report["farkas"] = farkas_criterion(reflection_matrix(params.n), spacings_drift(params))
    text = dump_json(report)
    sys.stdout.write(text)
    (out / "certificate.json").write_text(text, encoding="utf-8")
    return ["certificate.json"]


RUNNERS = {
    "constants": run_constants,
    "simulate": run_simulate,
    "stationary": run_stationary,
    "bounds": run_bounds,
    "portfolio": run_portfolio,
    "moments": run_moments,
    "lyapunov": run_lyapunov,
}


def resolve(ns: argparse.Namespace) -> dict:
    """Turn parsed flags into a self-contained argument dict (files are inlined)."""
    c = ns.command
    if c in ("constants", "simulate", "stationary", "portfolio") or (
            c == "bounds" and ns.params is not None):
        params = load_json(ns.params)
        params_from(params)
    if c == "constants":
        return {"params": params}
    if c == "simulate":
        if ns.config:
            config = load_json(ns.config)
        else:
            init = ns.init
            if init is not None and init != "sample_from_nu":
                init = floats(init)
            config = {"dt": ns.dt, "horizon": ns.horizon, "seed": ns.seed,
                      "record_stride": ns.stride, "initial_state": init}
        return {"params": params, "config": config, "path_index": ns.path_index}
    if c == "stationary":
        return {"params": params, "y0": None if ns.y0 is None else floats(ns.y0),
                "times": floats(ns.times), "paths": ns.paths, "dt": ns.dt, "seed": ns.seed,
                "boxes": ns.boxes, "nu_samples": ns.nu_samples}
    if c == "bounds":
        occ = None
        if ns.occupation_t is not None:
            if ns.params is None:
                raise E.InvalidQuery("--occupation-t needs --params")
            occ = {"t": ns.occupation_t, "paths": ns.paths, "dt": ns.dt, "seed": ns.seed,
                   "r_grid": floats(ns.r_grid)}
        return {"query": None if ns.query is None else load_json(ns.query),
                "optimize_eps": ns.optimize_eps,
                "params": None if ns.params is None else params, "occupation": occ}
    if c == "portfolio":
        return {"params": params, "kind": ns.kind, "p": ns.p, "horizon": ns.horizon,
                "dts": floats(ns.dt), "seeds": ints(ns.seeds), "init": ns.init}
    if c == "moments":
        return {"n": ns.n, "k": ints(ns.k) if ns.k else list(range(1, ns.n + 1)),
                "delta": ns.delta, "r": ints(ns.r), "mc_draws": ns.mc_draws, "seed": ns.seed}
    if c == "lyapunov":
        return {"n": ns.n, "delta": ns.delta, "eps": ns.eps}
    raise AssertionError(c)


def execute(command: str, arguments: dict, out: Path) -> RunManifest:
    out.mkdir(parents=True, exist_ok=True)
    params = arguments.get("params")
    seed = arguments.get("seed", (arguments.get("config") or {}).get("seed"))
    manifest = RunManifest(command, arguments, seed, GENERATOR_ID, params, __version__)
    start = time.perf_counter()
    files = RUNNERS[command](arguments, out)
    manifest.duration_s = time.perf_counter() - start
    manifest.outputs = files
    for f in files:
        manifest.write_next_to(f, out)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rankflow", description="Rank-based diffusion experiments.",
                                formatter_class=argparse.RawDescriptionHelpFormatter,
                                epilog=__doc__.split("\n\n", 2)[2])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def cmd(name, help_text):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("--out", default=".", help="output directory (default: .)")
        return s

    s = cmd("constants", "derived constants of a model as JSON")
    s.add_argument("--params", required=True)

    s = cmd("simulate", "simulate one path and write trajectory.csv")
    s.add_argument("--params", required=True)
    s.add_argument("--config", help="SimConfig JSON; overrides the flags below")
    s.add_argument("--dt", type=float, default=1e-3)
    s.add_argument("--horizon", type=float, default=10.0)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--init", help="'sample_from_nu' or comma-separated positions")
    s.add_argument("--path-index", type=int, default=0)

    s = cmd("stationary", "stationary samples and TV-to-nu decay")
    s.add_argument("--params", required=True)
    s.add_argument("--nu-samples", type=int, default=0, help="write this many nu draws")
    s.add_argument("--y0", help="comma-separated starting spacings for the TV series")
    s.add_argument("--times", default="1,2,4,8,16")
    s.add_argument("--paths", type=int, default=10000)
    s.add_argument("--dt", type=float, default=1e-2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--boxes", type=int, default=8)

    s = cmd("bounds", "evaluate tail bounds or compare them with simulation")
    s.add_argument("--query", help="TailBoundQuery JSON")
    s.add_argument("--optimize-eps", action="store_true")
    s.add_argument("--params", help="model JSON for the occupation comparison")
    s.add_argument("--occupation-t", type=float, help="horizon of the occupation comparison")
    s.add_argument("--paths", type=int, default=1000)
    s.add_argument("--dt", type=float, default=1e-2)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--r-grid", default="0.05,0.1,0.15,0.2,0.25,0.3")

    s = cmd("portfolio", "master-formula decomposition of a generated portfolio")
    s.add_argument("--params", required=True)
    s.add_argument("--kind", default="entropy",
                   choices=["diversity", "gini", "renyi", "entropy", "equal"])
    s.add_argument("--p", type=float)
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--dt", default="4e-4,2e-4,1e-4", help="comma-separated step sizes")
    s.add_argument("--seeds", default="0-31", help="e.g. 0-31 or 1,5,9")
    s.add_argument("--init", default="sample_from_nu")

    s = cmd("moments", "Atlas ranked-weight moments by quadrature (and MC)")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--k", help="ranks, e.g. 2 or 1-5 (default: all)")
    s.add_argument("--delta", type=float, default=1.0)
    s.add_argument("--r", default="1")
    s.add_argument("--mc-draws", type=int, default=0)
    s.add_argument("--seed", type=int, default=0)

    s = cmd("lyapunov", "check the explicit linear Lyapunov certificate")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--delta", type=float, default=1.0)

    s = sub.add_parser("replay", help="re-run a manifest")
    s.add_argument("manifest")
    s.add_argument("--out", default=".")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        if ns.command == "replay":
            m = RunManifest.from_dict(load_json(ns.manifest))
            if m.command not in RUNNERS:
                raise E.ParseError(f"unknown command {m.command!r} in manifest")
            execute(m.command, m.arguments, Path(ns.out))
        else:
            execute(ns.command, resolve(ns), Path(ns.out))
    except Exception as exc:  # noqa: BLE001 - mapped to an exit code
        code = exit_code_for(exc)
        sys.stderr.write(f"rankflow: {type(exc).__name__}: {exc}\n")
        if code == 1:
            raise
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
