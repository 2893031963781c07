"""Command-line entry point.

Every subcommand reads an optional JSON config, overlays it on built-in
defaults, validates everything, then writes CSV/JSON into the output
directory. Output directory precedence: ``--out``, then ``PSO_ESCAPE_OUT_DIR``,
then ``./results``.

Exit codes: 0 success, 1 invalid input, 2 a checked threshold failed, 3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path
from typing import Any, Iterable

import numpy as np
from scipy import stats

from .bounds import OscillationWindow, escape_bounds, step1_bounds, step2_bounds, step3_bounds
from .chains import build_step1_chain, build_step2_chain, build_step3_chain, perturb_chain, verify_chain
from .errors import PsoEscapeError
from .experiments import (
    InitialDistribution,
    estimate_escape_curve,
    pe_table,
    position_distribution,
    rastrigin,
    run_full_pso,
    stagnation_report,
)
from .fuzz import fuzz_origin, fuzz_params, fuzz_state
from .kernel import d0, velocity_support
from .model import AgentState, GoalRegion, SwarmParams, sample_velocities

OUT_ENV = "PSO_ESCAPE_OUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_THRESHOLD, EXIT_IO = 0, 1, 2, 3

WORKED_PARAMS = {"omega": 1.0, "c1": 2.0, "c2": 2.0, "lb": 0.0, "ub": 20.0, "pb": 3.0, "gb": 4.0}

DEFAULTS: dict[str, dict[str, Any]] = {
    "kernel-check": {"omega": 1.0, "n_configs": 20, "n_samples": 1_000_000, "grid_points": 2001,
                     "ks_threshold": 0.005, "norm_tolerance": 1e-9},
    "bounds": {"params": WORKED_PARAMS, "goal": [19.0, 20.0], "window": [1 / 40, 1 / 20]},
    "chain-verify": {"n_chains": 1000, "fault_factor": None},
    "escape-curve": {
        "n_runs": 10_000, "max_iters": 1000,
        "curves": [{"label": "c2_gb4", "params": WORKED_PARAMS, "goal": [19.0, 20.0],
                    "init": {"x": [0.0, 2.0], "v": [-1.0, 1.0]}}],
    },
    "pe-table": {"omegas": [0.9, 0.8, 0.7], "cs": [2.4, 2.0, 1.6], "ubs": [20, 22, 24, 26, 28, 30],
                 "n_runs": 1000, "iter_cap": 100_000, "full_n_runs": 10_000, "full_iter_cap": 10_000_000,
                 "lb": 0.0, "pb": 3.0, "gb": 4.0, "goal_width": 1.0,
                 "init": {"x": [0.0, 2.0], "v": [-1.0, 1.0]}},
    "distribution": {"params": {"omega": 1.0, "c1": 2.0, "c2": 2.0, "lb": 0.0, "ub": 9.0, "pb": 0.5, "gb": 2.0},
                     "initial": [1.0, 0.5], "goal": [8.5, 9.0], "t_max": 20, "n_runs": 1_000_000, "n_bins": 90},
    "rastrigin-demo": {"n_runs": 50, "n_agents": 5, "dims": 2, "t_max": 200, "bounds": [-5.0, 5.0],
                       "omega": 0.729, "c1": 1.494, "c2": 1.494, "tolerance": 0.1, "min_plateau": 10},
}


class ConfigError(PsoEscapeError, ValueError):
    pass


# --------------------------------------------------------------------------
# config helpers


def load_config(command: str, path: str | None) -> dict:
    cfg = json.loads(json.dumps(DEFAULTS[command]))
    if path:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(user) - set(cfg) - {"seed"}
        if unknown:
            raise ConfigError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(user)
    return cfg


def _params(d: dict) -> SwarmParams:
    try:
        return SwarmParams(**{k: float(d[k]) for k in ("omega", "c1", "c2", "lb", "ub", "pb", "gb")})
    except KeyError as exc:
        raise ConfigError(f"params missing field {exc}") from exc


def _goal(pair, params: SwarmParams) -> GoalRegion:
    return GoalRegion(float(pair[0]), float(pair[1])).check(params)


def _init(d: dict, params: SwarmParams) -> InitialDistribution:
    return InitialDistribution(tuple(map(float, d["x"])), tuple(map(float, d["v"]))).check(params)


def _positive_int(cfg: dict, key: str) -> int:
    value = cfg[key]
    if not isinstance(value, int) or value < 1:
        raise ConfigError(f"{key} must be a positive integer, got {value!r}")
    return value


def _fmt(x: Any) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path: Path, header: list[str], rows: Iterable[Iterable[Any]]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


# --------------------------------------------------------------------------
# subcommands


def cmd_kernel_check(cfg: dict, args) -> int:
    n_cfg = _positive_int(cfg, "n_configs")
    n_samp = _positive_int(cfg, "n_samples")
    omega = float(cfg["omega"])
    gen = np.random.default_rng(args.seed)
    rows, ok = [], True
    for i in range(n_cfg):
        params = fuzz_params(gen, omega=omega)
        state = fuzz_state(gen, params)
        law = velocity_support(state, params)
        # midpoint rule between breakpoints is exact for a piecewise-linear density
        grid = np.union1d(np.linspace(law.vf1, law.vf4, cfg["grid_points"]), law.knots)
        mids = 0.5 * (grid[:-1] + grid[1:])
        norm_err = abs(float(np.sum(law.pdf(mids) * np.diff(grid))) - 1.0)
        draws = sample_velocities(state, params, gen, n_samp)
        ks = stats.kstest(draws, law.cdf).statistic
        width_margin = law.width - d0(params)
        inside_margin = min(state.v - law.vf1, law.vf4 - state.v)
        good = (norm_err <= cfg["norm_tolerance"] and ks <= cfg["ks_threshold"]
                and width_margin >= -1e-12 and inside_margin >= -1e-12)
        ok &= good
        rows.append([i, params.c1, params.c2, params.lb, params.ub, params.pb, params.gb,
                     state.x, state.v, norm_err, ks, width_margin, inside_margin, int(good)])
    write_csv(args.out_dir / "kernel_check.csv",
              ["config", "c1", "c2", "lb", "ub", "pb", "gb", "x", "v", "norm_error",
               "ks_stat", "width_margin", "inside_margin", "pass"], rows)
    print(f"kernel-check: {sum(r[-1] for r in rows)}/{n_cfg} configurations within thresholds")
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_bounds(cfg: dict, args) -> int:
    params = _params(cfg["params"])
    goal = _goal(cfg["goal"], params)
    window = OscillationWindow(*map(float, cfg["window"]))
    result = escape_bounds(params, goal, window).to_dict()
    text = json.dumps(result, indent=2)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    (args.out_dir / "bounds.json").write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_chain_verify(cfg: dict, args) -> int:
    n = _positive_int(cfg, "n_chains")
    factor = cfg.get("fault_factor")
    if args.fault is not None:
        factor = args.fault
    gen = np.random.default_rng(args.seed)
    rows, all_ok = [], True
    for step in (1, 2, 3):
        passed = capped = 0
        worst = math.inf
        for _ in range(n):
            params = fuzz_params(gen, omega=1.0)
            origin = fuzz_origin(gen, params, step)
            if step == 1:
                chain, cap = build_step1_chain(origin.state, params), step1_bounds(params)[0]
            elif step == 2:
                chain, cap = build_step2_chain(origin.state, params), step2_bounds(params)[0]
            else:
                chain = build_step3_chain(params.ub, origin.state, params, origin.goal)
                cap = step3_bounds(params, origin.goal)[0]
            if factor:
                chain = perturb_chain(chain, float(factor))
            rep = verify_chain(chain, params)
            passed += rep.feasible
            capped += len(chain) <= cap
            worst = min(worst, rep.worst_slack / params.width)
        all_ok &= passed == n and capped == n
        rows.append([step, n, passed, capped, worst])
        print(f"step {step}: {passed}/{n} feasible, {capped}/{n} within cap, worst relative slack {worst:.3e}")
    write_csv(args.out_dir / "chain_verify.csv",
              ["step", "n_chains", "n_feasible", "n_within_cap", "worst_relative_slack"], rows)
    return EXIT_OK if all_ok else EXIT_THRESHOLD


def cmd_escape_curve(cfg: dict, args) -> int:
    n_runs = _positive_int(cfg, "n_runs")
    max_iters = _positive_int(cfg, "max_iters")
    curves = []
    for spec in cfg["curves"]:
        params = _params(spec["params"])
        curves.append((str(spec["label"]), params, _goal(spec["goal"], params), _init(spec["init"], params)))
    for label, params, goal, init in curves:
        curve = estimate_escape_curve(params, goal, init, n_runs, max_iters, args.seed, args.jobs)
        write_csv(args.out_dir / f"escape_curve_{label}.csv", ["t", "prob", "stderr"], curve.rows())
        print(f"{label}: P(T <= {max_iters}) = {curve.probs[-1]:.4f} +- {curve.stderr[-1]:.4f}")
    return EXIT_OK


def cmd_pe_table(cfg: dict, args) -> int:
    n_runs = cfg["full_n_runs"] if args.full else cfg["n_runs"]
    iter_cap = cfg["full_iter_cap"] if args.full else cfg["iter_cap"]
    init = None
    for w in cfg["omegas"]:
        for c in cfg["cs"]:
            for u in cfg["ubs"]:
                params = SwarmParams(w, c, c, cfg["lb"], u, cfg["pb"], cfg["gb"])
                _goal([u - cfg["goal_width"], u], params)
                init = _init(cfg["init"], params)
    if init is None:
        raise ConfigError("omegas, cs and ubs must all be nonempty")
    rows = pe_table(cfg["omegas"], cfg["cs"], cfg["ubs"], n_runs=n_runs, iter_cap=iter_cap,
                    seed=args.seed, lb=cfg["lb"], pb=cfg["pb"], gb=cfg["gb"],
                    goal_width=cfg["goal_width"], init=init, jobs=args.jobs)
    keys = ["omega", "c", "ub", "pe_hat", "stderr", "n_runs", "iter_cap"]
    write_csv(args.out_dir / "pe_table.csv", keys, ([r[k] for k in keys] for r in rows))
    width = len(cfg["ubs"])
    print("omega  c     " + "  ".join(f"[{u - cfg['goal_width']:g},{u:g}]" for u in cfg["ubs"]))
    for i in range(0, len(rows), width):
        chunk = rows[i:i + width]
        print(f"{chunk[0]['omega']:<6} {chunk[0]['c']:<5} " + "  ".join(f"{r['pe_hat']:.2f}" for r in chunk))
    return EXIT_OK


def cmd_distribution(cfg: dict, args) -> int:
    params = _params(cfg["params"])
    initial = AgentState(*map(float, cfg["initial"])).check(params)
    goal = _goal(cfg["goal"], params)
    hists = position_distribution(params, initial, goal, _positive_int(cfg, "t_max"),
                                  _positive_int(cfg, "n_runs"), _positive_int(cfg, "n_bins"),
                                  args.seed, args.jobs)
    write_csv(args.out_dir / "histogram.csv", ["t", "bin_lo", "bin_hi", "mass"],
              ([h.t, float(lo), float(hi), float(m)]
               for h in hists for lo, hi, m in zip(h.bin_edges[:-1], h.bin_edges[1:], h.masses)))
    write_csv(args.out_dir / "atoms.csv", ["t", "atom_lb", "atom_ub", "goal_mass"],
              ([h.t, h.atom_lb, h.atom_ub, h.goal_mass] for h in hists))
    print(f"distribution: {len(hists)} histograms written")
    return EXIT_OK


def cmd_rastrigin(cfg: dict, args) -> int:
    lo, hi = map(float, cfg["bounds"])
    rows = []
    for run in range(_positive_int(cfg, "n_runs")):
        hist = run_full_pso(rastrigin, [lo] * cfg["dims"], [hi] * cfg["dims"], cfg["n_agents"],
                            cfg["dims"], cfg["t_max"], cfg["omega"], cfg["c1"], cfg["c2"],
                            seed=args.seed + run)
        report = stagnation_report(hist, cfg["tolerance"])
        stagnated = all(any(b - a + 1 >= cfg["min_plateau"] for a, b in r["intervals"]) for r in report)
        rows.append([run, hist.final_gbest, int(hist.final_gbest < 1.0), int(stagnated)])
    write_csv(args.out_dir / "rastrigin.csv", ["run", "final_gbest", "below_one", "all_stagnated"], rows)
    n = len(rows)
    print(f"rastrigin-demo: {sum(r[2] for r in rows)}/{n} runs reach gbest < 1, "
          f"{sum(r[3] for r in rows)}/{n} runs stagnate in every agent-dimension")
    return EXIT_OK


COMMANDS = {
    "kernel-check": cmd_kernel_check,
    "bounds": cmd_bounds,
    "chain-verify": cmd_chain_verify,
    "escape-curve": cmd_escape_curve,
    "pe-table": cmd_pe_table,
    "distribution": cmd_distribution,
    "rastrigin-demo": cmd_rastrigin,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pso-escape", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file overriding the built-in defaults")
        p.add_argument("--seed", type=int, default=None, help="master seed (default: config or 0)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--full", action="store_true", help="full-scale run counts (pe-table)")
        p.add_argument("--jobs", type=int, default=1, help="worker processes for replications")
        if name == "chain-verify":
            p.add_argument("--fault", type=float, default=None,
                           help="widen every chain interval by this factor before verifying")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.command, args.config)
        if args.seed is None:
            args.seed = int(cfg.get("seed", 0))
        if args.jobs < 1:
            raise ConfigError("--jobs must be at least 1")
        args.out_dir = Path(args.out or os.environ.get(OUT_ENV) or "results")
        return COMMANDS[args.command](cfg, args)
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except (PsoEscapeError, ValueError, KeyError, TypeError) as exc:
        payload = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(payload), file=sys.stderr)
        if args.command == "bounds":
            print(json.dumps(payload))
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
