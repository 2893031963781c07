"""Monte Carlo experiments on the stagnated agent and a small full-swarm demo.

Replications are grouped in fixed-size blocks. Block ``k`` of a run with
master seed ``s`` draws from a Philox stream keyed by ``(s, k)``, so results
are identical whether the blocks run serially or across worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ValidationError
from .model import AgentState, GoalRegion, SwarmParams, Trajectory

__all__ = [
    "BLOCK_SIZE",
    "InitialDistribution",
    "EscapeCurve",
    "PositionHistogram",
    "BehaviorSegment",
    "block_generator",
    "simulate_hit_times",
    "estimate_escape_curve",
    "estimate_pe",
    "pe_table",
    "position_distribution",
    "segment_behavior",
    "rastrigin",
    "PsoHistory",
    "run_full_pso",
    "stagnation_report",
]

BLOCK_SIZE = 8192


def block_generator(seed: int, block: int) -> np.random.Generator:
    """Counter-based stream for one replication block."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


@dataclass(frozen=True)
class InitialDistribution:
    """Independent uniforms for ``x(0)`` and ``v(0)``; equal endpoints give a point."""

    x: tuple[float, float]
    v: tuple[float, float]

    def __post_init__(self) -> None:
        for name, (a, b) in (("x", self.x), ("v", self.v)):
            if not (math.isfinite(a) and math.isfinite(b) and a <= b):
                raise ValidationError(f"initial {name} range must satisfy a <= b, got ({a}, {b})")

    @classmethod
    def point(cls, state: AgentState) -> "InitialDistribution":
        return cls((state.x, state.x), (state.v, state.v))

    def check(self, params: SwarmParams) -> "InitialDistribution":
        if not (params.lb <= self.x[0] and self.x[1] <= params.ub):
            raise ValidationError(f"initial position range {self.x} leaves [{params.lb}, {params.ub}]")
        return self

    def sample(self, gen: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
        u = gen.random((2, n))
        x = self.x[0] + (self.x[1] - self.x[0]) * u[0]
        v = self.v[0] + (self.v[1] - self.v[0]) * u[1]
        return x, v


def _blocks(n_runs: int) -> list[tuple[int, int]]:
    return [(k, min(BLOCK_SIZE, n_runs - k * BLOCK_SIZE)) for k in range(-(-n_runs // BLOCK_SIZE))]


def _map(fn: Callable, tasks: Sequence[tuple], jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*tasks)))


def _hit_block(params: SwarmParams, goal: GoalRegion, init: InitialDistribution,
               n: int, max_iters: int, seed: int, block: int) -> np.ndarray:
    gen = block_generator(seed, block)
    x, v = init.sample(gen, n)
    hits = np.where(goal.contains(x), 0, -1)
    w, c1, c2, pb, gb, lb, ub = (params.omega, params.c1, params.c2, params.pb,
                                 params.gb, params.lb, params.ub)
    lo, hi = goal.l_g, goal.u_g
    for t in range(1, max_iters + 1):
        if not (hits < 0).any():
            break
        r = gen.random((2, n))
        v = w * v + c1 * r[0] * (pb - x) + c2 * r[1] * (gb - x)
        x = np.minimum(np.maximum(x + v, lb), ub)
        new = (hits < 0) & (x >= lo) & (x <= hi)
        hits[new] = t
    return hits


def simulate_hit_times(params: SwarmParams, goal: GoalRegion, init: InitialDistribution,
                       n_runs: int, max_iters: int, seed: int, jobs: int = 1) -> np.ndarray:
    """First hitting time per replication; ``-1`` when the goal is not reached."""
    if n_runs < 1 or max_iters < 0:
        raise ValidationError("need n_runs >= 1 and max_iters >= 0")
    goal.check(params)
    init.check(params)
    tasks = [(params, goal, init, n, max_iters, seed, k) for k, n in _blocks(n_runs)]
    return np.concatenate(_map(_hit_block, tasks, jobs))


@dataclass
class EscapeCurve:
    t_values: np.ndarray
    probs: np.ndarray
    n_runs: int
    config: dict
    stderr: np.ndarray

    def rows(self):
        return zip(self.t_values.tolist(), self.probs.tolist(), self.stderr.tolist())


def _binomial_stderr(p, n: int):
    return np.sqrt(p * (1.0 - p) / n)


def estimate_escape_curve(params: SwarmParams, goal: GoalRegion, init: InitialDistribution,
                          n_runs: int, max_iters: int, seed: int, jobs: int = 1) -> EscapeCurve:
    """Empirical ``P{T <= t}`` for ``t = 0..max_iters``."""
    hits = simulate_hit_times(params, goal, init, n_runs, max_iters, seed, jobs)
    counts = np.bincount(hits[hits >= 0], minlength=max_iters + 1)
    probs = np.cumsum(counts) / n_runs
    return EscapeCurve(
        t_values=np.arange(max_iters + 1),
        probs=probs,
        n_runs=n_runs,
        config={"params": params, "goal": goal, "init": init, "seed": seed},
        stderr=_binomial_stderr(probs, n_runs),
    )


def estimate_pe(params: SwarmParams, goal: GoalRegion, init: InitialDistribution,
                n_runs: int, iter_cap: int, seed: int, jobs: int = 1) -> tuple[float, float]:
    """Fraction of runs escaping within ``iter_cap`` steps, with its binomial stderr.

    A finite cap can only undercount escapes, so this estimate is biased low
    relative to the long-run escape probability.
    """
    if iter_cap < 1:
        raise ValidationError("iter_cap must be at least 1")
    hits = simulate_hit_times(params, goal, init, n_runs, iter_cap, seed, jobs)
    pe = float(np.mean(hits >= 0))
    return pe, float(_binomial_stderr(pe, n_runs))


def pe_table(omegas: Sequence[float], cs: Sequence[float], ubs: Sequence[float], *,
             n_runs: int, iter_cap: int, seed: int, lb: float = 0.0, pb: float = 3.0,
             gb: float = 4.0, goal_width: float = 1.0,
             init: InitialDistribution = InitialDistribution((0.0, 2.0), (-1.0, 1.0)),
             jobs: int = 1) -> list[dict]:
    """Sweep ``omega x c x ub`` with the goal at ``[ub - goal_width, ub]``."""
    rows = []
    for i, w in enumerate(omegas):
        for j, c in enumerate(cs):
            for k, ub in enumerate(ubs):
                params = SwarmParams(w, c, c, lb, ub, pb, gb)
                goal = GoalRegion(ub - goal_width, ub)
                cell_seed = int(np.random.SeedSequence(seed, spawn_key=(i, j, k)).generate_state(1)[0])
                pe, se = estimate_pe(params, goal, init, n_runs, iter_cap, cell_seed, jobs)
                rows.append({"omega": w, "c": c, "ub": ub, "pe_hat": pe, "stderr": se,
                             "n_runs": n_runs, "iter_cap": iter_cap})
    return rows


@dataclass
class PositionHistogram:
    t: int
    bin_edges: np.ndarray
    masses: np.ndarray
    atom_lb: float
    atom_ub: float
    goal_mass: float


def _hist_block(params: SwarmParams, goal: GoalRegion, init: InitialDistribution, t_max: int,
                n: int, edges: np.ndarray, seed: int, block: int):
    gen = block_generator(seed, block)
    x, v = init.sample(gen, n)
    nb = len(edges) - 1
    counts = np.zeros((t_max + 1, nb), dtype=np.int64)
    atoms = np.zeros((t_max + 1, 3), dtype=np.int64)
    for t in range(t_max + 1):
        if t:
            r = gen.random((2, n))
            v = params.omega * v + params.c1 * r[0] * (params.pb - x) + params.c2 * r[1] * (params.gb - x)
            x = np.minimum(np.maximum(x + v, params.lb), params.ub)
        at_lb = x == params.lb
        at_ub = x == params.ub
        inner = x[~(at_lb | at_ub)]
        idx = np.minimum(np.searchsorted(edges, inner, side="right") - 1, nb - 1)
        counts[t] = np.bincount(idx, minlength=nb)
        atoms[t] = (at_lb.sum(), at_ub.sum(), goal.contains(x).sum())
    return counts, atoms


def position_distribution(params: SwarmParams, initial: AgentState | InitialDistribution,
                          goal: GoalRegion, t_max: int, n_runs: int, n_bins: int, seed: int,
                          jobs: int = 1) -> list[PositionHistogram]:
    """Per-iteration histogram of ``x(t)`` on ``(lb, ub)`` plus exact boundary atoms."""
    if n_bins < 2:
        raise ValidationError("n_bins must be at least 2")
    init = initial if isinstance(initial, InitialDistribution) else InitialDistribution.point(initial)
    init.check(params)
    goal.check(params)
    edges = np.linspace(params.lb, params.ub, n_bins + 1)
    tasks = [(params, goal, init, t_max, n, edges, seed, k) for k, n in _blocks(n_runs)]
    parts = _map(_hist_block, tasks, jobs)
    counts = sum(p[0] for p in parts)
    atoms = sum(p[1] for p in parts)
    return [
        PositionHistogram(t, edges, counts[t] / n_runs, atoms[t, 0] / n_runs,
                          atoms[t, 1] / n_runs, atoms[t, 2] / n_runs)
        for t in range(t_max + 1)
    ]


@dataclass(frozen=True)
class BehaviorSegment:
    kind: str
    start_iter: int
    end_iter: int


def segment_behavior(traj: Trajectory, params: Optional[SwarmParams] = None) -> list[BehaviorSegment]:
    """Split a trajectory into inertial runs and one-iteration turns.

    A zero velocity takes the sign of the next nonzero velocity (or of the
    last one when no nonzero velocity follows). An all-zero trajectory is a
    single ``inertial-right`` segment.
    """
    v = traj.velocities
    if len(v) < 2:
        raise ValidationError("trajectory needs at least two states")
    sign = np.sign(v)
    nz = np.nonzero(sign)[0]
    if nz.size == 0:
        return [BehaviorSegment("inertial-right", 0, len(v) - 1)]
    # back-fill zeros from the following nonzero entry, forward-fill the tail
    nxt = np.searchsorted(nz, np.arange(len(v)))
    sign = sign[nz[np.minimum(nxt, nz.size - 1)]]
    labels = ["inertial-right" if sign[0] > 0 else "inertial-left"]
    for t in range(1, len(v)):
        if sign[t] != sign[t - 1]:
            labels.append("oscillation-turn-left" if sign[t - 1] > 0 else "oscillation-turn-right")
        else:
            labels.append("inertial-right" if sign[t] > 0 else "inertial-left")
    segments: list[BehaviorSegment] = []
    for t, label in enumerate(labels):
        if segments and segments[-1].kind == label and not label.startswith("oscillation"):
            segments[-1] = BehaviorSegment(label, segments[-1].start_iter, t)
        else:
            segments.append(BehaviorSegment(label, t, t))
    return segments


def rastrigin(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x) + 10.0))


@dataclass
class PsoHistory:
    """Personal bests ``pbest[t, agent, dim]`` and their objective values."""

    pbest: np.ndarray
    pbest_value: np.ndarray
    gbest_value: np.ndarray

    @property
    def final_gbest(self) -> float:
        return float(self.gbest_value[-1])


def run_full_pso(objective: Callable[[np.ndarray], float], lb_vec, ub_vec, n_agents: int,
                 dims: int, t_max: int, omega: float = 0.729, c1: float = 1.494,
                 c2: float = 1.494, seed: int = 0) -> PsoHistory:
    """Synchronous global-best PSO with position clamping.

    Velocities start uniform in ``+-(ub - lb)/2``; gbest is refreshed once per
    iteration after every agent has moved and updated its pbest.
    """
    if n_agents < 1 or dims < 1 or t_max < 0:
        raise ValidationError("need n_agents >= 1, dims >= 1, t_max >= 0")
    lb = np.broadcast_to(np.asarray(lb_vec, dtype=float), (dims,))
    ub = np.broadcast_to(np.asarray(ub_vec, dtype=float), (dims,))
    gen = block_generator(seed, 0)
    x = lb + (ub - lb) * gen.random((n_agents, dims))
    span = ub - lb
    v = span * (gen.random((n_agents, dims)) - 0.5)
    f = np.array([objective(xi) for xi in x])
    pb, pf = x.copy(), f.copy()
    g = pb[np.argmin(pf)].copy()
    hist_pb = np.empty((t_max + 1, n_agents, dims))
    hist_pf = np.empty((t_max + 1, n_agents))
    hist_g = np.empty(t_max + 1)
    hist_pb[0], hist_pf[0], hist_g[0] = pb, pf, pf.min()
    for t in range(1, t_max + 1):
        r1 = gen.random((n_agents, dims))
        r2 = gen.random((n_agents, dims))
        v = omega * v + c1 * r1 * (pb - x) + c2 * r2 * (g - x)
        x = np.clip(x + v, lb, ub)
        f = np.array([objective(xi) for xi in x])
        better = f < pf
        pb[better], pf[better] = x[better], f[better]
        g = pb[np.argmin(pf)].copy()
        hist_pb[t], hist_pf[t], hist_g[t] = pb, pf, pf.min()
    return PsoHistory(hist_pb, hist_pf, hist_g)


def _plateaus(series: np.ndarray, tolerance: float) -> list[tuple[int, int]]:
    """Greedy maximal runs whose values fit in a band of half-width ``tolerance``."""
    out = []
    start, lo, hi = 0, series[0], series[0]
    for t in range(1, len(series)):
        lo2, hi2 = min(lo, series[t]), max(hi, series[t])
        if hi2 - lo2 > 2.0 * tolerance:
            out.append((start, t - 1))
            start, lo, hi = t, series[t], series[t]
        else:
            lo, hi = lo2, hi2
    out.append((start, len(series) - 1))
    return out


def stagnation_report(history: PsoHistory | np.ndarray, tolerance: float) -> list[dict]:
    """Plateaus of each ``pbest[agent, dim]`` with the nearest integer of each."""
    if tolerance <= 0:
        raise ValidationError("tolerance must be positive")
    pbest = history.pbest if isinstance(history, PsoHistory) else np.asarray(history, dtype=float)
    if pbest.ndim == 1:
        pbest = pbest[:, None, None]
    report = []
    for i in range(pbest.shape[1]):
        for j in range(pbest.shape[2]):
            series = pbest[:, i, j]
            spans = _plateaus(series, tolerance)
            report.append({
                "agent": i,
                "dimension": j,
                "intervals": spans,
                "nearest_integers": [int(np.rint(np.median(series[a:b + 1]))) for a, b in spans],
            })
    return report
