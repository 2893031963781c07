"""Single-dimension dynamics of a stagnated PSO agent.

The agent's personal and global bests are frozen at ``pb`` and ``gb``.
Each iteration draws two uniforms, updates the velocity, then clamps the
position into ``[lb, ub]``. The stored velocity is the pre-clamp value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ValidationError

__all__ = [
    "SwarmParams",
    "AgentState",
    "GoalRegion",
    "Trajectory",
    "clamp",
    "step",
    "sample_step",
    "sample_velocities",
    "velocity_update",
    "run_trajectory",
]


def _finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


@dataclass(frozen=True)
class SwarmParams:
    """Frozen algorithm constants and search box for one dimension."""

    omega: float
    c1: float
    c2: float
    lb: float
    ub: float
    pb: float
    gb: float

    def __post_init__(self) -> None:
        for name in ("omega", "c1", "c2", "lb", "ub", "pb", "gb"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if not 0.0 < self.omega <= 1.0:
            raise ValidationError(f"omega must lie in (0, 1], got {self.omega}")
        if self.c1 <= 0.0 or self.c2 <= 0.0:
            raise ValidationError("learning factors c1 and c2 must be positive")
        if not self.lb < self.ub:
            raise ValidationError(f"need lb < ub, got [{self.lb}, {self.ub}]")
        if not self.lb <= self.pb <= self.gb <= self.ub:
            raise ValidationError(
                f"need lb <= pb <= gb <= ub, got lb={self.lb} pb={self.pb} "
                f"gb={self.gb} ub={self.ub}"
            )

    @property
    def width(self) -> float:
        """Length of the search interval, ``ub - lb``."""
        return self.ub - self.lb

    def replace(self, **changes: float) -> "SwarmParams":
        values = {k: getattr(self, k) for k in ("omega", "c1", "c2", "lb", "ub", "pb", "gb")}
        values.update(changes)
        return SwarmParams(**values)


@dataclass(frozen=True)
class AgentState:
    """Markov state: position ``x`` and velocity ``v``."""

    x: float
    v: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", _finite("x", self.x))
        object.__setattr__(self, "v", _finite("v", self.v))

    def check(self, params: SwarmParams) -> "AgentState":
        """Raise unless the position lies inside ``[lb, ub]``."""
        if not params.lb <= self.x <= params.ub:
            raise ValidationError(f"position {self.x} outside [{params.lb}, {params.ub}]")
        return self


@dataclass(frozen=True)
class GoalRegion:
    """Closed interval ``[l_g, u_g]`` of strictly better objective values."""

    l_g: float
    u_g: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "l_g", _finite("l_g", self.l_g))
        object.__setattr__(self, "u_g", _finite("u_g", self.u_g))
        if not self.u_g - self.l_g > 0.0:
            raise ValidationError(f"goal region must have positive width, got [{self.l_g}, {self.u_g}]")

    @property
    def width(self) -> float:
        return self.u_g - self.l_g

    def check(self, params: SwarmParams) -> "GoalRegion":
        if not (params.lb <= self.l_g and self.u_g <= params.ub):
            raise ValidationError(
                f"goal [{self.l_g}, {self.u_g}] not inside [{params.lb}, {params.ub}]"
            )
        return self

    def contains(self, x):
        return (x >= self.l_g) & (x <= self.u_g)


@dataclass
class Trajectory:
    states: list[AgentState] = field(default_factory=list)
    hit_time: Optional[int] = None

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.x for s in self.states])

    @property
    def velocities(self) -> np.ndarray:
        return np.array([s.v for s in self.states])


def clamp(x_raw, lb: float, ub: float):
    """Saturate ``x_raw`` into ``[lb, ub]``; works elementwise on arrays.

    The bounds are returned exactly, so callers may detect boundary atoms
    with ``==``.
    """
    if np.ndim(x_raw) == 0:
        if x_raw <= lb:
            return lb
        if x_raw >= ub:
            return ub
        return x_raw
    return np.where(x_raw <= lb, lb, np.where(x_raw >= ub, ub, x_raw))


def velocity_update(x, v, params: SwarmParams, r1, r2):
    """Raw velocity after one iteration (elementwise on arrays)."""
    return params.omega * v + params.c1 * r1 * (params.pb - x) + params.c2 * r2 * (params.gb - x)


def step(state: AgentState, params: SwarmParams, r1: float, r2: float) -> AgentState:
    """Advance one iteration with explicit random factors ``r1``, ``r2``."""
    if not (0.0 <= r1 <= 1.0 and 0.0 <= r2 <= 1.0):
        raise ValidationError(f"r1, r2 must lie in [0, 1], got {r1}, {r2}")
    v_new = velocity_update(state.x, state.v, params, r1, r2)
    return AgentState(clamp(state.x + v_new, params.lb, params.ub), v_new)


def sample_step(state: AgentState, params: SwarmParams, rng: np.random.Generator) -> AgentState:
    r1, r2 = rng.random(2)
    return step(state, params, float(r1), float(r2))


def run_trajectory(
    initial: AgentState,
    params: SwarmParams,
    goal: GoalRegion,
    max_iters: int,
    rng: np.random.Generator,
) -> Trajectory:
    """Roll the agent forward until it enters ``goal`` or ``max_iters`` steps pass.

    ``hit_time`` counts steps taken, so an initial position inside the goal
    gives ``hit_time == 0``.
    """
    if max_iters < 1:
        raise ValidationError("max_iters must be at least 1")
    initial.check(params)
    traj = Trajectory(states=[initial])
    if goal.contains(initial.x):
        traj.hit_time = 0
        return traj
    state = initial
    for t in range(1, max_iters + 1):
        state = sample_step(state, params, rng)
        traj.states.append(state)
        if goal.contains(state.x):
            traj.hit_time = t
            break
    return traj


def sample_velocities(state: AgentState, params: SwarmParams, rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` independent draws of the next raw velocity from ``state``."""
    r = rng.random((2, n))
    return velocity_update(state.x, state.v, params, r[0], r[1])
