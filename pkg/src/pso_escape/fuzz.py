"""Seeded generators of random valid inputs, shared by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .bounds import DEFAULT_WINDOW
from .kernel import d0, v_upper_bound
from .model import AgentState, GoalRegion, SwarmParams

__all__ = ["Origin", "fuzz_params", "fuzz_state", "fuzz_origin"]

# keep d0 at least this fraction of the box width so chains stay a sane length
MIN_D0_FRACTION = 1.0 / 60.0


@dataclass(frozen=True)
class Origin:
    state: AgentState
    goal: Optional[GoalRegion] = None


def fuzz_params(gen: np.random.Generator, omega: float = 1.0) -> SwarmParams:
    """Random box, attractors and coefficients with ``pb < gb``."""
    lb = gen.uniform(-5.0, 5.0)
    L = gen.uniform(1.0, 20.0)
    c1, c2 = gen.uniform(0.1, 4.0, size=2)
    while True:
        pb, gb = np.sort(gen.uniform(lb, lb + L, size=2))
        params = SwarmParams(omega, c1, c2, lb, lb + L, pb, gb)
        if d0(params) >= MIN_D0_FRACTION * L:
            return params


def fuzz_state(gen: np.random.Generator, params: SwarmParams) -> AgentState:
    """Random position in the box with ``|v| <= ub - lb``."""
    return AgentState(gen.uniform(params.lb, params.ub), gen.uniform(-params.width, params.width))


def fuzz_origin(gen: np.random.Generator, params: SwarmParams, phase: int) -> Origin:
    """Random state satisfying the precondition of the given escape phase."""
    dd = d0(params)
    ub = params.ub
    if phase == 1:
        return Origin(AgentState(gen.uniform(params.lb, ub), gen.uniform(dd / 4.0, v_upper_bound(params))))
    if phase == 2:
        return Origin(AgentState(ub, gen.uniform(0.0, v_upper_bound(params))))
    if phase != 3:
        raise ValueError(f"phase must be 1, 2 or 3, got {phase}")
    l_g, u_g = np.sort(gen.uniform(params.lb, ub, size=2))
    goal = GoalRegion(l_g, u_g)
    if ub - u_g <= dd / 3.0:
        lo, hi = (ub - u_g) / dd, min((ub - l_g) / dd, 0.5)
    else:
        lo, hi = DEFAULT_WINDOW.lam, DEFAULT_WINDOW.mu
    v = -gen.uniform(lo, hi) * dd
    return Origin(AgentState(ub + v, v), goal)
