"""Closed-form escape-time and escape-probability bounds, all in log space.

The three phases are: accelerate rightward onto the upper boundary,
bounce back with a small leftward velocity, then drift left into the goal.
Each phase has an iteration cap and a probability floor; their composition
gives the overall pair ``(t_e0, log_p_e0)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .errors import DegenerateError, NotApplicableError, ValidationError
from .kernel import d0, log_h_bound, v_upper_bound
from .model import AgentState, GoalRegion, SwarmParams

__all__ = [
    "OscillationWindow",
    "EscapeBounds",
    "DEFAULT_WINDOW",
    "step1_bounds",
    "step2_bounds",
    "step3_bounds",
    "escape_bounds",
    "pe_lower_bound",
    "sb_membership",
]

# d0 below this fraction of the box width is treated as zero
_D0_REL_FLOOR = 1e-12
_LN2 = math.log(2.0)


@dataclass(frozen=True)
class OscillationWindow:
    """Leftward velocity band ``(-mu*d0, -lam*d0)`` right after leaving ``ub``."""

    lam: float
    mu: float

    def __post_init__(self) -> None:
        if not 0.0 < self.lam < self.mu <= 0.5:
            raise ValidationError(f"need 0 < lam < mu <= 1/2, got ({self.lam}, {self.mu})")


DEFAULT_WINDOW = OscillationWindow(1.0 / 40.0, 1.0 / 20.0)


@dataclass(frozen=True)
class EscapeBounds:
    t_0a: int
    t_ab: int
    t_bg: int
    t_e0: int
    log_p_0a: float
    log_p_ab: float
    log_p_bg: float
    log_p_e0: float

    def to_dict(self) -> dict:
        return asdict(self)


def _checked_d0(params: SwarmParams) -> float:
    width = d0(params)
    if width <= _D0_REL_FLOOR * params.width:
        raise DegenerateError(
            f"d0 = {width:g} is degenerate for box width {params.width:g} (pb == gb?)"
        )
    return width


def _ceil(value: float) -> int:
    if not math.isfinite(value):
        raise DegenerateError(f"count argument is not finite: {value}")
    return math.ceil(value)


def step1_bounds(params: SwarmParams) -> tuple[int, float]:
    """Cap and probability floor for reaching the upper boundary."""
    dd = _checked_d0(params)
    L = params.width
    t = 13 * _ceil(L / dd)
    return t, t * log_h_bound(params, dd * dd / (128.0 * L))


def step2_bounds(params: SwarmParams, window: OscillationWindow = DEFAULT_WINDOW) -> tuple[int, float]:
    """Cap and probability floor for bouncing off ``ub`` into ``window``."""
    dd = _checked_d0(params)
    t = 2 * _ceil(v_upper_bound(params) / dd)
    log_p = log_h_bound(params, (window.mu - window.lam) * dd) + t * log_h_bound(params, dd / 4.0)
    return t, log_p


def step3_bounds(params: SwarmParams, goal: GoalRegion) -> tuple[int, float]:
    """Cap and probability floor for drifting from the window into ``goal``."""
    dd = _checked_d0(params)
    L = params.width
    t = _ceil(80.0 * L / dd)
    inner = log_h_bound(params, 1e-5 * dd**3 / (L * L))
    return t, t * inner + log_h_bound(params, goal.width)


def escape_bounds(
    params: SwarmParams, goal: GoalRegion, window: OscillationWindow = DEFAULT_WINDOW
) -> EscapeBounds:
    """All three phase bounds plus the closed-form composite pair."""
    if params.omega != 1.0:
        raise NotApplicableError(f"escape bound not applicable for omega={params.omega} (needs omega == 1)")
    dd = _checked_d0(params)
    L = params.width
    t_0a, lp_0a = step1_bounds(params)
    t_ab, lp_ab = step2_bounds(params, window)
    t_bg, lp_bg = step3_bounds(params, goal)
    t_e0 = _ceil((2.0 * (params.c1 + params.c2) + 100.0 * L) / dd)
    lp_e0 = t_e0 * log_h_bound(params, 1e-5 * dd**3 / (L * L)) + log_h_bound(params, goal.width)
    return EscapeBounds(t_0a, t_ab, t_bg, t_e0, lp_0a, lp_ab, lp_bg, lp_e0)


def pe_lower_bound(log_p: float | EscapeBounds, n: int) -> float:
    """``log(1 - (1 - p)**n)`` for ``p = exp(log_p)``, stable for tiny ``p``.

    This is the log-probability of escaping within ``n`` consecutive blocks of
    ``t_e0`` iterations.
    """
    if isinstance(log_p, EscapeBounds):
        log_p = log_p.log_p_e0
    if n < 1:
        raise ValidationError("n must be at least 1")
    if log_p > 0:
        raise ValidationError("log-probability must be <= 0")
    if log_p == 0.0:
        return 0.0
    if log_p == -math.inf:
        return -math.inf
    if n == 1:
        return float(log_p)
    # z = -n*log(1-p) > 0 is handled through log z; the answer is log(1 - exp(-z))
    if log_p < -30.0:
        log_z = math.log(n) + log_p  # -log1p(-p) == p to double precision here
    elif log_p > -_LN2:
        log_z = math.log(n) + math.log(-math.log(-math.expm1(log_p)))
    else:
        log_z = math.log(n) + math.log(-math.log1p(-math.exp(log_p)))
    if log_z < -30.0:
        return log_z - 0.5 * math.exp(log_z)
    if log_z > 6.5:
        # exp(-z) below 1e-290: log1p(-exp(-z)) rounds to -exp(-z)
        return -math.exp(-math.exp(log_z))
    z = math.exp(log_z)
    return math.log(-math.expm1(-z)) if z < _LN2 else math.log1p(-math.exp(-z))


def sb_membership(
    prev_x: float,
    state: AgentState,
    params: SwarmParams,
    window: OscillationWindow = DEFAULT_WINDOW,
) -> bool:
    """True iff the agent just left ``ub`` with velocity inside ``window``."""
    dd = d0(params)
    if abs(prev_x - params.ub) > 1e-12:
        return False
    return -window.mu * dd < state.v < -window.lam * dd
