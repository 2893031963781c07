"""Constructive transition chains for the three escape phases, plus a verifier.

A chain is a list of intervals the agent can visit on consecutive steps.
Each interval must lie inside the one-step reachable set from every point of
the two preceding intervals. The kernel's interval bound then gives the
chain's probability floor, a product of ``h(width)`` factors.

Position chains track ``x`` under the "neglect the box" dynamics
``x' = 2 x - x_prev + (attraction)``. Velocity chains track ``v`` while the
agent sits at ``ub`` (nonnegative velocities keep it clamped there).
A chain may hand off to a continuation chain through a representative state
drawn from its last two intervals.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bounds import DEFAULT_WINDOW, OscillationWindow, sb_membership
from .errors import DegenerateError, NotApplicableError, PreconditionError
from .kernel import d0, log_h_bound
from .model import AgentState, GoalRegion, SwarmParams, clamp

__all__ = [
    "ChainSpec",
    "FeasibilityReport",
    "covering_set_position",
    "covering_set_velocity",
    "build_step1_chain",
    "build_step2_chain",
    "build_step3_chain",
    "verify_chain",
    "chain_log_prob",
    "perturb_chain",
]

POSITION = "position-chain"
VELOCITY = "velocity-chain"
TERMINALS = ("S_a", "U_m", "S_b_window", "S_g", "U_t2")


@dataclass(frozen=True)
class ChainSpec:
    """One chain segment, optionally followed by a continuation segment.

    ``origin`` is the state the segment starts from. Position segments also
    carry ``origin_prev_x`` (so that ``origin.v == origin.x - origin_prev_x``),
    the attraction split ``lam`` used for the reachable set, and the
    direction of travel.
    """

    kind: str
    intervals: tuple[tuple[float, float], ...]
    origin: AgentState
    terminal_label: str
    lemma_tag: str
    origin_prev_x: Optional[float] = None
    lam: Optional[float] = None
    direction: str = "increasing"
    window: Optional[tuple[float, float]] = None
    goal: Optional[tuple[float, float]] = None
    continuation: Optional["ChainSpec"] = None

    def __post_init__(self) -> None:
        if self.kind not in (POSITION, VELOCITY):
            raise ValueError(f"unknown chain kind {self.kind!r}")
        if self.terminal_label not in TERMINALS:
            raise ValueError(f"unknown terminal label {self.terminal_label!r}")
        ivs = tuple((float(lo), float(hi)) for lo, hi in self.intervals)
        for lo, hi in ivs:
            if not lo <= hi:
                raise ValueError(f"malformed interval [{lo}, {hi}]")
        object.__setattr__(self, "intervals", ivs)

    def segments(self) -> list["ChainSpec"]:
        out, seg = [], self
        while seg is not None:
            out.append(seg)
            seg = seg.continuation
        return out

    def __len__(self) -> int:
        """Number of steps, i.e. intervals across all segments."""
        return sum(len(s.intervals) for s in self.segments())

    @property
    def final_label(self) -> str:
        return self.segments()[-1].terminal_label

    def to_dict(self) -> dict:
        d = {
            "kind": self.kind,
            "intervals": [list(iv) for iv in self.intervals],
            "origin": [self.origin.x, self.origin.v],
            "terminal_label": self.terminal_label,
            "lemma_tag": self.lemma_tag,
            "origin_prev_x": self.origin_prev_x,
            "lam": self.lam,
            "direction": self.direction,
            "window": list(self.window) if self.window else None,
            "goal": list(self.goal) if self.goal else None,
        }
        d["continuation"] = self.continuation.to_dict() if self.continuation else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ChainSpec":
        cont = d.get("continuation")
        return cls(
            kind=d["kind"],
            intervals=tuple(tuple(iv) for iv in d["intervals"]),
            origin=AgentState(*d["origin"]),
            terminal_label=d["terminal_label"],
            lemma_tag=d["lemma_tag"],
            origin_prev_x=d.get("origin_prev_x"),
            lam=d.get("lam"),
            direction=d.get("direction", "increasing"),
            window=tuple(d["window"]) if d.get("window") else None,
            goal=tuple(d["goal"]) if d.get("goal") else None,
            continuation=cls.from_dict(cont) if cont else None,
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ChainSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class FeasibilityReport:
    feasible: bool
    failed_conditions: list[tuple[str, int, float]] = field(default_factory=list)
    log_prob_lower_bound: float = 0.0
    worst_slack: float = math.inf


# --------------------------------------------------------------------------
# reachable sets


def _require_unit_inertia(params: SwarmParams) -> None:
    if params.omega != 1.0:
        raise NotApplicableError(
            f"chain construction not applicable for omega={params.omega}: "
            "inertial drift is only guaranteed with omega == 1"
        )


def _covering_position(xp, xc, params: SwarmParams, lam: float):
    """Vectorized reachable-set bounds; also returns the case flag."""
    xp = np.asarray(xp, dtype=float)
    xc = np.asarray(xc, dtype=float)
    gap = params.gb - params.pb
    above = xc > lam * params.pb + (1.0 - lam) * params.gb
    base = 2.0 * xc - xp
    lo = np.where(above, base - params.c1 * (1.0 - lam) * gap, base)
    hi = np.where(above, base, base + params.c2 * lam * gap)
    return lo, hi, above


def covering_set_position(
    x_prev: float, x_curr: float, params: SwarmParams, lam: float
) -> tuple[float, float]:
    """An interval inside the support of the next position (box ignored).

    Above the split point ``lam*pb + (1-lam)*gb`` the set extends left of the
    inertial point ``2*x_curr - x_prev``; at or below it, it extends right.
    """
    lo, hi, _ = _covering_position(x_prev, x_curr, params, lam)
    return float(lo), float(hi)


def covering_set_velocity(v_curr: float, params: SwarmParams) -> tuple[float, float]:
    """An interval inside the support of the next velocity while at ``ub``."""
    return v_curr - d0(params), v_curr


# --------------------------------------------------------------------------
# builders


def _checked_d0(params: SwarmParams) -> float:
    _require_unit_inertia(params)
    dd = d0(params)
    if dd <= 1e-12 * params.width:
        raise DegenerateError("d0 = 0 (pb == gb): no escape chain exists")
    return dd


def _accelerating_segment(
    x0: float, v0: float, prev_x: float, params: SwarmParams, lam: float, tag: str
) -> ChainSpec:
    """Rightward chain with shrinking gaps that ends beyond ``ub``."""
    dd = d0(params)
    L = params.width
    delta = min((1.0 - lam) * dd / 4.0, dd * dd / (128.0 * L))
    n_max = math.ceil(16.0 * L / dd) + 4
    t = np.arange(1, n_max + 1, dtype=float)
    a = x0 + t * v0 - t * (t - 1.0) * delta
    done = np.nonzero(a - delta >= params.ub)[0]
    if done.size == 0:
        raise PreconditionError("rightward chain does not reach ub; origin velocity too small")
    n = int(done[0]) + 1
    ivs = tuple((float(a[i] - delta), float(a[i])) for i in range(n))
    return ChainSpec(
        POSITION, ivs, AgentState(x0, v0), "S_a", tag,
        origin_prev_x=prev_x, lam=lam, direction="increasing",
    )


def build_step1_chain(origin: AgentState, params: SwarmParams) -> ChainSpec:
    """Chain from a state with rightward speed at least ``d0/4`` onto ``ub``.

    Origins right of ``pb/4 + 3gb/4`` accelerate straight to ``ub``. Origins
    left of it first follow a widening-gap chain past that point and then
    hand off to the accelerating chain from a representative state.
    """
    dd = _checked_d0(params)
    origin.check(params)
    if not origin.v >= dd / 4.0:
        raise PreconditionError(f"origin velocity {origin.v} below d0/4 = {dd / 4.0}")
    x0, v0 = origin.x, origin.v
    split = params.pb / 4.0 + 3.0 * params.gb / 4.0
    if x0 >= split:
        return _accelerating_segment(x0, v0, x0 - v0, params, 0.25, "step1-accelerate")

    delta = dd / 16.0
    n_max = math.ceil(8.0 * params.width / dd) + 4
    t = np.arange(1, n_max + 1, dtype=float)
    b = x0 + t * v0 + t * (t - 1.0) * delta
    done = np.nonzero(b + delta >= split)[0]
    if done.size == 0:  # pragma: no cover - guarded by the velocity floor
        raise PreconditionError("approach chain does not reach the split point")
    n = int(done[0]) + 1
    ivs = tuple((float(b[i]), float(b[i] + delta)) for i in range(n))
    if ivs[-1][0] >= params.ub:
        return ChainSpec(
            POSITION, ivs, origin, "S_a", "step1-approach",
            origin_prev_x=x0 - v0, lam=0.25, direction="increasing",
        )
    lo, hi = ivs[-1]
    x_h = 0.5 * (lo + min(hi, params.ub))
    prev_h = x0 if n == 1 else 0.5 * sum(ivs[-2])
    cont = _accelerating_segment(x_h, x_h - prev_h, prev_h, params, 0.5, "step1-accelerate")
    return ChainSpec(
        POSITION, ivs, origin, "U_m", "step1-approach",
        origin_prev_x=x0 - v0, lam=0.25, direction="increasing", continuation=cont,
    )


def _bounce_count(v0: float, dd: float, mu: float) -> int:
    """Fewest steps, starting from ``floor(1.5 v0/d0)``, giving a valid bounce chain."""

    def ok(k: int) -> bool:
        if k == 0:
            return v0 <= (1.0 - mu) * dd
        s = v0 / k
        if s > dd or 0.5 * s + mu * dd > dd:
            return False
        return k == 1 or 1.5 * s <= dd

    k = math.floor(1.5 * v0 / dd)
    while not ok(k):
        k += 1
    return k


def build_step2_chain(
    origin: AgentState, params: SwarmParams, window: OscillationWindow = DEFAULT_WINDOW
) -> ChainSpec:
    """Velocity chain that brakes a boundary-pinned agent into ``window``.

    Velocities step down by ``s = v0/K`` with intervals of width ``s/2``; the
    last one touches zero so the agent never leaves ``ub`` early. The final
    interval is the leftward window itself.
    """
    dd = _checked_d0(params)
    if abs(origin.x - params.ub) > 1e-12 or not origin.v > 0.0:
        raise PreconditionError("origin must sit at ub with positive velocity")
    v0 = origin.v
    k = _bounce_count(v0, dd, window.mu)
    ivs = []
    if k:
        s = v0 / k
        ivs = [(v0 - i * s, v0 - (i - 0.5) * s) for i in range(1, k + 1)]
        ivs[-1] = (0.0, ivs[-1][1])
    ivs.append((-window.mu * dd, -window.lam * dd))
    return ChainSpec(
        VELOCITY, tuple(ivs), origin, "S_b_window", "step2-bounce",
        direction="decreasing", window=(window.lam, window.mu),
    )


def build_step3_chain(
    origin_prev_x: float,
    origin: AgentState,
    params: SwarmParams,
    goal: GoalRegion,
    window: OscillationWindow = DEFAULT_WINDOW,
) -> ChainSpec:
    """Leftward chain from just below ``ub`` into ``goal``.

    Three geometries:

    * goal within ``d0/3`` of ``ub``: the first leftward step already lands
      in the goal, so the chain is empty;
    * goal right of ``3pb/4 + gb/4``: one decelerating chain ending at ``u_g``;
    * goal further left: a decelerating chain to ``pb/4 + 3gb/4``, then a
      braking chain (pushed right by the global best) ending at ``u_g``.
    """
    dd = _checked_d0(params)
    goal.check(params)
    ub = params.ub
    if abs(origin_prev_x - ub) > 1e-12 or not origin.v < 0.0:
        raise PreconditionError("origin must have just left ub with negative velocity")
    if abs(origin.x - clamp(ub + origin.v, params.lb, ub)) > 1e-9 * params.width:
        raise PreconditionError("origin position inconsistent with leaving ub at its velocity")
    g = (goal.l_g, goal.u_g)

    if ub - goal.u_g <= dd / 3.0:
        if not goal.contains(origin.x):
            raise PreconditionError(
                "goal near ub needs the leftward velocity to land inside it "
                f"(window ((ub-u_g)/d0, min((ub-l_g)/d0, 1/2)) = "
                f"({(ub - goal.u_g) / dd:g}, {min((ub - goal.l_g) / dd, 0.5):g}))"
            )
        return ChainSpec(
            POSITION, (), origin, "S_g", "step3-direct",
            origin_prev_x=origin_prev_x, lam=0.75, direction="decreasing", goal=g,
        )

    if not sb_membership(origin_prev_x, origin, params, window):
        raise PreconditionError("origin velocity outside the leftward window")
    speed = -origin.v
    near = 0.75 * params.pb + 0.25 * params.gb

    def drift(target: float) -> tuple[np.ndarray, float]:
        # a_t = ub - (t+1) speed - t(t-1) delta, with a_n == target
        n = math.floor((ub - target) / speed) - 2
        if n < 2:
            raise PreconditionError("velocity too large for this goal geometry")
        delta = (ub - target - (n + 1) * speed) / (n * (n - 1))
        t = np.arange(1, n + 1, dtype=float)
        return ub - (t + 1.0) * speed - t * (t - 1.0) * delta, delta

    if goal.u_g >= near:
        a, delta = drift(goal.u_g)
        ivs = [(float(x - delta), float(x)) for x in a]
        ivs[-1] = (max(ivs[-1][0], goal.l_g), goal.u_g)
        return ChainSpec(
            POSITION, tuple(ivs), origin, "S_g", "step3-drift",
            origin_prev_x=origin_prev_x, lam=0.75, direction="decreasing", goal=g,
        )

    far = 0.25 * params.pb + 0.75 * params.gb
    b, delta_b = drift(far)
    first = [(float(x - delta_b), float(x)) for x in b]
    first[-1] = (first[-1][0], far)
    x_h = 0.5 * sum(first[-1])
    prev_h = 0.5 * sum(first[-2])
    speed_h = prev_h - x_h
    n = math.floor((x_h - goal.u_g) / speed_h) + 1
    if n < 2:
        raise PreconditionError("velocity too large for this goal geometry")
    # c_t = x_h - t speed_h + t(t-1) delta, with c_n + delta == u_g
    delta_c = (goal.u_g - x_h + n * speed_h) / (n * (n - 1) + 1)
    t = np.arange(1, n + 1, dtype=float)
    c = x_h - t * speed_h + t * (t - 1.0) * delta_c
    second = [(float(x), float(x + delta_c)) for x in c]
    second[-1] = (max(second[-1][0], goal.l_g), goal.u_g)
    cont = ChainSpec(
        POSITION, tuple(second), AgentState(x_h, -speed_h), "S_g", "step3-settle",
        origin_prev_x=prev_h, lam=0.25, direction="decreasing", goal=g,
    )
    return ChainSpec(
        POSITION, tuple(first), origin, "U_t2", "step3-drift",
        origin_prev_x=origin_prev_x, lam=0.75, direction="decreasing", goal=g,
        continuation=cont,
    )


# --------------------------------------------------------------------------
# verification


def _check_position_segment(seg: ChainSpec, params: SwarmParams, tol: float, offset: int, fails: list):
    ivs = np.array(seg.intervals, dtype=float).reshape(-1, 2)
    n = len(ivs)
    xp, x0 = seg.origin_prev_x, seg.origin.x
    if xp is None or seg.lam is None:
        fails.append(("malformed-segment", offset, -math.inf))
        return
    if abs((x0 - xp) - seg.origin.v) > tol:
        fails.append(("origin-consistency", offset, -abs((x0 - xp) - seg.origin.v)))
    lo = np.concatenate(([xp, x0], ivs[:, 0]))
    hi = np.concatenate(([xp, x0], ivs[:, 1]))
    slacks = []
    if n:
        p, c, q = slice(0, n), slice(1, n + 1), slice(2, n + 2)
        if seg.direction == "increasing":
            order = lo[q] - hi[c]
        else:
            order = lo[c] - hi[q]
        corners = [(hi[p], lo[c]), (hi[p], hi[c]), (lo[p], lo[c]), (lo[p], hi[c])]
        e = [_covering_position(a, b, params, seg.lam) for a, b in corners]
        e_lo = np.max([x[0] for x in e], axis=0)
        e_hi = np.min([x[1] for x in e], axis=0)
        split = np.any([x[2] != e[0][2] for x in e], axis=0)
        reach = np.minimum(lo[q] - e_lo, e_hi - hi[q])
        # intervals before the last must still be inside the box
        inner = ivs[:-1, 0]
        box = np.minimum(inner - params.lb, params.ub - inner) if len(inner) else np.array([])
        for name, arr in (("monotonic-ordering", order), ("reachability", reach)):
            bad = np.nonzero(arr <= -tol)[0]
            fails.extend((name, offset + int(i), float(arr[i])) for i in bad)
            slacks.append(float(arr.min()))
        for i in np.nonzero(split)[0]:
            fails.append(("covering-case", offset + int(i), -math.inf))
        for i in np.nonzero(box < -tol)[0] if len(box) else []:
            fails.append(("inside-box", offset + int(i) + 1, float(box[i])))
    slacks.append(_terminal_slack(seg, params, tol, offset + n, fails))
    return min(slacks)


def _terminal_slack(seg: ChainSpec, params: SwarmParams, tol: float, t: int, fails: list) -> float:
    last = seg.intervals[-1] if seg.intervals else (seg.origin.x, seg.origin.x)
    label = seg.terminal_label
    if label == "S_a":
        slack = last[0] - params.ub
    elif label == "U_m":
        slack = last[0] - 0.5 * (params.pb + params.gb)
    elif label == "S_g":
        if seg.goal is None:
            fails.append(("terminal", t, -math.inf))
            return -math.inf
        slack = min(last[0] - seg.goal[0], seg.goal[1] - last[1])
    elif label == "U_t2":
        far = 0.25 * params.pb + 0.75 * params.gb
        slack = far - last[1]
        if seg.goal is not None:
            slack = min(slack, last[0] - seg.goal[1])
    else:  # S_b_window
        lam, mu = seg.window
        dd = d0(params)
        slack = min(last[0] + mu * dd, -lam * dd - last[1])
    if slack < -tol:
        fails.append(("terminal", t, float(slack)))
    return float(slack)


def _check_velocity_segment(seg: ChainSpec, params: SwarmParams, tol: float, offset: int, fails: list):
    dd = d0(params)
    ivs = np.array(seg.intervals, dtype=float).reshape(-1, 2)
    n = len(ivs)
    if abs(seg.origin.x - params.ub) > tol:
        fails.append(("origin-at-ub", offset, -abs(seg.origin.x - params.ub)))
    v0 = seg.origin.v
    lo = np.concatenate(([v0], ivs[:, 0]))
    hi = np.concatenate(([v0], ivs[:, 1]))
    slacks = [_terminal_slack(seg, params, tol, offset + n, fails)]
    if n:
        c, q = slice(0, n), slice(1, n + 1)
        order = lo[c] - hi[q]
        # covering interval [v - d0, v] evaluated at both corners of the current interval
        reach = np.minimum(lo[q] - (hi[c] - dd), lo[c] - hi[q])
        stay = ivs[:-1, 0]
        for name, arr in (("monotonic-ordering", order), ("reachability", reach), ("stay-at-ub", stay)):
            if len(arr) == 0:
                continue
            bad = np.nonzero(arr <= -tol)[0]
            base = 1 if name == "stay-at-ub" else 0
            fails.extend((name, offset + base + int(i), float(arr[i])) for i in bad)
            slacks.append(float(arr.min()))
    return min(slacks)


def _check_handoff(seg: ChainSpec, params: SwarmParams, tol: float, t: int, fails: list) -> float:
    nxt = seg.continuation
    last = seg.intervals[-1]
    prev = seg.intervals[-2] if len(seg.intervals) > 1 else (seg.origin.x, seg.origin.x)
    x, xp = nxt.origin.x, nxt.origin_prev_x
    slack = min(x - last[0], last[1] - x, xp - prev[0], prev[1] - xp)
    if seg.terminal_label == "U_m":
        slack = min(slack, nxt.origin.v - d0(params) / 4.0, params.ub - x)
    if slack < -tol:
        fails.append(("handoff", t, float(slack)))
    return float(slack)


def verify_chain(chain: ChainSpec, params: SwarmParams) -> FeasibilityReport:
    """Check ordering, one-step reachability and terminal conditions of every segment.

    Reachability is tested at the four corner pairs of the previous and
    current intervals. The reachable set's endpoints are affine in
    ``(x_prev, x_curr)`` as long as all corners fall on the same side of the
    split point, which is checked separately, so corners suffice.
    Every inequality passes if its signed slack exceeds ``-1e-9 (ub - lb)``.
    """
    tol = 1e-9 * params.width
    fails: list[tuple[str, int, float]] = []
    worst = math.inf
    offset = 0
    for seg in chain.segments():
        if seg.kind == POSITION:
            worst = min(worst, _check_position_segment(seg, params, tol, offset, fails))
        else:
            worst = min(worst, _check_velocity_segment(seg, params, tol, offset, fails))
        offset += len(seg.intervals)
        if seg.continuation is not None:
            if not seg.intervals:
                fails.append(("handoff", offset, -math.inf))
            else:
                worst = min(worst, _check_handoff(seg, params, tol, offset, fails))
    return FeasibilityReport(
        feasible=not fails,
        failed_conditions=fails,
        log_prob_lower_bound=chain_log_prob(chain, params),
        worst_slack=worst,
    )


def chain_log_prob(chain: ChainSpec, params: SwarmParams) -> float:
    """Sum of ``log h(width)`` over every interval of every segment."""
    return float(sum(log_h_bound(params, hi - lo) for seg in chain.segments() for lo, hi in seg.intervals))


def perturb_chain(chain: ChainSpec, factor: float = 2.0) -> ChainSpec:
    """Scale every interval's width by ``factor`` about its midpoint (fault injection)."""
    ivs = tuple(
        (0.5 * (lo + hi) - 0.5 * factor * (hi - lo), 0.5 * (lo + hi) + 0.5 * factor * (hi - lo))
        for lo, hi in chain.intervals
    )
    cont = perturb_chain(chain.continuation, factor) if chain.continuation else None
    return replace(chain, intervals=ivs, continuation=cont)
