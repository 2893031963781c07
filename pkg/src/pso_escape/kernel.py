"""Exact one-step law of the next velocity and the elementary bounds built on it.

Given the state ``[x, v]`` the next velocity is ``omega*v`` plus the sum of two
independent uniforms, one on ``[0, c1*(pb - x)]`` and one on ``[0, c2*(gb - x)]``
(endpoints taken in either order). The sum has a trapezoidal density whose
four knots follow from the position relative to ``pb`` and ``gb``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DegenerateDistributionError, DegenerateError
from .model import AgentState, SwarmParams

__all__ = [
    "TrapezoidDensity",
    "velocity_support",
    "density",
    "cdf",
    "interval_prob",
    "d0",
    "h_bound",
    "log_h_bound",
    "v_upper_bound",
    "lemma1_bound",
]


@dataclass(frozen=True)
class TrapezoidDensity:
    """Piecewise-linear density on ``[vf1, vf4]`` with plateau ``hf`` on ``[vf2, vf3]``.

    When ``point_mass`` is set the law is a Dirac mass there and the knot
    fields all equal it.
    """

    vf1: float
    vf2: float
    vf3: float
    vf4: float
    hf: float
    point_mass: Optional[float] = None

    @property
    def knots(self) -> tuple[float, float, float, float]:
        return (self.vf1, self.vf2, self.vf3, self.vf4)

    @property
    def width(self) -> float:
        return self.vf4 - self.vf1

    def pdf(self, v):
        """Density at ``v``, left-continuous at the knots."""
        if self.point_mass is not None:
            raise DegenerateDistributionError("point-mass law has no density")
        v = np.asarray(v, dtype=float)
        out = np.zeros_like(v)
        if self.vf2 > self.vf1:
            m = (v > self.vf1) & (v <= self.vf2)
            ramp = (np.clip(v, self.vf1, self.vf2) - self.vf1) / (self.vf2 - self.vf1)
            out = np.where(m, self.hf * ramp, out)
        m = (v > self.vf2) & (v <= self.vf3)
        out = np.where(m, self.hf, out)
        if self.vf4 > self.vf3:
            m = (v > self.vf3) & (v <= self.vf4)
            ramp = (self.vf4 - np.clip(v, self.vf3, self.vf4)) / (self.vf4 - self.vf3)
            out = np.where(m, self.hf * ramp, out)
        return out if out.ndim else float(out)

    def cdf(self, v):
        """Exact piecewise-quadratic antiderivative of :meth:`pdf`."""
        v = np.asarray(v, dtype=float)
        if self.point_mass is not None:
            out = (v >= self.point_mass).astype(float)
            return out if out.ndim else float(out)
        a, b, c, d, h = self.vf1, self.vf2, self.vf3, self.vf4, self.hf
        out = np.zeros_like(v)
        if b > a:
            w = np.clip(v, a, b) - a
            out = out + 0.5 * h * w * w / (b - a)
        out = out + h * (np.clip(v, b, c) - b)
        if d > c:
            w = d - np.clip(v, c, d)
            out = out + np.where(v > c, 0.5 * h * (d - c) - 0.5 * h * w * w / (d - c), 0.0)
        # the three areas sum to one analytically; pin the top to avoid drift
        out = np.where(v >= d, 1.0, out)
        out = np.where(v <= a, 0.0, out)
        return out if out.ndim else float(out)

    def prob(self, a, b):
        """Probability of ``[a, b]``."""
        if self.point_mass is not None:
            a = np.asarray(a, dtype=float)
            b = np.asarray(b, dtype=float)
            out = ((a <= self.point_mass) & (self.point_mass <= b)).astype(float)
            return out if out.ndim else float(out)
        # integrate each linear piece over its overlap with [a, b]; a CDF
        # difference would cancel to zero for thin intervals near the top
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        k1, k2, k3, k4, h = self.vf1, self.vf2, self.vf3, self.vf4, self.hf
        out = np.zeros(np.broadcast(a, b).shape)
        if k2 > k1:
            lo, hi = np.clip(a, k1, k2), np.clip(b, k1, k2)
            out = out + (hi - lo) * h * ((lo - k1) + (hi - k1)) / (2.0 * (k2 - k1))
        out = out + h * (np.clip(b, k2, k3) - np.clip(a, k2, k3))
        if k4 > k3:
            lo, hi = np.clip(a, k3, k4), np.clip(b, k3, k4)
            out = out + (hi - lo) * h * ((k4 - lo) + (k4 - hi)) / (2.0 * (k4 - k3))
        out = np.clip(out, 0.0, 1.0)
        return out if out.ndim else float(out)


def _support_offsets(x: float, params: SwarmParams) -> tuple[float, float, float, float]:
    """Knot offsets from the ``omega*v`` base, before sorting."""
    p1 = params.c1 * (params.pb - x)
    p2 = params.c2 * (params.gb - x)
    dv1, dv2 = min(p1, p2), max(p1, p2)
    s = dv1 + dv2
    if x <= params.pb:
        return (0.0, dv1, dv2, s)
    if x >= params.gb:
        return (s, dv1, dv2, 0.0)
    if s > 0:
        return (dv1, 0.0, s, dv2)
    return (dv1, s, 0.0, dv2)


def velocity_support(state: AgentState, params: SwarmParams) -> TrapezoidDensity:
    """Trapezoidal law of the next velocity given ``state``."""
    base = params.omega * state.v
    k1, k2, k3, k4 = sorted(base + o for o in _support_offsets(state.x, params))
    # hf from the stored knots keeps the stored trapezoid's area at exactly one;
    # a support that vanishes against the base is a point mass in floating point
    denom = k4 + k3 - k2 - k1
    if denom <= 0.0 or not math.isfinite(2.0 / denom):
        return TrapezoidDensity(base, base, base, base, math.inf, point_mass=base)
    return TrapezoidDensity(k1, k2, k3, k4, 2.0 / denom)


def density(state: AgentState, params: SwarmParams, v):
    return velocity_support(state, params).pdf(v)


def cdf(state: AgentState, params: SwarmParams, v):
    return velocity_support(state, params).cdf(v)


def interval_prob(state: AgentState, params: SwarmParams, a: float, b: float) -> float:
    if a > b:
        raise ValueError(f"need a <= b, got [{a}, {b}]")
    return float(velocity_support(state, params).prob(a, b))


def d0(params: SwarmParams) -> float:
    """Guaranteed width of the one-step velocity support."""
    return min(params.c1, params.c2, 1.0) * (params.gb - params.pb)


def h_bound(params: SwarmParams, x):
    """Lower bound on the mass of any width-``x`` subinterval of the support."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("h_bound needs a nonnegative width")
    L = params.width
    lin = x / (2.0 * max(params.c1, params.c2) * L)
    quad = x * x / (2.0 * params.c1 * params.c2 * L * L)
    out = np.minimum(lin, quad)
    return out if out.ndim else float(out)


def log_h_bound(params: SwarmParams, x) -> float:
    """``log h_bound(x)`` evaluated without underflow for tiny widths."""
    x = float(x)
    if x < 0:
        raise ValueError("log_h_bound needs a nonnegative width")
    if x == 0.0:
        return -math.inf
    L = params.width
    lin = math.log(x) - math.log(2.0 * max(params.c1, params.c2) * L)
    quad = 2.0 * math.log(x) - math.log(2.0 * params.c1 * params.c2 * L * L)
    return min(lin, quad)


def v_upper_bound(params: SwarmParams) -> float:
    """Cap on the velocity of any trajectory started with ``|v| <= ub - lb``."""
    return (params.c1 + params.c2 + 1.0) * params.width


def lemma1_bound(params: SwarmParams) -> float:
    """Per-step lower bound on ``P{|v(t+1)| >= d0/4}`` valid from every state."""
    width = d0(params)
    if width <= 0.0:
        raise DegenerateError("d0 = 0 (pb == gb): no uniform speed bound exists")
    return h_bound(params, width / 4.0)
