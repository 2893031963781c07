import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from pso_escape import AgentState, SwarmParams
from pso_escape.errors import DegenerateDistributionError, DegenerateError
from pso_escape.kernel import (
    cdf,
    d0,
    density,
    h_bound,
    interval_prob,
    lemma1_bound,
    log_h_bound,
    v_upper_bound,
    velocity_support,
)
from pso_escape.model import sample_velocities

from . import oracles

WORKED = SwarmParams(1.0, 2.0, 2.0, 0.0, 20.0, 3.0, 4.0)
TRAP = velocity_support(AgentState(1.0, 0.0), WORKED)


@st.composite
def configs(draw, omega=1.0):
    lb = draw(st.floats(-10, 10))
    width = draw(st.floats(0.5, 30))
    ub = lb + width
    pb = draw(st.floats(lb, ub))
    gb = min(pb + draw(st.one_of(st.just(0.0), st.floats(1e-6, 1.0))) * (ub - pb), ub)
    w = omega if omega is not None else draw(st.floats(0.05, 1.0))
    p = SwarmParams(w, draw(st.floats(0.05, 4)), draw(st.floats(0.05, 4)), lb, ub, pb, gb)
    x = draw(st.floats(lb, ub, allow_subnormal=False))
    v = draw(st.floats(-width, width))
    return p, AgentState(x, v)


def piecewise_quadrature(law, n=501):
    """Midpoint rule between breakpoints: exact for a piecewise-linear density."""
    pts = np.union1d(np.linspace(law.vf1, law.vf4, n), law.knots)
    mids = 0.5 * (pts[:-1] + pts[1:])
    return float(np.sum(law.pdf(mids) * np.diff(pts)))


def nondegenerate(cfg):
    p, s = cfg
    return not (s.x == p.pb == p.gb)


# -- knot table vs convolution oracle ---------------------------------------

@pytest.mark.parametrize("state, knots, hf, widths", [
    (AgentState(1.0, 0.0), (0, 4, 6, 10), 1 / 6, (4.0, 6.0)),
    (AgentState(5.0, 0.0), (-6, -4, -2, 0), 1 / 4, (-4.0, -2.0)),
    (AgentState(3.5, 1.0), (0, 1, 1, 2), 1.0, (-1.0, 1.0)),
])
def test_knots_match_convolution(state, knots, hf, widths):
    law = velocity_support(state, WORKED)
    np.testing.assert_allclose(law.knots, knots, atol=1e-12)
    assert law.hf == pytest.approx(hf, rel=1e-12)
    grid, conv = oracles.grid_convolution(*widths, h=1e-3)
    grid = grid + state.v
    inside = (grid > knots[0] + 0.01) & (grid < knots[3] - 0.01)
    np.testing.assert_allclose(law.pdf(grid[inside]), conv[inside], atol=2e-3)
    assert conv.max() == pytest.approx(hf, rel=2e-3)


def test_point_mass_when_attractors_meet_position():
    p = SwarmParams(0.5, 2.0, 2.0, 0.0, 10.0, 4.0, 4.0)
    law = velocity_support(AgentState(4.0, 3.0), p)
    assert law.point_mass == 1.5
    with pytest.raises(DegenerateDistributionError):
        law.pdf(1.5)
    assert law.cdf(1.4999) == 0.0 and law.cdf(1.5) == 1.0
    assert law.prob(1.0, 2.0) == 1.0 and law.prob(1.6, 2.0) == 0.0


def test_support_below_one_ulp_is_a_point_mass():
    p = SwarmParams(1.0, 1.0, 1.0, 0.0, 1.0, 0.0, 1e-38)
    law = velocity_support(AgentState(0.0, 1.0), p)
    assert law.point_mass == 1.0


def test_inertia_shifts_the_base():
    p = WORKED.replace(omega=0.5)
    np.testing.assert_allclose(velocity_support(AgentState(1.0, 2.0), p).knots, (1, 5, 7, 11))


# -- density / cdf / interval_prob ------------------------------------------

@pytest.mark.parametrize("v, expected", [(5.0, 1 / 6), (2.0, 1 / 12), (-0.1, 0.0), (10.5, 0.0), (0.0, 0.0)])
def test_density_examples(v, expected):
    assert density(AgentState(1.0, 0.0), WORKED, v) == pytest.approx(expected, abs=1e-15)


def test_density_left_continuous_at_plateau_knot():
    assert TRAP.pdf(4.0) == pytest.approx(1 / 6)
    assert TRAP.pdf(10.0) == 0.0


def test_rectangle_density_skips_zero_width_ramps():
    # equal attraction widths with one of them zero: uniform on [0, 2]
    p = SwarmParams(1.0, 1.0, 2.0, 0.0, 10.0, 3.0, 4.0)
    law = velocity_support(AgentState(3.0, 0.0), p)
    np.testing.assert_allclose(law.knots, (0, 0, 2, 2))
    assert law.pdf(1.0) == pytest.approx(0.5)
    assert law.cdf(1.0) == pytest.approx(0.5)


@pytest.mark.parametrize("v, expected", [(0.0, 0.0), (4.0, 1 / 3), (10.0, 1.0), (5.0, 0.5), (-3.0, 0.0), (12.0, 1.0)])
def test_cdf_examples(v, expected):
    assert cdf(AgentState(1.0, 0.0), WORKED, v) == pytest.approx(expected, abs=1e-15)


def test_cdf_matches_grid_quadrature():
    grid = np.linspace(0, 4, 40001)
    assert np.trapezoid(TRAP.pdf(grid), grid) == pytest.approx(1 / 3, abs=1e-9)


def test_interval_prob_examples():
    s = AgentState(1.0, 0.0)
    assert interval_prob(s, WORKED, 0.0, 10.0) == 1.0
    assert interval_prob(s, WORKED, 3.0, 3.0) == 0.0
    with pytest.raises(ValueError):
        interval_prob(s, WORKED, 2.0, 1.0)


@settings(max_examples=300)
@given(configs(omega=None), st.floats(-3, 3))
def test_cdf_agrees_with_inclusion_exclusion(cfg, u):
    p, s = cfg
    law = velocity_support(s, p)
    lo, hi = law.vf1, law.vf4
    if law.point_mass is not None:
        lo, hi = law.point_mass - 1, law.point_mass + 1
    pts = np.linspace(lo - 0.1, hi + 0.1, 41) + 1e-3 * u
    # knots are stored rounded to the base's ulp, so allow that much horizontal play
    eps = 8 * np.spacing(abs(p.omega * s.v) + abs(hi - lo) + 1.0)
    ref = lambda q: oracles.next_velocity_cdf(s.x, s.v, p.omega, p.c1, p.c2, p.pb, p.gb, q)
    got = law.cdf(pts)
    assert np.all(got >= ref(pts - eps) - 1e-9)
    assert np.all(got <= ref(pts + eps) + 1e-9)


# -- elementary bounds ------------------------------------------------------

@pytest.mark.parametrize("c1, c2, pb, gb, expected", [
    (2, 2, 3, 4, 1.0), (2, 2, 3, 3, 0.0), (0.5, 2, 0, 2, 1.0), (0.2, 3, 1, 6, 1.0),
])
def test_d0_examples(c1, c2, pb, gb, expected):
    assert d0(SwarmParams(1.0, c1, c2, 0.0, 10.0, pb, gb)) == pytest.approx(expected)


def test_h_bound_examples():
    p = SwarmParams(1.0, 2.0, 2.0, 0.0, 10.0, 3.0, 4.0)
    assert h_bound(p, 0.0) == 0.0
    assert h_bound(p, 1.0) == pytest.approx(0.00125, rel=1e-15)
    with pytest.raises(ValueError):
        h_bound(p, -1.0)


@given(st.floats(1e-300, 1e3), st.floats(0.05, 4), st.floats(0.05, 4), st.floats(0.5, 50))
def test_log_h_matches_direct_value(x, c1, c2, width):
    p = SwarmParams(1.0, c1, c2, 0.0, width, 0.0, width)
    direct = oracles.h_value(c1, c2, width, x)
    if direct > 1e-290:
        assert log_h_bound(p, x) == pytest.approx(math.log(direct), rel=1e-12, abs=1e-12)
    else:
        assert log_h_bound(p, x) < math.log(1e-290)


def test_log_h_at_zero_is_minus_infinity():
    assert log_h_bound(WORKED, 0.0) == -math.inf


@given(st.floats(0, 100), st.floats(0, 100))
def test_h_bound_monotone(a, b):
    lo, hi = sorted((a, b))
    assert h_bound(WORKED, lo) <= h_bound(WORKED, hi)


def test_v_upper_bound_examples():
    assert v_upper_bound(WORKED) == 100.0
    tiny = SwarmParams(1.0, 1e-12, 1e-12, 0.0, 20.0, 3.0, 4.0)
    assert v_upper_bound(tiny) == pytest.approx(20.0)


def test_lemma1_bound_worked_example():
    # h(1/4) = min(0.25/80, 0.0625/3200)
    assert lemma1_bound(WORKED) == pytest.approx(1.953125e-5, rel=1e-15)
    with pytest.raises(DegenerateError):
        lemma1_bound(WORKED.replace(gb=3.0))


# -- properties over fuzzed inputs ------------------------------------------

@settings(max_examples=300)
@given(configs().filter(nondegenerate))
def test_support_properties_at_unit_inertia(cfg):
    p, s = cfg
    law = velocity_support(s, p)
    assert law.vf1 <= law.vf2 <= law.vf3 <= law.vf4
    assert law.vf1 <= s.v <= law.vf4
    assert law.width >= d0(p) - 8 * np.spacing(abs(s.v) + law.width)
    # a support only a few ulps wide has no meaningful grid to integrate on
    if law.point_mass is not None or law.width < 1e-9 * (1.0 + abs(s.v)):
        return
    assert piecewise_quadrature(law) == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=300)
@given(configs().filter(nondegenerate), st.floats(0, 1), st.floats(0, 1))
def test_subinterval_mass_at_least_h(cfg, u, w):
    p, s = cfg
    law = velocity_support(s, p)
    if law.point_mass is not None:
        return
    a = min(law.vf1 + u * law.width, law.vf4)
    b = a + w * (law.vf4 - a)
    assert law.prob(a, b) >= h_bound(p, b - a) * (1 - 1e-9) - 1e-15


@settings(max_examples=300)
@given(configs().filter(lambda c: c[0].gb - c[0].pb > 1e-3 * c[0].width))
def test_speed_floor_probability(cfg):
    p, s = cfg
    law = velocity_support(s, p)
    q = d0(p) / 4.0
    tails = law.cdf(-q) + (1.0 - law.cdf(q))
    assert tails >= lemma1_bound(p) * (1 - 1e-9)


@given(configs(omega=None).filter(nondegenerate))
def test_cdf_monotone_and_density_nonnegative(cfg):
    p, s = cfg
    law = velocity_support(s, p)
    if law.point_mass is not None:
        return
    pts = np.linspace(law.vf1 - 1, law.vf4 + 1, 301)
    assert np.all(np.diff(law.cdf(pts)) >= -1e-15)
    assert np.all(law.pdf(pts) >= 0)


@given(st.floats(0.5, 20), st.floats(-1, 1), st.floats(0, 1), st.floats(-1, 1), st.floats(-1, 1),
       st.floats(0.05, 4), st.floats(0.05, 4), st.floats(0.05, 1))
def test_reflection_mirrors_the_law(half, u, frac, xu, vu, c1, c2, omega):
    # a box centred on zero makes the reflection an exact sign flip
    pb = half * u
    gb = min(pb + frac * (half - pb), half)
    p = SwarmParams(omega, c1, c2, -half, half, pb, gb)
    q = SwarmParams(omega, c2, c1, -half, half, -gb, -pb)
    s = AgentState(half * xu, 2 * half * vu)
    a = velocity_support(s, p)
    b = velocity_support(AgentState(-s.x, -s.v), q)
    if a.point_mass is not None:
        assert b.point_mass == -a.point_mass
        return
    np.testing.assert_allclose(b.knots, [-k for k in reversed(a.knots)], rtol=0, atol=1e-12 * (1 + half))
    assert b.hf == pytest.approx(a.hf, rel=1e-9)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_sampler_agrees_with_cdf(seed):
    gen = np.random.default_rng(seed)
    p = SwarmParams(1.0, *gen.uniform(0.2, 3, 2), 0.0, 10.0, *np.sort(gen.uniform(0, 10, 2)))
    s = AgentState(gen.uniform(0, 10), gen.uniform(-10, 10))
    draws = sample_velocities(s, p, gen, 200_000)
    assert stats.kstest(draws, velocity_support(s, p).cdf).statistic <= 0.005
