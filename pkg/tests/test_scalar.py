import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpt_admm.model import ExponentialUtility, PowerUtility
from cpt_admm.oracle import finite_diff
from cpt_admm.scalar import (Interval, MonotoneTag, OracleCounter, Zeta, decompose, global_min,
                             local_minimizers, root_find)

P = PowerUtility(2.25, 0.88, 0.0)
E = ExponentialUtility(1.0, 11.4, 8.4, 0.0)


def grid_argmin(z, lo, hi, n=1_000_001):
    g = np.linspace(lo, hi, n)
    U = z.utility
    c = np.where(g <= U.B, z.a, z.b)
    v = -c * U.value_array(g) + 0.5 * z.sigma * (g - z.w) ** 2 + z.M
    k = int(np.argmin(v))
    return g[k], v[k], g[1] - g[0]


# --- evaluation --------------------------------------------------------------

def test_quadratic_zeta():
    z = Zeta(0.0, 0.0, 1.0, 2.0, P, M=0.5)
    assert z.value(3.0) == 4.5
    assert z.deriv1(3.0) == 4.0
    assert z.deriv2(3.0) == 2.0


def test_divergent_derivative_sentinel():
    z = Zeta(1.0, 1.0, 0.0, 1.0, P)
    assert z.deriv1(0.0, "right") == -math.inf
    assert z.deriv1(0.0, "left") == -math.inf


def test_value_continuous_at_reference():
    z = Zeta(0.3, 0.7, 0.05, 1.3, E, M=0.2)
    assert z.value(-1e-13) == pytest.approx(z.value(0.0), abs=1e-11)
    assert z.value(1e-13) == pytest.approx(z.value(0.0), abs=1e-11)


def test_mixed_zero_coefficients_rejected():
    with pytest.raises(ValueError):
        Zeta(0.0, 0.5, 0.0, 1.0, P)
    with pytest.raises(ValueError):
        Zeta(0.5, 0.5, 0.0, 0.0, P)


def test_exponential_zeta_derivative_finite_difference():
    z = Zeta(0.3, 0.2, 0.05, 1.5, E)
    for t in np.linspace(-0.5, 0.5, 10):
        assert finite_diff(z.value, float(t), 1e-6) == pytest.approx(z.deriv1(float(t)), rel=1e-6)
        assert finite_diff(z.deriv1, float(t), 1e-6) == pytest.approx(z.deriv2(float(t)), rel=1e-5)


def test_fusion_matches_pointwise_sum():
    z1 = Zeta(0.3, 0.2, 0.05, 1.5, P, M=0.1)
    z2 = Zeta(0.1, 0.4, -0.07, 0.5, P, M=-0.3)
    s = z1 + z2
    for t in np.linspace(-1, 1, 41):
        assert s.value(float(t)) == pytest.approx(z1.value(float(t)) + z2.value(float(t)), rel=1e-13, abs=1e-14)
        if t != 0:
            assert s.deriv1(float(t)) == pytest.approx(z1.deriv1(float(t)) + z2.deriv1(float(t)), rel=1e-12)


# --- root finding ------------------------------------------------------------

def test_root_find_linear():
    r = root_find(lambda x: x - 0.5, 0.0, 1.0, tol=1e-12)
    assert abs(r - 0.5) <= 1e-12


def test_root_find_no_root():
    assert root_find(lambda x: x ** 3 + 1, 0.0, 2.0) is None


def test_root_find_infinite_endpoint():
    r = root_find(lambda x: -math.inf if x == 0 else x - 0.25, 0.0, 1.0)
    assert r == pytest.approx(0.25, abs=1e-12)


def test_root_find_counts_calls_and_rejects_bad_interval():
    c = OracleCounter()
    root_find(lambda x: x, -1.0, 1.0, counter=c)
    root_find(lambda x: x + 5, -1.0, 1.0, counter=c)
    assert c.count == 2
    with pytest.raises(ValueError):
        root_find(lambda x: x, 0.0, math.inf)


def test_root_of_zeta_derivative_matches_grid_scan():
    z = Zeta(0.4, 0.6, 0.02, 0.7, P)
    f = z.deriv1_branch("right")
    r = root_find(f, 1e-9, 1.0)
    g = np.linspace(1e-9, 1.0, 1_000_001)
    d = 0.7 * (g - 0.02) - 0.6 * 0.88 * g ** -0.12
    k = int(np.nonzero(np.diff(np.sign(d)))[0][0])
    assert g[k] <= r <= g[k + 1]


# --- minimizers --------------------------------------------------------------

def test_global_min_reference_value():
    # 40-digit reference: stationary point of the right branch on [0.02, 1]
    z = Zeta(0.4, 0.6, 0.02, 0.7, P)
    p, v = global_min(z, (0.02, 1.0))
    assert p == pytest.approx(0.7953038048439482291, abs=1e-11)
    assert v == pytest.approx(-0.2800953196267868593, abs=1e-13)
    gp, gv, h = grid_argmin(z, 0.02, 1.0)
    assert abs(p - gp) <= 2 * h and abs(v - gv) <= 1e-9


def test_exponential_single_minimizer_near_center():
    z = Zeta(1.0, 1.0, 0.5, 100.0, E)
    mins = local_minimizers(z, (-1.0, 2.0))
    assert len(mins) == 1
    assert mins[0][0] == pytest.approx(0.5012465081106681067, abs=1e-11)
    gp, _, h = grid_argmin(z, -1.0, 2.0)
    assert abs(mins[0][0] - gp) <= h


def test_power_minimizers_exclude_reference():
    z = Zeta(1.0, 1.0, -0.05, 1.0, P)
    mins = local_minimizers(z, (-1.0, 2.0))
    assert all(p != 0.0 for p, _ in mins)
    gp, gv, h = grid_argmin(z, -1.0, 2.0)
    best = min(mins, key=lambda t: t[1])
    assert abs(best[0] - gp) <= 2 * h


def test_quadratic_global_min_clamps():
    z = Zeta(0.0, 0.0, 0.3, 1.0, P)
    assert global_min(z, (0.0, 1.0)) == (0.3, 0.0)
    z = Zeta(0.0, 0.0, 2.0, 1.0, P)
    p, v = global_min(z, (0.0, 1.0))
    assert p == 1.0 and v == 0.5
    with pytest.raises(ValueError):
        local_minimizers(z, (0.0, 1.0))


def test_decompose_increasing_domain():
    z = Zeta(0.2, 0.2, -5.0, 50.0, P)
    out = decompose(z, (0.1, 0.9))
    assert len(out) == 1 and out[0][1] is MonotoneTag.INCREASING


def test_decompose_interior_minimum():
    z = Zeta(1.0, 1.0, 0.5, 100.0, E)
    out = decompose(z, (0.2, 1.0))
    assert [t for _, t in out] == [MonotoneTag.DECREASING, MonotoneTag.INCREASING]
    assert out[0][0].hi == pytest.approx(0.5012465081106681067, abs=1e-11)


def test_decompose_degenerate_domain():
    z = Zeta(1.0, 1.0, 0.5, 100.0, E)
    out = decompose(z, (0.1, 0.1))
    assert out == [(Interval(0.1, 0.1), MonotoneTag.DECREASING)]


def test_interval_validation():
    with pytest.raises(ValueError):
        Interval(1.0, 0.0)
    with pytest.raises(ValueError):
        Interval(0.0, math.inf)


# --- properties --------------------------------------------------------------

@st.composite
def zetas(draw):
    if draw(st.booleans()):
        U = PowerUtility(draw(st.floats(1.0, 3.0)), draw(st.floats(0.3, 1.0)), draw(st.floats(-0.05, 0.05)))
    else:
        U = ExponentialUtility(draw(st.floats(0.5, 2.0)), draw(st.floats(1.0, 15.0)),
                               draw(st.floats(1.0, 15.0)), draw(st.floats(-0.05, 0.05)))
    return Zeta(draw(st.floats(0.01, 1.0)), draw(st.floats(0.01, 1.0)), draw(st.floats(-0.3, 0.3)),
                draw(st.floats(0.05, 30.0)), U)


domains = st.tuples(st.floats(-0.6, 0.2), st.floats(0.0, 0.8)).map(lambda t: (t[0], t[0] + t[1]))


@settings(max_examples=300, deadline=None)
@given(zetas(), domains)
def test_oracle_budget_and_partition(z, dom):
    c1, c2 = OracleCounter(), OracleCounter()
    local_minimizers(z, dom, c1)
    parts = decompose(z, dom, c2)
    assert c1.count <= 3 and c2.count <= 3
    assert len(parts) <= 5
    assert parts[0][0].lo == dom[0] and parts[-1][0].hi == dom[1]
    for (a, _), (b, _) in zip(parts[:-1], parts[1:]):
        assert a.hi == b.lo


@settings(max_examples=300, deadline=None)
@given(zetas(), domains)
def test_decompose_tags_are_sound(z, dom):
    for iv, tag in decompose(z, dom):
        if iv.width == 0:
            continue
        v = np.array([z.value(t) for t in np.linspace(iv.lo, iv.hi, 16)])
        scale = 1e-12 * (1 + np.max(np.abs(v)))
        if tag is MonotoneTag.INCREASING:
            assert np.all(np.diff(v) >= -scale)
        elif tag is MonotoneTag.DECREASING:
            assert np.all(np.diff(v) <= scale)


@settings(max_examples=200, deadline=None)
@given(zetas(), domains)
def test_global_min_matches_grid(z, dom):
    p, v = global_min(z, dom)
    gp, gv, h = grid_argmin(z, dom[0], dom[1], 100_001)
    assert v <= gv + 1e-9
    assert dom[0] <= p <= dom[1]
