import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpt_admm.dp import solve_dp
from cpt_admm.model import TK1992, PowerUtility, build_weights, cpt_objective_x
from cpt_admm.oracle import (GridSpec, exhaustive_full_oracle, finite_diff, grid_dp_oracle,
                             simplex_lattice, stage_values)
from cpt_admm.scalar import Zeta
from cpt_admm.subproblem import SubproblemInstance

P = PowerUtility()


def instance(w, sigma=1.0):
    w = np.sort(np.asarray(w, dtype=float))
    return SubproblemInstance.from_weights(w, build_weights(TK1992(0.69, 0.61), w.size), sigma, P)


def test_single_stage_is_grid_argmin():
    inst = instance([0.04])
    y, obj = grid_dp_oracle(inst, GridSpec(5001))
    g = np.union1d(np.linspace(inst.lb, inst.ub, 5001), [0.0, 0.04])
    v = stage_values(inst, g)[0]
    assert y[0] == g[np.argmin(v)] and obj == v.min()


def test_stage_values_match_zeta():
    inst = instance([-0.05, 0.02, 0.07])
    g = np.linspace(-0.2, 0.2, 11)
    F = stage_values(inst, g)
    for i in range(3):
        z = inst.stage(i)
        assert np.allclose(F[i], [z.value(t) for t in g], rtol=1e-13, atol=1e-15)


def test_increasing_stages_pin_lower_bound():
    # centers below the domain make every stage increasing on [lb, ub]
    N = 4
    inst = SubproblemInstance(np.full(N, -5.0), np.full(N, 0.25), np.full(N, 0.25), 1.0, P,
                              lb=0.1, ub=0.5)
    for f in inst.stages():
        assert f.deriv1(inst.lb) > 0
    y, _ = grid_dp_oracle(inst, GridSpec(101))
    assert np.all(y == inst.lb)


def test_grid_must_cover_bounds_and_cap():
    inst = instance([0.01, 0.02])
    with pytest.raises(ValueError):
        grid_dp_oracle(inst, GridSpec(11, lo=inst.lb + 0.01))
    with pytest.raises(ValueError):
        GridSpec(1)
    with pytest.raises(MemoryError):
        grid_dp_oracle(instance(np.linspace(-0.1, 0.1, 10)), GridSpec(10_000_000))


def test_grid_objective_not_below_continuous():
    rng = np.random.default_rng(31)
    inst = instance(rng.uniform(-0.1, 0.1, 6))
    _, gobj = grid_dp_oracle(inst, GridSpec(20001))
    dobj = solve_dp(inst).objective
    assert dobj <= gobj + 1e-12
    assert gobj - dobj <= 1e-6


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8))
def test_monotone_output_and_refinement(seed, N):
    rng = np.random.default_rng(seed)
    inst = instance(rng.uniform(-0.1, 0.1, N))
    y1, o1 = grid_dp_oracle(inst, GridSpec(1001))
    _, o2 = grid_dp_oracle(inst, GridSpec(2001))
    assert np.all(np.diff(y1) >= 0)
    assert inst.lb <= y1[0] and y1[-1] <= inst.ub
    # 2001 uniform points contain the 1001-point grid
    assert o2 <= o1 + 1e-12
    assert abs(sum(inst.stage(i).value(float(y1[i])) for i in range(N)) - o1) <= 1e-12


def test_simplex_lattice():
    assert simplex_lattice(1, 10).tolist() == [[1.0]]
    L2 = simplex_lattice(2, 4)
    assert L2.shape == (5, 2) and np.allclose(L2.sum(axis=1), 1)
    L3 = simplex_lattice(3, 10)
    assert L3.shape == (66, 3) and np.allclose(L3.sum(axis=1), 1) and L3.min() >= 0
    with pytest.raises(ValueError):
        simplex_lattice(4, 10)


def test_exhaustive_single_asset_and_dimension_error():
    W = build_weights(TK1992(), 12)
    R = np.random.default_rng(0).normal(0, 0.02, (12, 1))
    x, obj = exhaustive_full_oracle(R, W, P)
    assert x.tolist() == [1.0] and obj == cpt_objective_x(x, R, W, P)
    with pytest.raises(ValueError):
        exhaustive_full_oracle(np.zeros((12, 4)), W, P)


def test_exhaustive_matches_pointwise_objective():
    rng = np.random.default_rng(2)
    R = rng.normal(0.001, 0.02, (15, 3))
    W = build_weights(TK1992(), 15)
    x, obj = exhaustive_full_oracle(R, W, P, resolution=30, chunk=7)
    vals = [cpt_objective_x(p, R, W, P) for p in simplex_lattice(3, 30)]
    assert obj == pytest.approx(min(vals), abs=1e-15)
    assert cpt_objective_x(x, R, W, P) == pytest.approx(obj, abs=1e-15)


def test_finite_diff_examples():
    assert finite_diff(lambda z: z * z, 1.0) == pytest.approx(2.0, abs=1e-9)
    for z in (-0.3, 0.2, 0.7):
        assert finite_diff(P.value, z) == pytest.approx(P.deriv1(z), rel=1e-5)
    zeta = Zeta(0.3, 0.2, 0.05, 1.5, P)
    for z in (-0.2, 0.1, 0.4):
        assert finite_diff(zeta.value, z) == pytest.approx(zeta.deriv1(z), rel=1e-5)
