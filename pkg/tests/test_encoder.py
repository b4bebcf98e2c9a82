import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnopf.encoder import (
    FIXED_1000,
    TIGHTENED,
    NeuronBounds,
    assert_valid_big_m,
    big_m_values,
    compute_activation_bounds,
    encode_time_step,
    output_bounds,
)
from nnopf.errors import InvalidBounds, UnboundedInput
from nnopf.milp import EQ, MilpInstance, solve_milp
from nnopf.scenarios import NormStats
from nnopf.surrogate import forward, init_params


def toy(seed=0, n_in=4, hidden=6, n_out=2):
    rng = np.random.default_rng(seed)
    params = init_params(n_in, hidden, n_out, rng)
    params.b1[:] = rng.normal(scale=0.5, size=hidden)
    stats = NormStats(rng.normal(size=n_in) * 0.1, rng.uniform(0.5, 2.0, n_in),
                      np.full(n_out, 0.98), np.full(n_out, 0.01))
    return params, stats


def encode_fixed(params, stats, x, policy=TIGHTENED, box=1.0):
    """Encode one block with its inputs pinned to ``x``; minimize the outputs' sum."""
    inst = MilpInstance("block")
    lo, hi = x - box, x + box
    xv = [inst.add_var(f"x{i}", lo[i], hi[i]) for i in range(len(x))]
    bounds = compute_activation_bounds(params, stats, lo, hi)
    blk = encode_time_step(inst, params, stats, xv, bounds, policy)
    for i, v in enumerate(xv):
        inst.fix(v, x[i])
    inst.set_objective({v: 1.0 for v in blk.v_vars})
    return inst, blk, solve_milp(inst, gap_tol=0.0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_interval_bounds_contain_sampled_preactivations(seed):
    params, stats = toy(seed % 7)
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-2, 0, 4)
    hi = lo + rng.uniform(0, 2, 4)
    b = compute_activation_bounds(params, stats, lo, hi)
    x = rng.uniform(lo, hi, size=(200, 4))
    z = stats.normalize_x(x) @ params.w1.T + params.b1
    assert np.all(z >= b.lo - 1e-12) and np.all(z <= b.hi + 1e-12)
    ylo, yhi = output_bounds(params, stats, b)
    y = forward(params, stats, x)
    assert np.all(y >= ylo - 1e-12) and np.all(y <= yhi + 1e-12)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), policy=st.sampled_from([TIGHTENED, FIXED_1000]))
def test_binaries_match_activation_signs(seed, policy):
    params, stats = toy(seed % 5)
    x = np.random.default_rng(seed).uniform(-1.5, 1.5, 4)
    inst, blk, sol = encode_fixed(params, stats, x, policy)
    z = stats.normalize_x(x) @ params.w1.T + params.b1
    delta = sol.values[blk.delta_vars]
    clear = np.abs(z) > 1e-6
    assert np.array_equal(delta[clear] > 0.5, z[clear] > 0)
    assert np.allclose(sol.values[blk.h_vars], np.maximum(z, 0.0), atol=1e-7)
    assert np.allclose(sol.values[blk.v_vars], forward(params, stats, x), atol=1e-7)


def test_presolve_fixes_stable_neurons():
    params, stats = toy(1)
    x = np.zeros(4)
    inst, blk, _ = encode_fixed(params, stats, x, box=1e-3)
    b = blk.bounds
    assert set(blk.free) == set(np.flatnonzero(b.free))
    for j in np.flatnonzero(b.inactive):
        var = inst.variables[blk.delta_vars[j]]
        assert var.lo == var.hi == 0.0
    for j in np.flatnonzero(b.active):
        assert inst.variables[blk.delta_vars[j]].lo == 1.0
        assert any(c.name == f"hact[0,{j}]" and c.sense == EQ for c in inst.constraints)


def test_big_m_policies():
    b = NeuronBounds([-2.0, 0.5], [3.0, 4.0])
    mp, mm = big_m_values(b, TIGHTENED)
    assert mp.tolist() == [3.0, 4.0] and mm.tolist() == [2.0, -0.5]
    mp, mm = big_m_values(b, FIXED_1000)
    assert mp.tolist() == [1000.0, 1000.0]
    with pytest.raises(ValueError):
        big_m_values(b, "other")
    assert assert_valid_big_m(None, None, b).valid
    report = assert_valid_big_m(None, None, NeuronBounds([-2000.0, 0.0], [1.0, 1.0]))
    assert not report.valid and report.violations[0][0] == 0


def test_fixed_policy_widens_preactivation_range():
    params, stats = toy(2)
    x = np.full(4, 0.2)
    inst, blk, _ = encode_fixed(params, stats, x, FIXED_1000)
    for j in blk.free:
        z = inst.variables[blk.z_vars[j]]
        assert z.lo <= -1000.0 and z.hi >= 1000.0


def test_invalid_inputs_rejected():
    params, stats = toy(0)
    with pytest.raises(UnboundedInput):
        compute_activation_bounds(params, stats, np.full(4, -np.inf), np.zeros(4))
    with pytest.raises(InvalidBounds):
        NeuronBounds([1.0], [0.0])
    with pytest.raises(InvalidBounds):
        encode_time_step(MilpInstance(), params, stats, [0, 1], NeuronBounds(np.zeros(6), np.ones(6)))
