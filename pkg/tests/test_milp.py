import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_force_milp, dense_lp, random_lp, random_milp

from nnopf.errors import Infeasible, LimitReached, TooManyBinaries
from nnopf.milp import (
    EQ,
    GE,
    LE,
    LpEngine,
    MilpInstance,
    enumerate_patterns,
    format_lp,
    load_lp,
    parse_lp,
    relative_gap,
    save_lp,
    solve_lp,
    solve_milp,
)


def dense_reference(inst):
    arr = inst.arrays()
    status, obj = dense_lp(arr.c, arr.A.toarray(), arr.senses, arr.rhs, arr.lo, arr.hi)
    return status, obj + arr.c0


def test_simplex_matches_dense_tableau_on_random_lps():
    rng = np.random.default_rng(2024)
    for k in range(100):
        inst = random_lp(rng, 10, 15, feasible=k % 10 != 0)
        sol = solve_lp(inst)
        status, obj = dense_reference(inst)
        assert sol.status == status
        if status == "optimal":
            assert sol.objective == pytest.approx(obj, rel=1e-7, abs=1e-7)
            assert inst.is_feasible(sol.values)


def test_warm_start_agrees_with_cold_solve():
    rng = np.random.default_rng(7)
    for _ in range(30):
        inst = random_lp(rng, 10, 15)
        arr = inst.arrays()
        engine = LpEngine.from_instance(inst)
        root, basis = engine.solve(arr.lo, arr.hi)
        lo, hi = arr.lo.copy(), arr.hi.copy()
        j = int(rng.integers(10))
        hi[j] = lo[j] + 0.3 * (hi[j] - lo[j])
        warm, _ = engine.solve(lo, hi, basis)
        cold, _ = LpEngine.from_instance(inst).solve(lo, hi)
        assert warm.status == cold.status
        if cold.status == "optimal":
            assert warm.objective == pytest.approx(cold.objective, rel=1e-8, abs=1e-8)


def test_reoptimize_with_new_costs_matches_cold():
    rng = np.random.default_rng(8)
    inst = random_lp(rng, 10, 15)
    arr = inst.arrays()
    engine = LpEngine.from_instance(inst)
    _, basis = engine.solve(arr.lo, arr.hi)
    for _ in range(10):
        c = rng.normal(size=10)
        res, basis = engine.reoptimize(c, arr.lo, arr.hi, basis)
        status, obj = dense_lp(c, arr.A.toarray(), arr.senses, arr.rhs, arr.lo, arr.hi)
        assert res.status == status == "optimal"
        assert res.objective == pytest.approx(obj, abs=1e-8)


def test_small_textbook_lp():
    inst = MilpInstance()
    x = inst.add_var("x", 0, math.inf)
    y = inst.add_var("y", 0, math.inf)
    inst.add_constraint({x: 1, y: 1}, LE, 4)
    inst.add_constraint({x: 1, y: 3}, LE, 6)
    inst.set_objective({x: -3, y: -2})
    sol = solve_lp(inst)
    assert sol.objective == pytest.approx(-12.0)
    assert sol.values == pytest.approx([4.0, 0.0])


def test_unbounded_and_infeasible_lps():
    inst = MilpInstance()
    x = inst.add_var("x", 0, math.inf)
    inst.set_objective({x: -1})
    assert solve_lp(inst).status == "unbounded"
    inst = MilpInstance()
    x = inst.add_var("x", 0, 1)
    inst.add_constraint({x: 1}, GE, 2)
    assert solve_lp(inst).status == "infeasible"


def test_equality_rows_and_free_variables():
    inst = MilpInstance()
    x = inst.add_var("x", -math.inf, math.inf)
    y = inst.add_var("y", 0, 10)
    inst.add_constraint({x: 1, y: -1}, EQ, 2)
    inst.set_objective({y: 1})
    sol = solve_lp(inst)
    assert sol.objective == pytest.approx(0.0)
    assert sol.values[x] == pytest.approx(2.0)


def test_branch_and_bound_matches_brute_force_with_bound_sandwich():
    rng = np.random.default_rng(99)
    for _ in range(60):
        inst = random_milp(rng)
        best = brute_force_milp(inst)
        if not np.isfinite(best):
            with pytest.raises(Infeasible):
                solve_milp(inst, gap_tol=0.0)
            continue
        res = solve_milp(inst, gap_tol=0.0)
        assert res.objective == pytest.approx(best, rel=1e-6, abs=1e-6)
        assert res.bound <= best + 1e-6 <= res.objective + 2e-6
        assert inst.is_feasible(res.values)
        bounds = [e["bound"] for e in res.log if e["event"] == "bound"]
        assert all(b2 >= b1 for b1, b2 in zip(bounds, bounds[1:]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000), gap=st.sampled_from([0.0, 0.01, 0.1]))
def test_reported_gap_is_a_certificate(seed, gap):
    inst = random_milp(np.random.default_rng(seed))
    best = brute_force_milp(inst)
    if not np.isfinite(best):
        return
    res = solve_milp(inst, gap_tol=gap)
    assert res.bound <= best + 1e-6
    assert res.gap <= gap + 1e-9
    assert relative_gap(res.objective, best) <= gap + 1e-9


def test_knapsack():
    values = [10, 13, 7, 8, 9]
    weights = [5, 6, 3, 4, 4]
    inst = MilpInstance()
    xs = [inst.add_binary(f"b{i}") for i in range(5)]
    inst.add_constraint({x: w for x, w in zip(xs, weights)}, LE, 12)
    inst.set_objective({x: -v for x, v in zip(xs, values)})
    res = solve_milp(inst, gap_tol=0.0)
    assert res.objective == pytest.approx(-26.0)
    assert res.status == "optimal"


def test_limits_carry_partial_solution():
    rng = np.random.default_rng(5)
    inst = random_milp(rng, n_cont=3, n_bin=12, m=8)
    while not np.isfinite(brute_force_milp(inst)):
        inst = random_milp(rng, n_cont=3, n_bin=12, m=8)
    try:
        res = solve_milp(inst, gap_tol=0.0, node_limit=1)
    except LimitReached as exc:
        res = exc.solution
        assert res.status == "node_limit" and res.nodes == 1
    else:
        assert res.status == "optimal"
    quiet = solve_milp(inst, gap_tol=0.0, node_limit=1, raise_on_limit=False)
    assert quiet.nodes <= 1


def test_pattern_oracle_and_cap():
    rng = np.random.default_rng(3)
    inst = random_milp(rng)
    while not np.isfinite(brute_force_milp(inst)):
        inst = random_milp(rng)
    orc = enumerate_patterns(inst)
    assert orc.objective == pytest.approx(brute_force_milp(inst), abs=1e-7)
    assert orc.patterns == 2 ** 6
    big = MilpInstance()
    for i in range(21):
        big.add_binary(f"b{i}")
    with pytest.raises(TooManyBinaries):
        enumerate_patterns(big)


def test_lp_file_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    inst = random_milp(rng)
    inst.add_var("free", -math.inf, math.inf)
    text = format_lp(inst)
    back = parse_lp(text)
    assert format_lp(back) == text
    a, b = inst.arrays(), back.arrays()
    assert np.array_equal(a.A.toarray(), b.A.toarray())
    assert np.array_equal(a.binary, b.binary)
    assert np.array_equal(a.lo, b.lo) and np.array_equal(a.hi, b.hi)
    save_lp(tmp_path / "m.lp", inst)
    assert format_lp(load_lp(tmp_path / "m.lp")) == text
    with pytest.raises(ValueError):
        parse_lp("garbage")
