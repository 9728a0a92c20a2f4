#!/usr/bin/env python3
"""
线性规划与 0-1 规划求解
"""
import numpy as np
import pytest

from core.errors import ProgramError, SolverError
from core.opt_engine import (
    GE,
    LE,
    Budget,
    Cut,
    LinearProgram,
    LinExpr,
    apply_cuts,
    export_lp,
    solve_lp,
    solve_mip,
)
from core.verify import enumerate_optimum, random_milp, solver_oracle


def _two_var_lp() -> LinearProgram:
    lp = LinearProgram("two_var")
    lp.add_var("x")
    lp.add_var("y")
    x, y = lp.x("x"), lp.x("y")
    lp.add_constraint(x + y * 2, LE, 4.0)
    lp.add_constraint(x * 3 + y, LE, 6.0)
    lp.set_objective(-x - y)
    return lp


def _knapsack() -> LinearProgram:
    lp = LinearProgram("knapsack")
    for name in "abc":
        lp.add_binary(name)
    a, b, c = lp.x("a"), lp.x("b"), lp.x("c")
    lp.add_constraint(a * 2 + b * 3 + c, LE, 5.0, name="weight")
    lp.set_objective(-(a * 5 + b * 4 + c * 3))
    return lp


def test_linexpr_arithmetic():
    expr = 2 * LinExpr.var(0) - LinExpr.var(1) + 3.0
    assert expr.value(np.array([1.0, 4.0])) == pytest.approx(1.0)
    assert (expr - expr).terms == {}
    assert (expr * 0).const == 0.0


def test_lp_optimum():
    result = solve_lp(_two_var_lp())
    assert result.status == "optimal"
    assert result.objective == pytest.approx(-2.8)
    np.testing.assert_allclose(result.x, [1.6, 1.2], atol=1e-7)


def test_lp_infeasible():
    lp = LinearProgram()
    lp.add_var("x")
    lp.add_constraint(lp.x("x"), LE, -1.0)
    assert solve_lp(lp).status == "infeasible"


def test_lp_unbounded():
    lp = LinearProgram()
    lp.add_var("x")
    lp.add_constraint(lp.x("x"), GE, 1.0)
    lp.set_objective(-lp.x("x"))
    assert solve_lp(lp).status == "unbounded"


def test_lp_free_variable_and_equality():
    lp = LinearProgram()
    lp.add_var("x", lb=-np.inf)
    lp.add_constraint(lp.x("x"), "=", -3.0)
    lp.set_objective(lp.x("x"))
    result = solve_lp(lp)
    assert result.status == "optimal"
    assert result.x[0] == pytest.approx(-3.0)


def test_knapsack():
    solution = solve_mip(_knapsack())
    assert solution.status == "optimal"
    assert solution.objective == pytest.approx(-9.0)
    assert (solution.value("a"), solution.value("b"), solution.value("c")) == (1.0, 1.0, 0.0)


def test_warm_start_does_not_change_optimum():
    solution = solve_mip(_knapsack(), warm_starts=[{"a": 1.0, "b": 0.0, "c": 1.0}])
    assert solution.objective == pytest.approx(-9.0)


def test_mixed_program():
    lp = LinearProgram("mixed")
    lp.add_var("x", 0.0, 10.0)
    lp.add_binary("z")
    lp.add_constraint(lp.x("x"), GE, lp.x("z") * 3)
    lp.set_objective(lp.x("x") - lp.x("z") * 10)
    solution = solve_mip(lp)
    assert solution.objective == pytest.approx(-7.0)
    assert solution.value("x") == pytest.approx(3.0)


def test_infeasible_mip():
    lp = LinearProgram()
    lp.add_binary("z")
    lp.add_constraint(lp.x("z"), GE, 2.0)
    solution = solve_mip(lp)
    assert solution.status == "infeasible"
    assert not solution.has_solution
    with pytest.raises(SolverError):
        solution.value("z")


def test_unknown_backend():
    with pytest.raises(SolverError):
        solve_mip(_knapsack(), backend="cplex")


def test_highs_backend_agrees():
    pytest.importorskip("scipy")
    solution = solve_mip(_knapsack(), Budget(), backend="highs")
    assert solution.objective == pytest.approx(-9.0)


def test_duplicate_variable_rejected():
    lp = LinearProgram()
    lp.add_var("x")
    with pytest.raises(ProgramError):
        lp.add_var("x")


def test_unknown_variable_rejected():
    with pytest.raises(ProgramError):
        LinearProgram().x("missing")


def test_cuts():
    lp = _knapsack()
    cut = apply_cuts(lp, [Cut({"a": 1.0}, LE, 0.0, "no_a")])
    assert cut.n_rows == lp.n_rows + 1
    assert solve_mip(cut).objective == pytest.approx(-7.0)
    with pytest.raises(ProgramError):
        apply_cuts(lp, [Cut({"ghost": 1.0}, LE, 0.0)])


def test_constant_rows_are_checked_not_stored():
    lp = LinearProgram()
    lp.add_var("x")
    assert lp.add_constraint(LinExpr(const=1.0), LE, 2.0) is None
    assert lp.n_rows == 0


def test_export_lp_sections():
    text = export_lp(_knapsack())
    for section in ("Minimize", "Subject To", "Bounds", "Binaries", "End"):
        assert section in text
    assert " weight: 2 a + 3 b + 1 c <= 5" in text
    assert text.endswith("End\n")


def test_random_instances_match_enumeration():
    for seed in (3, 7, 10):
        lp = random_milp(seed, max_binaries=8, max_rows=10)
        expected = enumerate_optimum(lp)
        solution = solve_mip(lp, Budget(nodes=100_000, seconds=60.0))
        if expected is None:
            assert not solution.has_solution
        else:
            assert solution.objective == pytest.approx(expected)


def test_solver_oracle_battery_small():
    report = solver_oracle(seeds=range(1, 6))
    assert report.cases == 5
    assert report.passed, report.failures


def test_lp_bound_attained():
    lp = LinearProgram()
    lp.add_var("x", 0.0, 1.0)
    lp.set_objective(-lp.x("x"))
    result = solve_lp(lp)
    assert result.status == "optimal"
    assert result.objective == pytest.approx(-1.0)


def test_lp_tight_corner_with_ge_row():
    lp = LinearProgram()
    lp.add_var("x", 0.0, 1.0)
    lp.add_var("y", 0.0, 1.0)
    lp.add_constraint(lp.x("x") + lp.x("y"), GE, 2.0)
    lp.set_objective(lp.x("x") + lp.x("y"))
    result = solve_lp(lp)
    assert result.status == "optimal"
    assert result.objective == pytest.approx(2.0)
    np.testing.assert_allclose(result.x, [1.0, 1.0], atol=1e-7)


def test_lp_contradictory_row():
    lp = LinearProgram()
    lp.add_var("x", 0.0, 1.0)
    lp.add_constraint(lp.x("x") * 0.0, GE, 1.0)
    assert solve_lp(lp).status == "infeasible"


def test_lp_mixed_senses():
    lp = LinearProgram()
    for name in ("x", "y", "z"):
        lp.add_var(name, 0.0, 10.0)
    x, y, z = lp.x("x"), lp.x("y"), lp.x("z")
    lp.add_constraint(x + y + z, "=", 6.0)
    lp.add_constraint(x - y, GE, 1.0)
    lp.add_constraint(z, LE, 2.0)
    lp.set_objective(x * 2 + y + z * 3)
    result = solve_lp(lp)
    assert result.status == "optimal"
    # z=0, x-y>=1, x+y=6 → x=3.5, y=2.5
    assert result.objective == pytest.approx(9.5)
    assert not lp.violations(result.x)


def test_binary_pair_with_row():
    lp = LinearProgram("pair")
    lp.add_binary("x")
    lp.add_binary("y")
    lp.add_constraint(lp.x("x") + lp.x("y"), LE, 1.0)
    lp.set_objective(-(lp.x("x") + lp.x("y")))
    solution = solve_mip(lp)
    assert solution.status == "optimal"
    assert solution.objective == pytest.approx(-1.0)


def test_knapsack_three_items():
    lp = LinearProgram("knapsack3")
    for name in ("x1", "x2", "x3"):
        lp.add_binary(name)
    x1, x2, x3 = lp.x("x1"), lp.x("x2"), lp.x("x3")
    lp.add_constraint(x1 * 2 + x2 * 2 + x3, LE, 3.0)
    lp.set_objective(-(x1 * 3 + x2 * 2 + x3 * 2))
    solution = solve_mip(lp)
    assert solution.objective == pytest.approx(-5.0)
    assert (solution.value("x1"), solution.value("x2"), solution.value("x3")) == (1.0, 0.0, 1.0)


def test_warm_starts_share_the_node_budget():
    lp = random_milp(11, max_binaries=12, max_rows=12)
    binaries = [lp.names[i] for i in lp.binaries]
    starts = [{name: float((k >> j) & 1) for j, name in enumerate(binaries[:3])} for k in range(8)]
    solution = solve_mip(lp, Budget(nodes=12, seconds=60.0), warm_starts=starts)
    assert solution.nodes <= 12
