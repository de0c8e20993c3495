import math
import re

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import enumerate_optimum, highs_lp_file, linprog_max, random_milp
from p2psched.milp import (BINARY, CONTINUOUS, EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED, MilpModel, ModelError,
                           SolverOptions, export_lp_format, solve_lp, solve_milp)
from p2psched.milp.lpformat import sanitize


def _model(*vars_, obj=None, rows=(), constant=0.0):
    m = MilpModel("t")
    for spec in vars_:
        m.add_var(*spec)
    for k, (terms, rel, rhs) in enumerate(rows):
        m.add_constraint(f"r{k}", terms, rel, rhs)
    m.set_objective(obj or {}, constant)
    return m


def feasible_milp(seed, **kw):
    rng = np.random.default_rng(seed)
    while True:
        m = random_milp(rng, **kw)
        if solve_milp(m).status == OPTIMAL:
            return m


def knapsack():
    return _model(("a", BINARY, 0, 1), ("b", BINARY, 0, 1), obj={"a": 3, "b": 2},
                  rows=[({"a": 1, "b": 1}, LE, 1)])


# LP ----------------------------------------------------------------------------

def test_lp_single_bound():
    sol = solve_lp(_model(("x",), obj={"x": 1}, rows=[({"x": 1}, LE, 3)]))
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(3)


def test_lp_single_row():
    sol = solve_lp(_model(("x",), ("y",), obj={"x": 1, "y": 1}, rows=[({"x": 1, "y": 1}, LE, 1)]))
    assert sol.objective == pytest.approx(1)
    assert sol["x"] + sol["y"] == pytest.approx(1)


def test_lp_infeasible_and_unbounded():
    bad = _model(("x",), obj={"x": 1}, rows=[({"x": 1}, GE, 2), ({"x": 1}, LE, 1)])
    assert solve_lp(bad).status == INFEASIBLE
    open_ = _model(("x",), ("y",), obj={"x": 1}, rows=[({"x": 1, "y": -1}, LE, 1)])
    assert solve_lp(open_).status == UNBOUNDED


def test_lp_equalities_free_and_negative_bounds():
    m = _model(("x", CONTINUOUS, -math.inf, math.inf), ("y", CONTINUOUS, -2, 5), obj={"x": -1, "y": 1},
               rows=[({"x": 1, "y": -2}, EQ, -1), ({"x": 1}, GE, -10)])
    sol = solve_lp(m)
    assert sol.objective == pytest.approx(linprog_max(m))
    assert m.max_violation(sol.values) < 1e-9


@pytest.mark.parametrize("seed", range(15))
def test_lp_relaxation_bounds_enumeration(seed):
    m = random_milp(np.random.default_rng(seed), n_bin=10, n_cont=0, m=8)
    relax = solve_lp(m)
    best = enumerate_optimum(m)
    if relax.status == INFEASIBLE:
        assert best == -math.inf
        return
    assert relax.objective == pytest.approx(linprog_max(m), abs=1e-7)
    assert relax.objective >= best - 1e-9


@pytest.mark.parametrize("seed", range(10))
def test_lp_objective_recomputes_from_values(seed):
    m = random_milp(np.random.default_rng(100 + seed), n_bin=4, n_cont=20, m=15)
    sol = solve_lp(m)
    if sol.status == OPTIMAL:
        assert abs(m.relaxed().objective_value(sol.values) - sol.objective) <= 1e-9
        assert m.relaxed().max_violation(sol.values) <= 1e-7


def test_lp_degenerate_cycling_prone():
    # a classic degenerate instance on which textbook Dantzig pivoting cycles
    m = _model(*[(f"x{j}",) for j in range(4)],
               obj={"x0": 0.75, "x1": -150, "x2": 1 / 50, "x3": -6},
               rows=[({"x0": 0.25, "x1": -60, "x2": -1 / 25, "x3": 9}, LE, 0),
                     ({"x0": 0.5, "x1": -90, "x2": -1 / 50, "x3": 3}, LE, 0),
                     ({"x2": 1}, LE, 1)])
    sol = solve_lp(m)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(0.05)


# MILP ----------------------------------------------------------------------------

def test_milp_forced_optimum():
    sol = solve_milp(knapsack())
    assert sol.status == OPTIMAL and sol.objective == pytest.approx(3)
    assert sol["a"] == pytest.approx(1) and sol["b"] == pytest.approx(0)


@pytest.mark.parametrize("seed", range(6))
def test_milp_without_binaries_matches_lp(seed):
    m = random_milp(np.random.default_rng(seed), n_bin=0, n_cont=15, m=8)
    a, b = solve_lp(m), solve_milp(m)
    assert a.status == b.status
    assert a.values == b.values
    if a.status == OPTIMAL:
        assert a.objective == b.objective


@pytest.mark.parametrize("seed", range(20))
def test_milp_matches_enumeration(seed):
    m = random_milp(np.random.default_rng(seed), n_bin=8, n_cont=12)
    sol = solve_milp(m)
    best = enumerate_optimum(m)
    if best == -math.inf:
        assert sol.status == INFEASIBLE
        return
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(best, abs=1e-6)
    assert m.max_violation(sol.values) <= 1e-7
    for v in m.variables:
        if v.kind == BINARY:
            assert min(abs(sol[v.name]), abs(sol[v.name] - 1)) <= 1e-6
    assert abs(m.objective_value(sol.values) - sol.objective) <= 1e-9


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n_bin=st.integers(1, 12), m=st.integers(3, 12))
def test_milp_enumeration_property(seed, n_bin, m):
    model = random_milp(np.random.default_rng(seed), n_bin=n_bin, n_cont=6, m=m)
    sol = solve_milp(model)
    best = enumerate_optimum(model)
    if best == -math.inf:
        assert sol.status == INFEASIBLE
    else:
        assert sol.objective == pytest.approx(best, abs=1e-6)


def test_milp_infeasible_root():
    m = _model(("a", BINARY, 0, 1), obj={"a": 1}, rows=[({"a": 1}, GE, 2)])
    assert solve_milp(m).status == INFEASIBLE


def test_milp_integer_infeasible_after_branching():
    m = _model(("a", BINARY, 0, 1), ("b", BINARY, 0, 1), obj={"a": 1},
               rows=[({"a": 2, "b": 2}, EQ, 1)])
    assert solve_milp(m).status == INFEASIBLE


@pytest.mark.parametrize("seed", range(8))
def test_milp_incumbent_never_decreases(seed):
    m = feasible_milp(seed, n_bin=12, n_cont=10, m=12)
    sol = solve_milp(m)
    assert any(sol.trace)
    for block_trace in sol.trace:
        assert all(b >= a for a, b in zip(block_trace, block_trace[1:]))


def test_milp_deterministic():
    m = feasible_milp(11, n_bin=12, n_cont=10, m=12)
    a, b = solve_milp(m), solve_milp(m)
    assert a.values == b.values and a.objective == b.objective and a.node_count == b.node_count


def test_milp_time_budget_reports_incumbent_gap():
    m = feasible_milp(2, n_bin=12, n_cont=10, m=12)
    sol = solve_milp(m, SolverOptions(time_budget=1e-9))
    assert sol.status == "time_limit"
    if sol.values:
        assert sol.gap >= 0 and m.max_violation(sol.values) <= 1e-7


def test_options_must_be_positive():
    with pytest.raises(ValueError):
        SolverOptions(abs_gap=0)


def test_model_invariants():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("x")
    with pytest.raises(ModelError):
        m.add_var("b", BINARY, 0, 2)
    with pytest.raises(ModelError):
        m.add_constraint("r", {"nope": 1}, LE, 0)
    m.add_constraint("r", {"x": 1}, LE, 0)
    with pytest.raises(ModelError):
        m.add_constraint("r", {"x": 1}, LE, 0)


# LP export -------------------------------------------------------------------------

def test_export_empty_model():
    text = export_lp_format(MilpModel("empty"))
    assert text.strip().splitlines()[-1] == "End"
    assert len(text.strip().splitlines()) == 2


def test_export_knapsack_round_trip():
    text = export_lp_format(knapsack())
    for section in ("Maximize", "Subject To", "Binary", "End"):
        assert section in text
    status, obj = highs_lp_file(text)
    assert status == "Optimal" and obj == pytest.approx(3)


@pytest.mark.parametrize("seed", range(12))
def test_export_random_round_trip(seed):
    m = random_milp(np.random.default_rng(seed), n_bin=8, n_cont=12)
    status, obj = highs_lp_file(export_lp_format(m))
    sol = solve_milp(m)
    if sol.status == INFEASIBLE:
        assert status == "Infeasible"
    else:
        assert obj == pytest.approx(sol.objective, abs=1e-6)


def test_export_sanitizes_names_without_collisions():
    m = _model(("a[1]", BINARY, 0, 1), ("a(1)", BINARY, 0, 1), ("End", CONTINUOUS, -1, 4),
               obj={"a[1]": 3, "a(1)": 2, "End": 0.5}, constant=1.5,
               rows=[({"a[1]": 1, "a(1)": 1}, LE, 1), ({"End": 1, "a[1]": 2}, GE, -3)])
    text = export_lp_format(m)
    mapping = dict(re.findall(r"^\\ (\S+) = (.+)$", text, flags=re.M))
    assert mapping["a_1"] == "a[1]" and mapping["a_1_1"] == "a(1)" and mapping["n_End"] == "End"
    status, obj = highs_lp_file(text)
    assert obj == pytest.approx(solve_milp(m).objective)


@pytest.mark.parametrize("raw", ["PT2G[c0,u1,t3]", "3x", "e12", "max", "a b", "bounds"])
def test_sanitize_produces_legal_identifiers(raw):
    s = sanitize(raw)
    assert re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", s)
    assert s.lower() not in {"max", "bounds"} and not s[0] in "eE0123456789"
