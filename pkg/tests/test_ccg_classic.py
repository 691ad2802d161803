import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _oracles import commitment_feasible, dispatch_cost, enumerate_suc, first_stage
from neuralccg.ccg_classic import select_scenario, solve_ccg, solve_extensive_form
from neuralccg.errors import AllMaterialized, IterLimit
from neuralccg.formulation.checker import commitment_violations
from neuralccg.system_model import Scenario, ScenarioSet, generate_scenarios, make_random_instance


def assert_trace_ok(sol, reference=None, rtol=1e-6):
    assert sol.trace.violations(rtol) == []
    for r in sol.trace.records:
        if reference is not None:
            slack = rtol * abs(reference)
            assert r.lb <= reference + slack
            assert reference <= r.ub + slack
    assert sol.objective == sol.trace.records[-1].ub
    assert sol.gap == pytest.approx(sol.trace.records[-1].ub - sol.trace.records[-1].lb)


# ---------------------------------------------------------------- selection


def test_select_ties_lowest_index():
    assert select_scenario([5, 9, 9], []) == 1


def test_select_skips_materialized():
    assert select_scenario([5, 9, 9], {1}) == 2


def test_select_all_materialized():
    with pytest.raises(AllMaterialized):
        select_scenario([5, 9, 9], [0, 1, 2])


def test_select_top_k():
    assert select_scenario([1, 7, 3, 7], [], k=3) == [1, 3, 2]


# ---------------------------------------------------------------- loop


def test_single_scenario(toy):
    inst, sc = toy
    one = ScenarioSet((Scenario(sc[0].net_load, 1.0),))
    ef = solve_extensive_form(inst, one)
    sol = solve_ccg(inst, one, eps=1e-6 * abs(ef.objective))
    assert sol.iterations <= 2
    assert sol.objective == pytest.approx(ef.objective, rel=1e-6)


def test_infinite_eps_stops_immediately(toy):
    inst, sc = toy
    sol = solve_ccg(inst, sc, eps=math.inf)
    assert sol.iterations == 1
    assert len(sol.trace) == 1 and sol.trace.records[0].selected == ()
    assert sol.materialized == []


def test_matches_enumeration(toy):
    inst, sc = toy
    best = enumerate_suc(inst, sc.loads, sc.probabilities)
    sol = solve_ccg(inst, sc, eps=1e-6 * best)
    assert sol.objective == pytest.approx(best, rel=1e-6)
    assert_trace_ok(sol, best)
    z = sol.schedule.z
    assert commitment_feasible(inst, z)
    exact = first_stage(inst, z) + sum(p * dispatch_cost(inst, z, ld) for p, ld in zip(sc.probabilities, sc.loads))
    assert sol.objective == pytest.approx(exact, rel=1e-6)


def test_medium_against_extensive_form(medium):
    inst, sc = medium
    ef = solve_extensive_form(inst, sc)
    sol = solve_ccg(inst, sc, eps=1e-6 * abs(ef.objective), workers=1)
    assert sol.objective == pytest.approx(ef.objective, rel=1e-6)
    assert sol.iterations <= len(sc) + 1
    assert_trace_ok(sol, ef.objective)
    assert commitment_violations(inst, sol.schedule.z) == []
    assert len(set(sol.materialized)) == len(sol.materialized)


def test_relative_gap_mode(medium):
    inst, sc = medium
    ef = solve_extensive_form(inst, sc)
    sol = solve_ccg(inst, sc, eps=1e-6, relative_gap=True, workers=1)
    assert sol.objective == pytest.approx(ef.objective, rel=1e-6)


def test_iter_limit_carries_solution(medium):
    inst, sc = medium
    with pytest.raises(IterLimit) as info:
        solve_ccg(inst, sc, eps=0.0, max_iter=2, workers=1)
    sol = info.value.solution
    assert sol.iterations == 2
    assert sol.gap > 0
    assert commitment_violations(inst, sol.schedule.z) == []


@pytest.mark.parametrize("eps,max_iter", [(-1.0, None), (1.0, 0)])
def test_bad_arguments(toy, eps, max_iter):
    inst, sc = toy
    with pytest.raises(ValueError):
        solve_ccg(inst, sc, eps=eps, max_iter=max_iter)


def test_trace_csv(medium, tmp_path):
    inst, sc = medium
    sol = solve_ccg(inst, sc, eps=1e-3, workers=1)
    path = tmp_path / "trace.csv"
    sol.trace.to_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0][:3] == ["k", "lb", "ub"]
    assert len(rows) == len(sol.trace) + 1
    assert [int(r[0]) for r in rows[1:]] == list(range(len(sol.trace)))


@settings(max_examples=12, deadline=None)
@given(st.integers(2, 5), st.integers(1, 4), st.integers(1, 6), st.integers(1, 6), st.integers(0, 10**6))
def test_bound_sandwich(n_buses, n_gens, horizon, n_scen, seed):
    inst = make_random_instance(n_buses, n_gens, horizon, seed=seed)
    sc = generate_scenarios(inst.nominal_load, n_scen, (0.7, 1.0), seed + 1)
    ef = solve_extensive_form(inst, sc)
    sol = solve_ccg(inst, sc, eps=1e-6 * abs(ef.objective), workers=1)
    assert sol.iterations <= n_scen + 1
    assert sol.objective == pytest.approx(ef.objective, rel=1e-6)
    assert_trace_ok(sol, ef.objective)
