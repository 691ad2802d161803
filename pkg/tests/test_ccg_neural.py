import math

import numpy as np
import pytest

from _oracles import all_commitments, dispatch_cost, first_stage
from conftest import gen, single_bus
from neuralccg.ccg_classic import solve_ccg
from neuralccg.ccg_neural import (ConstantSurrogate, ExactOracleSurrogate, default_eps, recourse_action,
                                  solve_neural_ccg, true_expected_cost)
from neuralccg.errors import IterLimit, StaleModel
from neuralccg.surrogate import MLP, Normalizer, SurrogateModel
from neuralccg.system_model import Scenario, ScenarioSet, generate_scenarios, make_random_instance


class Fixed:
    def __init__(self, values):
        self.values = np.asarray(values, float)

    def estimate(self, z, loads):
        return self.values.copy()


def check_trace(sol, S):
    seen = []
    for r in sol.trace.records:
        assert r.max_materialized <= r.max_all
        if r.selected is not None:
            assert r.selected not in seen
            seen.append(r.selected)
    assert seen == sol.materialized
    assert sol.iterations == len(sol.materialized) <= S
    thetas = [r.master_objective for r in sol.trace.records]
    assert all(b >= a - 1e-6 * abs(a) for a, b in zip(thetas, thetas[1:]))


# ---------------------------------------------------------------- recourse action


def test_action_argmax(toy):
    inst, _ = toy
    sc = ScenarioSet((Scenario(inst.nominal_load, 0.5), Scenario(inst.nominal_load, 0.5)))
    z = np.ones((inst.n_gens, inst.horizon), int)
    idx, est = recourse_action(Fixed([5.0, 3.0]), z, sc)
    assert idx == 0 and est.tolist() == [5.0, 3.0]
    assert recourse_action(ConstantSurrogate(7.0), z, sc)[0] == 0
    assert recourse_action(Fixed([1.0, 4.0]), z, sc)[0] == 1


@pytest.mark.parametrize("values", [[1.0, math.nan], [1.0, math.inf], [1.0]])
def test_action_rejects_bad_estimates(toy, values):
    inst, _ = toy
    sc = ScenarioSet((Scenario(inst.nominal_load, 0.5), Scenario(inst.nominal_load, 0.5)))
    with pytest.raises(ValueError):
        recourse_action(Fixed(values), np.ones((inst.n_gens, inst.horizon), int), sc)


def test_oracle_matches_classical_first_selection(medium):
    inst, sc = medium
    ccg = solve_ccg(inst, sc, eps=1e-6, workers=1)
    nccg = solve_neural_ccg(inst, sc, ExactOracleSurrogate(inst), eps=1e-6)
    assert nccg.trace.records[0].selected == ccg.trace.records[0].selected[0]


# ---------------------------------------------------------------- loop


def test_constant_surrogate_one_scenario(medium):
    inst, sc = medium
    sol = solve_neural_ccg(inst, sc, ConstantSurrogate(100.0), eps=1e-6)
    assert sol.iterations == 1 and sol.materialized == [0]
    assert len(sol.trace) == 2
    last = sol.trace.records[-1]
    assert last.max_all == last.max_materialized


def test_dominant_scenario():
    gens = [gen(0, cost=20.0, p_max=100.0, cost_startup=50.0), gen(1, cost=40.0, p_max=100.0, cost_noload=5.0)]
    inst = single_bus(gens, [[150.0, 150.0]])
    loads = [np.array([[300.0, 300.0]]), np.array([[100.0, 120.0]]), np.array([[80.0, 90.0]])]
    sc = ScenarioSet(tuple(Scenario(ld, p) for ld, p in zip(loads, (0.2, 0.5, 0.3))))
    for z in all_commitments(inst):
        q = [dispatch_cost(inst, z, ld) for ld in loads]
        assert q[0] > max(q[1:])
    sol = solve_neural_ccg(inst, sc, ExactOracleSurrogate(inst), eps=1e-6)
    assert sol.materialized == [0]
    best = min(first_stage(inst, z) + 0.2 * dispatch_cost(inst, z, loads[0]) for z in all_commitments(inst))
    assert sol.objective == pytest.approx(best, rel=1e-6)


def test_oracle_run_invariants(medium):
    inst, sc = medium
    sol = solve_neural_ccg(inst, sc, ExactOracleSurrogate(inst), eps=1e-6, evaluate_final=True, workers=1)
    check_trace(sol, len(sc))
    assert sol.expected_cost == pytest.approx(true_expected_cost(inst, sol.schedule.z, sc, workers=1))
    assert sol.objective <= sol.expected_cost * (1 + 1e-9)
    assert math.isnan(sol.gap)


@pytest.mark.parametrize("seed", range(5))
def test_random_weight_surrogate_terminates(seed):
    inst = make_random_instance(4, 3, 6, seed=seed)
    sc = generate_scenarios(inst.nominal_load, 12, seed=seed)
    n_in = (inst.n_gens + inst.n_buses) * inst.horizon
    model = SurrogateModel(MLP.init([n_in, 16, 8, 1], seed=seed), Normalizer.for_instance(inst, [1e4]),
                           inst.digest(), None, inst.n_gens, inst.n_buses, inst.horizon, 1e4)
    sol = solve_neural_ccg(inst, sc, model)
    check_trace(sol, len(sc))


class Shifting:
    """Puts the largest estimate on scenario S-1, then S-2, ... on successive calls."""

    def __init__(self):
        self.calls = 0

    def estimate(self, z, loads):
        self.calls += 1
        est = np.zeros(len(loads))
        est[(len(loads) - self.calls) % len(loads)] = 100.0 * self.calls
        return est


def test_iter_limit(medium):
    inst, sc = medium
    with pytest.raises(IterLimit) as info:
        solve_neural_ccg(inst, sc, Shifting(), eps=0.5, max_iter=2)
    sol = info.value.solution
    assert sol.materialized == [len(sc) - 1, len(sc) - 2]


def test_adversarial_surrogate_exhausts_scenarios(toy):
    inst, sc = toy
    sol = solve_neural_ccg(inst, sc, Shifting(), eps=0.5)
    assert sol.iterations == len(sc)
    assert sorted(sol.materialized) == list(range(len(sc)))


def test_eps_and_staleness(toy):
    inst, sc = toy
    with pytest.raises(ValueError):
        solve_neural_ccg(inst, sc, ConstantSurrogate(), eps=0.0)
    other = make_random_instance(4, 3, 3, seed=12)
    n_in = (other.n_gens + other.n_buses) * other.horizon
    stale = SurrogateModel(MLP.init([n_in, 4, 1], seed=0), Normalizer.identity(n_in), other.digest(), None,
                           other.n_gens, other.n_buses, other.horizon)
    with pytest.raises(StaleModel):
        solve_neural_ccg(inst, sc, stale, eps=1.0)


def test_default_eps():
    assert default_eps(ConstantSurrogate()) == 1e-6
    model = SurrogateModel(MLP.init([2, 1], seed=0), Normalizer.identity(2), "x", None, 1, 0, 1, 5000.0)
    assert default_eps(model) == pytest.approx(5.0)


def test_trace_csv(medium, tmp_path):
    inst, sc = medium
    sol = solve_neural_ccg(inst, sc, ExactOracleSurrogate(inst), eps=1e-6)
    path = tmp_path / "t.csv"
    sol.trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("k,master_objective,max_all")
    assert len(lines) == len(sol.trace) + 1
