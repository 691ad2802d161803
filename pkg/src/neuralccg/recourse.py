"""Exact recourse evaluation Q(z, xi), parallel batches, and penalty calibration."""
from __future__ import annotations

import os
import weakref
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BackendFailure, BatchFailure, CalibrationFailed, InfeasibleCommitment, ShapeMismatch
from .formulation import checker
from .formulation.backend import HighsBackend, SolverBackend
from .formulation.builders import build_deterministic_uc, build_recourse_lp
from .formulation.model import Status
from .system_model import PenaltyConfig, Scenario, ScenarioSet, UCInstance, mean_scenario

WORKERS_ENV = "NEURALCCG_WORKERS"


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True, eq=False)
class RecourseEvaluation:
    cost: float
    dispatch: np.ndarray
    shed: float
    spill: float
    overload: float
    balance_duals: np.ndarray
    flow_up_duals: np.ndarray
    flow_lo_duals: np.ndarray

    @property
    def line_duals(self) -> np.ndarray:
        """Combined line-limit shadow price per (line, period), >= 0."""
        return np.abs(self.flow_up_duals) + np.abs(self.flow_lo_duals)


class _Template:
    """Recourse LP with z-dependent bounds and load-dependent right-hand sides peeled off.

    The constraint matrix does not depend on (z, xi), so it is assembled once per
    instance and each evaluation only rewrites bound vectors.
    """

    def __init__(self, instance: UCInstance):
        model = build_recourse_lp(instance, _any_feasible(instance), instance.nominal_load)
        self.model = model
        self.c = model.objective_vector()
        self.a = model.matrix().tocsc()
        self.lb, self.ub = model.bounds()
        self.lo, self.hi = model.row_bounds()
        self.p_idx = model.var_blocks["p"].indices()
        self.bal = model.con_blocks["bal"].indices()
        self.has_lines = "flow_up" in model.con_blocks
        if self.has_lines:
            self.fup = model.con_blocks["flow_up"].indices()
            self.flo = model.con_blocks["flow_lo"].indices()
        self.shed = model.var_blocks["shed"].indices()
        self.spill = model.var_blocks["spill"].indices()
        self.over = model.var_blocks["overload"].indices()
        gd = instance.gen_data
        self.pmin = gd["p_min"][:, None]
        self.pmax = gd["p_max"][:, None]
        self.ptdf = instance.network.ptdf
        self.limits = instance.network.flow_limits[:, None]

    def arrays(self, z, load):
        lb, ub = self.lb.copy(), self.ub.copy()
        zf = np.asarray(z, float)
        lb[self.p_idx] = zf * self.pmin
        ub[self.p_idx] = zf * self.pmax
        lo, hi = self.lo.copy(), self.hi.copy()
        total = load.sum(axis=0)
        lo[self.bal] = total
        hi[self.bal] = total
        if self.has_lines:
            base = self.ptdf @ load
            hi[self.fup] = self.limits + base
            lo[self.flo] = base - self.limits
        return lb, ub, lo, hi


def _any_feasible(instance: UCInstance) -> np.ndarray:
    # a commitment that passes the logic checks: initial state held throughout
    on = instance.gen_data["initial_on"].astype(int)
    return np.repeat(on[:, None], instance.horizon, axis=1)


_templates: "weakref.WeakKeyDictionary[UCInstance, _Template]" = weakref.WeakKeyDictionary()


def _template(instance: UCInstance) -> _Template:
    tpl = _templates.get(instance)
    if tpl is None:
        tpl = _templates[instance] = _Template(instance)
    return tpl


def _as_load(xi) -> np.ndarray:
    return xi.net_load if isinstance(xi, Scenario) else np.asarray(xi, float)


def evaluate_recourse(instance: UCInstance, z, xi, backend: SolverBackend | None = None,
                      check: bool = True) -> RecourseEvaluation:
    """Solve the recourse LP for commitment ``z`` under net load ``xi``."""
    backend = backend or HighsBackend()
    load = _as_load(xi)
    z = np.asarray(z)
    G, T = instance.n_gens, instance.horizon
    if z.shape != (G, T) or load.shape != (instance.n_buses, T):
        raise ShapeMismatch(f"z {z.shape} / load {load.shape} do not match instance")
    if check:
        problems = checker.commitment_violations(instance, z)
        if problems:
            raise InfeasibleCommitment("; ".join(problems[:3]))

    if isinstance(backend, HighsBackend):
        tpl = _template(instance)
        lb, ub, lo, hi = tpl.arrays(z, load)
        status, obj, x, duals, _ = backend.solve_arrays(tpl.c, lb, ub, tpl.a, lo, hi)
        model = tpl.model
    else:
        model = build_recourse_lp(instance, z, load)
        res = backend.solve(model)
        status, obj, x, duals = res.status, res.objective, res.x, res.duals
    if status != Status.OPTIMAL:
        raise BackendFailure(f"recourse LP returned {status.value}", status)
    blk = model.var_blocks
    con = model.con_blocks
    fl = np.zeros((instance.n_lines, T))
    return RecourseEvaluation(
        cost=obj,
        dispatch=x[blk["p"].indices()],
        shed=float(x[blk["shed"].indices()].sum()),
        spill=float(x[blk["spill"].indices()].sum()),
        overload=float(x[blk["overload"].indices()].sum()),
        balance_duals=duals[con["bal"].indices()],
        flow_up_duals=duals[con["flow_up"].indices()] if "flow_up" in con else fl,
        flow_lo_duals=duals[con["flow_lo"].indices()] if "flow_lo" in con else fl.copy(),
    )


# --------------------------------------------------------------------------- batches

_worker_state: dict = {}


def _worker_init(instance, backend_cls, settings):
    _worker_state["instance"] = instance
    _worker_state["backend"] = backend_cls(settings)


def _worker_eval(args):
    i, z, load = args
    try:
        return i, evaluate_recourse(_worker_state["instance"], z, load, _worker_state["backend"]), None
    except Exception as exc:  # reported by index, re-raised in the parent
        return i, None, exc


def evaluate_pairs(instance: UCInstance, zs, loads, backend: SolverBackend | None = None,
                   workers: int | None = None, chunksize: int = 16) -> list[RecourseEvaluation]:
    """Evaluate Q for aligned sequences of commitments and loads, order preserved."""
    backend = backend or HighsBackend()
    workers = default_workers() if workers is None else workers
    jobs = [(i, np.asarray(z), _as_load(x)) for i, (z, x) in enumerate(zip(zs, loads))]
    results: list = [None] * len(jobs)
    failures = {}
    if workers <= 1 or len(jobs) <= 1:
        # one backend per worker; here the caller's backend is the only worker
        for i, z, load in jobs:
            try:
                results[i] = evaluate_recourse(instance, z, load, backend)
            except Exception as exc:
                failures[i] = exc
    else:
        with ProcessPoolExecutor(max_workers=workers, initializer=_worker_init,
                                 initargs=(instance, type(backend), backend.settings)) as pool:
            for i, ev, exc in pool.map(_worker_eval, jobs, chunksize=chunksize):
                if exc is not None:
                    failures[i] = exc
                results[i] = ev
    if failures:
        raise BatchFailure(failures)
    return results


def batch_evaluate(instance: UCInstance, z, scenarios, backend: SolverBackend | None = None,
                   workers: int | None = None) -> list[RecourseEvaluation]:
    """Q(z, xi_s) for every scenario, ordered by scenario index."""
    loads = scenarios.loads if isinstance(scenarios, ScenarioSet) else [_as_load(s) for s in scenarios]
    if len(loads) == 0:
        raise ValueError("batch_evaluate needs at least one scenario")
    return evaluate_pairs(instance, [z] * len(loads), loads, backend, workers)


def expected_recourse(instance: UCInstance, z, scenarios: ScenarioSet, backend=None, workers=None) -> float:
    evs = batch_evaluate(instance, z, scenarios, backend, workers)
    return float(np.dot(scenarios.probabilities, [e.cost for e in evs]))


# --------------------------------------------------------------------------- calibration


def calibrate_penalties(instance: UCInstance, backend: SolverBackend | None = None, *,
                        scenarios: ScenarioSet | None = None, variability=(0.7, 1.0),
                        floor: float | None = None) -> PenaltyConfig:
    """Penalties from balance/line duals of the UC under the mean scenario.

    Without an explicit scenario set the mean scenario is the nominal load scaled
    by the midpoint of ``variability`` (the expectation of uniform scaling).
    The MILP is solved, its binaries fixed, and the resulting LP re-solved for
    duals.
    """
    backend = backend or HighsBackend()
    if scenarios is not None:
        load = mean_scenario(scenarios).net_load
    else:
        load = instance.nominal_load * (0.5 * (variability[0] + variability[1]))
    if floor is None:
        floor = 10.0 * float(instance.gen_data["cost_energy"].max())
    if floor <= 0:
        raise ValueError("penalty floor must be > 0")
    milp = build_deterministic_uc(instance, load)
    res = backend.solve(milp)
    if not res.optimal:
        raise CalibrationFailed(f"deterministic UC under the mean scenario is {res.status.value}")
    lp = backend.solve(milp.fix_integers(res.x))
    if not lp.optimal or lp.duals is None:
        raise CalibrationFailed(f"fixed-commitment LP is {lp.status.value}")
    lam = np.abs(lp.block_duals("bal"))
    T, L = instance.horizon, instance.n_lines
    if L:
        mu = np.abs(lp.block_duals("flow_up")) + np.abs(lp.block_duals("flow_lo"))
    else:
        mu = np.zeros((0, T))
    bal = np.maximum(lam, floor)
    return PenaltyConfig(shed=bal, spill=bal.copy(), overload=np.maximum(mu, floor), floor=floor)
