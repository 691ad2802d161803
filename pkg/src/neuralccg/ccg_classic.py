"""Classical column-and-constraint generation for two-stage stochastic UC."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import AllMaterialized, BackendFailure, IterLimit
from .formulation.backend import HighsBackend, SolverBackend
from .formulation.builders import CommitmentSchedule, build_extensive_form, build_master, first_stage_cost
from .formulation.model import SolveResult
from .recourse import batch_evaluate
from .system_model import ScenarioSet, UCInstance

log = logging.getLogger(__name__)


@dataclass
class CCGRecord:
    k: int
    lb: float
    ub: float
    master_objective: float
    ub_k: float
    selected: tuple
    master_time: float
    subproblem_time: float
    n_materialized: int


@dataclass
class CCGTrace:
    records: list = field(default_factory=list)

    columns = ("k", "lb", "ub", "master_objective", "ub_k", "selected", "master_time", "subproblem_time", "n_materialized")

    def __len__(self):
        return len(self.records)

    def rows(self):
        for r in self.records:
            d = asdict(r)
            d["selected"] = " ".join(str(i) for i in d["selected"])
            yield [d[c] for c in self.columns]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            w.writerows(self.rows())

    def violations(self, rtol: float = 1e-6) -> list[str]:
        """Bound discipline: LB nondecreasing, UB nonincreasing, LB <= UB (relative slack)."""
        out = []
        prev = None
        for r in self.records:
            slack = rtol * max(1.0, abs(r.ub))
            if r.lb > r.ub + slack:
                out.append(f"k={r.k}: LB {r.lb} > UB {r.ub}")
            if prev is not None:
                if r.lb < prev.lb:
                    out.append(f"k={r.k}: LB decreased {prev.lb} -> {r.lb}")
                if r.ub > prev.ub:
                    out.append(f"k={r.k}: UB increased {prev.ub} -> {r.ub}")
            prev = r
        return out


@dataclass
class SUCSolution:
    schedule: CommitmentSchedule
    objective: float
    gap: float
    iterations: int
    trace: object
    method: str = "ccg"
    materialized: list = field(default_factory=list)
    solve_time: float = 0.0
    expected_cost: float | None = None  # exact c^T x + sum pi Q, diagnostic only

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "objective": self.objective,
            "gap": self.gap,
            "iterations": self.iterations,
            "materialized": list(self.materialized),
            "solve_time": self.solve_time,
            "expected_cost": self.expected_cost,
            "schedule": self.schedule.to_dict(),
        }


def select_scenario(costs: Sequence[float], materialized, k: int = 1):
    """Highest-cost scenario(s) not yet materialized, ties to the lowest index.

    Returns a single index for ``k == 1``, else a list of up to ``k`` indices.
    """
    taken = set(materialized)
    free = [i for i in range(len(costs)) if i not in taken]
    if not free:
        raise AllMaterialized("every scenario is already in the master problem")
    # stable sort on -cost keeps the lowest index first among ties
    order = sorted(free, key=lambda i: -costs[i])
    return order[0] if k == 1 else order[:k]


def solve_master(instance, scenarios, materialized, backend) -> SolveResult:
    res = backend.solve(build_master(instance, scenarios, materialized))
    if not res.optimal:
        raise BackendFailure(f"master problem returned {res.status.value}", res.status)
    return res


def solve_extensive_form(instance: UCInstance, scenarios: ScenarioSet, backend: SolverBackend | None = None) -> SUCSolution:
    backend = backend or HighsBackend()
    t0 = time.perf_counter()
    res = backend.solve(build_extensive_form(instance, scenarios))
    elapsed = time.perf_counter() - t0
    if not res.optimal:
        raise BackendFailure(f"extensive form returned {res.status.value}", res.status)
    sched = CommitmentSchedule.from_z(instance, res.values("z"))
    gap = (res.mip_gap or 0.0) * abs(res.objective)
    return SUCSolution(sched, res.objective, gap, 1, None, "ef", list(range(len(scenarios))), elapsed)


def solve_ccg(instance: UCInstance, scenarios: ScenarioSet, eps: float = 1e-6, max_iter: int | None = None,
              backend: SolverBackend | None = None, *, workers: int | None = None, top_k: int = 1,
              relative_gap: bool = False) -> SUCSolution:
    """Master/subproblem loop until ``UB - LB <= eps``.

    With ``relative_gap`` the test becomes ``(UB - LB) <= eps * |UB|``. The
    returned schedule is the incumbent that achieved the final UB.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    S = len(scenarios)
    max_iter = S + 1 if max_iter is None else max_iter
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    backend = backend or HighsBackend()
    probs = scenarios.probabilities
    materialized: list[int] = []
    lb, ub = -math.inf, math.inf
    incumbent = None
    trace = CCGTrace()
    t_start = time.perf_counter()
    converged = False

    for k in range(max_iter):
        t0 = time.perf_counter()
        res = solve_master(instance, scenarios, materialized, backend)
        t_master = time.perf_counter() - t0
        theta = res.objective
        lb = max(lb, theta)
        z = np.rint(res.values("z")).astype(int)

        t0 = time.perf_counter()
        evals = batch_evaluate(instance, z, scenarios, backend, workers)
        t_sub = time.perf_counter() - t0
        q = np.array([e.cost for e in evals])
        ub_k = first_stage_cost(instance, z) + float(probs @ q)
        if ub_k < ub:
            ub, incumbent = ub_k, z

        gap = ub - lb
        target = eps * abs(ub) if relative_gap else eps
        selected: tuple = ()
        if gap <= target:
            converged = True
        else:
            try:
                pick = select_scenario(q, materialized, top_k)
                selected = (pick,) if top_k == 1 else tuple(pick)
            except AllMaterialized:
                # with every block present LB equals UB up to solver tolerance
                log.warning("all scenarios materialized with gap %.6g > eps %.6g", gap, target)
                converged = True
        trace.records.append(CCGRecord(k, lb, ub, theta, ub_k, selected, t_master, t_sub, len(materialized)))
        log.info("ccg k=%d LB=%.6f UB=%.6f gap=%.6g |S^k|=%d", k, lb, ub, gap, len(materialized))
        if converged:
            break
        materialized.extend(selected)

    sol = SUCSolution(
        CommitmentSchedule.from_z(instance, incumbent), ub, ub - lb, len(trace), trace, "ccg",
        list(materialized), time.perf_counter() - t_start, ub,
    )
    if not converged:
        raise IterLimit(f"CCG stopped after {max_iter} iterations with gap {ub - lb:.6g}", sol)
    return sol
