"""Neural CCG: master solves with exact blocks, scenario selection and stopping by surrogate."""
from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from .ccg_classic import SUCSolution, solve_master
from .errors import IterLimit
from .formulation.backend import HighsBackend, SolverBackend
from .formulation.builders import CommitmentSchedule, first_stage_cost
from .recourse import batch_evaluate
from .system_model import ScenarioSet, UCInstance

log = logging.getLogger(__name__)


class RecourseEstimator(Protocol):
    def estimate(self, z, loads) -> np.ndarray:
        """Estimated Q(z, xi_s) for each load in the (S, N, T) stack."""


class ConstantSurrogate:
    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def estimate(self, z, loads) -> np.ndarray:
        return np.full(len(loads), self.value)


class ExactOracleSurrogate:
    """Exact recourse LPs behind the surrogate interface (for testing the algorithm)."""

    def __init__(self, instance: UCInstance, backend: SolverBackend | None = None, workers: int | None = 1):
        self.instance = instance
        self.backend = backend or HighsBackend()
        self.workers = workers

    def estimate(self, z, loads) -> np.ndarray:
        evs = batch_evaluate(self.instance, np.rint(z).astype(int), list(loads), self.backend, self.workers)
        return np.array([e.cost for e in evs])


@dataclass
class NeuralRecord:
    k: int
    master_objective: float
    max_all: float
    max_materialized: float
    selected: int | None
    master_time: float
    scan_time: float
    n_materialized: int


@dataclass
class NeuralCCGTrace:
    records: list = field(default_factory=list)

    columns = ("k", "master_objective", "max_all", "max_materialized", "selected", "master_time", "scan_time", "n_materialized")

    def __len__(self):
        return len(self.records)

    def rows(self):
        for r in self.records:
            d = asdict(r)
            d["selected"] = "" if d["selected"] is None else d["selected"]
            yield [d[c] for c in self.columns]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.columns)
            w.writerows(self.rows())


def _check(surrogate, instance):
    check = getattr(surrogate, "check_instance", None)
    if check is not None:
        check(instance)


def recourse_action(surrogate, z, scenarios: ScenarioSet, instance: UCInstance | None = None):
    """Argmax over all scenarios of the surrogate estimate (lowest index on ties) and the estimates."""
    if instance is not None:
        _check(surrogate, instance)
    est = np.asarray(surrogate.estimate(z, scenarios.loads), float)
    if est.shape != (len(scenarios),) or not np.all(np.isfinite(est)):
        raise ValueError("surrogate must return one finite estimate per scenario")
    return int(np.argmax(est)), est


def default_eps(surrogate) -> float:
    """1e-3 x the surrogate's mean training target in $, or 1e-6 without one."""
    mean = getattr(surrogate, "mean_target", None)
    return 1e-3 * abs(mean) if mean else 1e-6


def solve_neural_ccg(instance: UCInstance, scenarios: ScenarioSet, surrogate, eps: float | None = None,
                     max_iter: int | None = None, backend: SolverBackend | None = None, *,
                     evaluate_final: bool = False, workers: int | None = None) -> SUCSolution:
    """Loop master -> surrogate scan until max over S <= max over S^k + eps.

    ``iterations`` counts materialized scenarios (bounded by S). The objective is
    the final master value; ``expected_cost`` is filled by an exact re-evaluation
    only with ``evaluate_final``. ``eps`` defaults to :func:`default_eps`.
    """
    eps = default_eps(surrogate) if eps is None else eps
    if eps <= 0:
        raise ValueError("eps must be > 0")
    _check(surrogate, instance)
    S = len(scenarios)
    max_iter = S if max_iter is None else max_iter
    backend = backend or HighsBackend()
    materialized: list[int] = []
    trace = NeuralCCGTrace()
    t_start = time.perf_counter()
    converged = False

    while True:
        t0 = time.perf_counter()
        res = solve_master(instance, scenarios, materialized, backend)
        t_master = time.perf_counter() - t0
        z = np.rint(res.values("z")).astype(int)
        theta = res.objective

        t0 = time.perf_counter()
        idx, est = recourse_action(surrogate, z, scenarios)
        t_scan = time.perf_counter() - t0
        top = float(est[idx])
        top_mat = float(est[materialized].max()) if materialized else -math.inf
        done = top <= top_mat + eps
        k = len(materialized)
        selected = None
        if not done:
            # a failed stopping test implies the argmax is new
            if idx in materialized:
                raise RuntimeError(f"surrogate selected materialized scenario {idx}")
            selected = idx
        trace.records.append(NeuralRecord(k, theta, top, top_mat, selected, t_master, t_scan, k))
        log.info("nccg k=%d theta=%.6f max=%.6g max_mat=%.6g", k, theta, top, top_mat)
        if done:
            converged = True
            break
        if k >= max_iter:
            break
        materialized.append(selected)

    sol = SUCSolution(
        CommitmentSchedule.from_z(instance, z), theta, math.nan, len(materialized), trace, "nccg",
        list(materialized), time.perf_counter() - t_start,
    )
    if evaluate_final:
        sol.expected_cost = true_expected_cost(instance, z, scenarios, backend, workers)
    if not converged:
        raise IterLimit(f"Neural CCG stopped after {max_iter} materializations", sol)
    return sol


def true_expected_cost(instance: UCInstance, z, scenarios: ScenarioSet, backend=None, workers=None) -> float:
    """c^T x + sum_s pi_s Q(z, xi_s) by exact LPs."""
    evs = batch_evaluate(instance, z, scenarios, backend, workers)
    return first_stage_cost(instance, z) + float(scenarios.probabilities @ np.array([e.cost for e in evs]))
