"""Benchmark harness: methods x scenario counts over K seeded scenario draws."""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .ccg_classic import solve_ccg, solve_extensive_form
from .ccg_neural import ConstantSurrogate, ExactOracleSurrogate, default_eps, solve_neural_ccg, true_expected_cost
from .errors import DivisionGuard
from .formulation.backend import SolverBackend, make_backend
from .system_model import UCInstance, generate_scenarios

log = logging.getLogger(__name__)

METHODS = ("ef", "ccg", "nccg")


def compute_metrics(obj: float, obj_ref: float, t: float, t_ref: float) -> tuple[float, float]:
    """Optimality gap in percent and speedup factor relative to a reference run."""
    if not obj_ref > 0:
        raise DivisionGuard(f"reference objective must be > 0, got {obj_ref}")
    if not t > 0:
        raise DivisionGuard(f"method time must be > 0, got {t}")
    return 100.0 * (obj - obj_ref) / obj_ref, t_ref / t


@dataclass
class BenchRow:
    method: str
    n_scenarios: int
    objective: float
    time: float
    gap_pct: float
    speedup: float
    iterations: float


@dataclass
class BenchReport:
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    columns = ("method", "n_scenarios", "objective", "time", "gap_pct", "speedup", "iterations")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        for k in sorted(self.meta):
            w.writerow([f"# {k}", self.meta[k]])
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([r.method, r.n_scenarios] + [repr(float(getattr(r, c))) for c in self.columns[2:]])
        return buf.getvalue()

    def to_text(self) -> str:
        head = ", ".join(f"{k}={self.meta[k]}" for k in sorted(self.meta))
        lines = [head, f"{'method':<8}{'S':>6}{'objective $':>18}{'time s':>12}{'gap %':>12}{'speedup':>10}{'iters':>8}"]
        for r in self.rows:
            lines.append(f"{r.method:<8}{r.n_scenarios:>6}{r.objective:>18.2f}{r.time:>12.3f}"
                         f"{r.gap_pct:>12.5f}{r.speedup:>9.2f}x{r.iterations:>8.1f}")
        return "\n".join(lines) + "\n"

    def write(self, stem) -> tuple[str, str]:
        """Write ``<stem>.csv`` and ``<stem>.txt``; returns both paths."""
        paths = (f"{stem}.csv", f"{stem}.txt")
        with open(paths[0], "w") as fh:
            fh.write(self.to_csv())
        with open(paths[1], "w") as fh:
            fh.write(self.to_text())
        return paths


class UnitClock:
    """Deterministic stand-in for ``time.perf_counter``: every timed solve lasts 0.5."""

    def __init__(self):
        self._t = 0.0

    def __call__(self) -> float:
        self._t += 0.5  # two reads per solve
        return self._t


def _surrogate_for(spec, instance, backend):
    if spec is None or spec == "oracle":
        return ExactOracleSurrogate(instance, backend)
    if spec == "constant":
        return ConstantSurrogate(0.0)
    return spec  # any object with estimate(z, loads)


def run_bench(instance: UCInstance, methods=METHODS, scenario_counts=(10,), n_draws: int = 1, seed: int = 0,
              *, reference: str = "ef", eps_rel: float = 1e-6, variability=(0.7, 1.0), surrogate=None,
              backend: SolverBackend | None = None, clock: Callable[[], float] = time.perf_counter,
              workers: int | None = 1) -> BenchReport:
    """Solve every (method, S, draw) and average objective, time and iterations over draws.

    Scenario draw k for count S uses seed ``seed + k``. Gap and speedup are
    computed from the averaged columns against ``reference``. The nccg
    objective is the exact expected cost of its final commitment, evaluated
    outside the timed region. ``surrogate`` is a model object, ``"oracle"``
    (default) or ``"constant"``.
    """
    methods = list(methods)
    if reference not in methods:
        raise ValueError(f"reference method {reference!r} is not among {methods}")
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods {sorted(unknown)}")
    backend = backend or make_backend("highs")
    sur = _surrogate_for(surrogate, instance, backend) if "nccg" in methods else None
    nccg_eps = default_eps(sur) if sur is not None else None
    report = BenchReport(meta={
        "instance_hash": instance.digest(), "seed": seed, "K": n_draws,
        "S": " ".join(map(str, scenario_counts)), "backend": type(backend).__name__,
        "reference": reference,
    })
    for S in scenario_counts:
        objs = {m: [] for m in methods}
        times = {m: [] for m in methods}
        iters = {m: [] for m in methods}
        for k in range(n_draws):
            sc = generate_scenarios(instance.nominal_load, S, variability, seed + k)
            ref_obj = None
            for m in [reference] + [x for x in methods if x != reference]:
                t0 = clock()
                if m == "ef":
                    sol = solve_extensive_form(instance, sc, backend)
                elif m == "ccg":
                    eps = eps_rel * abs(ref_obj) if ref_obj is not None else 1e-6
                    sol = solve_ccg(instance, sc, eps=max(eps, 1e-9), backend=backend, workers=workers)
                else:
                    sol = solve_neural_ccg(instance, sc, sur, eps=nccg_eps, backend=backend)
                times[m].append(clock() - t0)
                if m == "nccg":
                    # the final master value omits unmaterialized scenarios; score z exactly instead
                    objs[m].append(true_expected_cost(instance, sol.schedule.z, sc, backend, workers))
                else:
                    objs[m].append(sol.objective)
                iters[m].append(sol.iterations)
                if m == reference:
                    ref_obj = sol.objective
                log.info("bench S=%d draw=%d %s obj=%.6f t=%.3f", S, k, m, objs[m][-1], times[m][-1])
        o_ref, t_ref = float(np.mean(objs[reference])), float(np.mean(times[reference]))
        for m in methods:
            o, t = float(np.mean(objs[m])), float(np.mean(times[m]))
            gap, speed = compute_metrics(o, o_ref, t, t_ref)
            report.rows.append(BenchRow(m, S, o, t, gap, speed, float(np.mean(iters[m]))))
    return report
