"""LP/MILP backends.

``HighsBackend`` drives HiGHS through ``highspy``; ``ScipyBackend`` goes through
``scipy.optimize`` and exists mainly as a cross-check. Both return duals as
d(objective)/d(rhs) for pure LPs.
"""
from __future__ import annotations

import abc
from dataclasses import dataclass

import numpy as np

from .model import LinearModel, SolveResult, Status

_INF = 1e30


@dataclass
class SolverSettings:
    feasibility_tol: float = 1e-6
    mip_rel_gap: float = 1e-6
    time_limit: float | None = None
    threads: int = 1
    seed: int = 0


class SolverBackend(abc.ABC):
    """Contract: deterministic ``solve`` for identical model + settings."""

    supports_milp: bool = True
    name: str = "abstract"

    def __init__(self, settings: SolverSettings | None = None, **overrides):
        self.settings = settings or SolverSettings()
        for k, v in overrides.items():
            setattr(self.settings, k, v)

    @abc.abstractmethod
    def solve(self, model: LinearModel, mip_start=None) -> SolveResult:
        """Solve ``model``; ``mip_start`` is an optional (indices, values) partial assignment."""

    def clone(self) -> "SolverBackend":
        return type(self)(SolverSettings(**vars(self.settings)))


def _clip_inf(a: np.ndarray) -> np.ndarray:
    return np.clip(a, -_INF, _INF)


class HighsBackend(SolverBackend):
    name = "highs"

    def _new(self):
        import highspy

        h = highspy.Highs()
        s = self.settings
        h.setOptionValue("output_flag", False)
        h.setOptionValue("threads", s.threads)
        h.setOptionValue("random_seed", s.seed)
        h.setOptionValue("primal_feasibility_tolerance", s.feasibility_tol)
        h.setOptionValue("dual_feasibility_tolerance", s.feasibility_tol)
        h.setOptionValue("mip_feasibility_tolerance", s.feasibility_tol)
        h.setOptionValue("mip_rel_gap", s.mip_rel_gap)
        h.setOptionValue("mip_abs_gap", 0.0)
        if s.time_limit is not None:
            h.setOptionValue("time_limit", float(s.time_limit))
        return h

    def solve_arrays(self, c, lb, ub, a_csc, row_lo, row_hi, integrality=None, constant=0.0, mip_start=None):
        """Solve ``min c^T x`` over a prebuilt CSC matrix.

        Returns (status, objective, x, row_duals). Used by the cached recourse path.
        """
        import highspy

        h = self._new()
        lp = highspy.HighsLp()
        lp.num_col_ = len(c)
        lp.num_row_ = a_csc.shape[0]
        lp.col_cost_ = np.asarray(c, float)
        lp.col_lower_ = _clip_inf(np.asarray(lb, float))
        lp.col_upper_ = _clip_inf(np.asarray(ub, float))
        lp.row_lower_ = _clip_inf(np.asarray(row_lo, float))
        lp.row_upper_ = _clip_inf(np.asarray(row_hi, float))
        lp.offset_ = float(constant)
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = a_csc.indptr.astype(np.int32)
        lp.a_matrix_.index_ = a_csc.indices.astype(np.int32)
        lp.a_matrix_.value_ = a_csc.data.astype(float)
        is_mip = integrality is not None and np.any(integrality)
        if is_mip:
            lp.integrality_ = [highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
                               for f in integrality]
        h.passModel(lp)
        if is_mip and mip_start is not None:
            idx, vals = mip_start
            h.setSolution(len(idx), np.asarray(idx, np.int32), np.asarray(vals, float))
        h.run()
        ms = h.getModelStatus()
        M = highspy.HighsModelStatus
        if ms == M.kOptimal:
            status = Status.OPTIMAL
        elif ms == M.kInfeasible:
            status = Status.INFEASIBLE
        elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible):
            status = Status.UNBOUNDED
        else:
            status = Status.ITER_LIMIT
        if status != Status.OPTIMAL:
            return status, float("nan"), None, None, None
        info = h.getInfo()
        sol = h.getSolution()
        x = np.array(sol.col_value)
        duals = None if is_mip else np.array(sol.row_dual)
        gap = float(info.mip_gap) if is_mip else None
        return status, float(info.objective_function_value), x, duals, gap

    def solve(self, model: LinearModel, mip_start=None) -> SolveResult:
        lb, ub = model.bounds()
        lo, hi = model.row_bounds()
        status, obj, x, duals, gap = self.solve_arrays(
            model.objective_vector(), lb, ub, model.matrix().tocsc(), lo, hi,
            model.integrality(), model.obj_constant, mip_start,
        )
        return SolveResult(status, obj, x, duals, model, gap)


class ScipyBackend(SolverBackend):
    """``scipy.optimize.linprog`` / ``milp`` (HiGHS inside, independent model plumbing)."""

    name = "scipy"

    def solve(self, model: LinearModel, mip_start=None) -> SolveResult:
        from scipy.optimize import Bounds, LinearConstraint, linprog, milp

        c = model.objective_vector()
        lb, ub = model.bounds()
        a = model.matrix()
        lo, hi = model.row_bounds()
        s = self.settings
        if model.is_mip:
            opts = {"mip_rel_gap": s.mip_rel_gap, "disp": False}
            if s.time_limit is not None:
                opts["time_limit"] = s.time_limit
            cons = [LinearConstraint(a, lo, hi)] if model.n_cons else []
            res = milp(c, constraints=cons, integrality=model.integrality().astype(int),
                       bounds=Bounds(lb, ub), options=opts)
            status = {0: Status.OPTIMAL, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(res.status, Status.ITER_LIMIT)
            if status != Status.OPTIMAL:
                return SolveResult(status, model=model)
            return SolveResult(status, float(res.fun) + model.obj_constant, np.asarray(res.x), None, model,
                               getattr(res, "mip_gap", None))

        eq = lo == hi
        ub_rows = ~eq & np.isfinite(hi)
        lb_rows = ~eq & np.isfinite(lo)
        a = a.tocsr()
        a_ub = None
        b_ub = None
        if ub_rows.any() or lb_rows.any():
            from scipy.sparse import vstack

            a_ub = vstack([a[ub_rows], -a[lb_rows]]).tocsr()
            b_ub = np.concatenate([hi[ub_rows], -lo[lb_rows]])
        res = linprog(
            c, A_ub=a_ub, b_ub=b_ub,
            A_eq=a[eq] if eq.any() else None, b_eq=lo[eq] if eq.any() else None,
            bounds=list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None))),
            method="highs", options={"primal_feasibility_tolerance": s.feasibility_tol},
        )
        status = {0: Status.OPTIMAL, 1: Status.ITER_LIMIT, 2: Status.INFEASIBLE, 3: Status.UNBOUNDED}.get(res.status, Status.ITER_LIMIT)
        if status != Status.OPTIMAL:
            return SolveResult(status, model=model)
        duals = np.zeros(model.n_cons)
        if eq.any():
            duals[eq] = res.eqlin.marginals
        if a_ub is not None:
            m = res.ineqlin.marginals
            k = int(ub_rows.sum())
            duals[ub_rows] = m[:k]
            duals[lb_rows] = -m[k:]
        return SolveResult(status, float(res.fun) + model.obj_constant, np.asarray(res.x), duals, model)


def make_backend(name: str = "highs", **settings) -> SolverBackend:
    backends = {"highs": HighsBackend, "scipy": ScipyBackend}
    try:
        cls = backends[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(backends)}") from None
    return cls(SolverSettings(**settings))
