"""Solver-agnostic linear model container.

Variables and constraints are grouped into named blocks (``p``, ``bal`` ...),
each with an index shape, so that ``"p[2,5]"`` addresses element (2, 5) of
block ``p``. Constraint names are unique by construction.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix

from ..errors import SUCError

LE, EQ, GE = "<=", "==", ">="


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"


def _fmt_index(idx) -> str:
    return ",".join(str(int(i)) for i in idx)


def _parse_name(name: str):
    if "[" not in name:
        return name, ()
    base, rest = name.split("[", 1)
    return base, tuple(int(x) for x in rest.rstrip("]").split(",") if x)


@dataclass
class _Block:
    name: str
    start: int
    shape: tuple

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=int))

    def indices(self) -> np.ndarray:
        return np.arange(self.start, self.start + self.size).reshape(self.shape)


class LinearModel:
    """Minimization model ``min c^T x + c0`` over bounded, possibly integer, variables."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.lb: list[np.ndarray] = []
        self.ub: list[np.ndarray] = []
        self.integer: list[np.ndarray] = []
        self.cost: list[np.ndarray] = []
        self.obj_constant = 0.0
        self.var_blocks: dict[str, _Block] = {}
        self.con_blocks: dict[str, _Block] = {}
        self.n_vars = 0
        self.n_cons = 0
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self._lo: list[np.ndarray] = []
        self._hi: list[np.ndarray] = []
        self._sense: list[np.ndarray] = []

    # ------------------------------------------------------------------ building

    def add_vars(self, name, shape, lb=0.0, ub=np.inf, integer=False, cost=0.0) -> np.ndarray:
        """Add a block of variables and return their column indices shaped like ``shape``."""
        if name in self.var_blocks:
            raise SUCError(f"duplicate variable block {name!r}")
        shape = tuple(np.atleast_1d(shape).tolist()) if not isinstance(shape, tuple) else shape
        block = _Block(name, self.n_vars, shape)
        n = block.size
        self.var_blocks[name] = block
        self.lb.append(np.broadcast_to(np.asarray(lb, float), shape).ravel().copy())
        self.ub.append(np.broadcast_to(np.asarray(ub, float), shape).ravel().copy())
        self.integer.append(np.full(n, bool(integer)))
        self.cost.append(np.broadcast_to(np.asarray(cost, float), shape).ravel().copy())
        self.n_vars += n
        return block.indices()

    def add_constraints(self, name, shape, rows, cols, vals, sense, rhs) -> np.ndarray:
        """Add a block of rows given in local COO form.

        ``rows`` are flat positions inside the block (0 .. prod(shape)-1),
        ``cols`` global variable indices. ``rhs`` broadcasts to ``shape``.
        """
        if name in self.con_blocks:
            raise SUCError(f"duplicate constraint block {name!r}")
        shape = tuple(shape)
        block = _Block(name, self.n_cons, shape)
        n = block.size
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.broadcast_to(np.asarray(vals, float), rows.shape).ravel()
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise SUCError(f"constraint block {name!r} references a missing variable")
        if rows.size and (rows.min() < 0 or rows.max() >= n):
            raise SUCError(f"constraint block {name!r} has row positions outside its shape")
        rhs = np.broadcast_to(np.asarray(rhs, float), shape).ravel().copy()
        if sense == LE:
            lo, hi = np.full(n, -np.inf), rhs
        elif sense == GE:
            lo, hi = rhs, np.full(n, np.inf)
        elif sense == EQ:
            lo, hi = rhs, rhs.copy()
        else:
            raise SUCError(f"unknown sense {sense!r}")
        self.con_blocks[name] = block
        self._rows.append(rows + self.n_cons)
        self._cols.append(cols)
        self._vals.append(vals)
        self._lo.append(lo)
        self._hi.append(hi)
        self._sense.append(np.full(n, sense, dtype=object))
        self.n_cons += n
        return block.indices()

    def add_cost(self, cols, vals):
        """Accumulate objective coefficients onto existing variables."""
        c = self.objective_vector()
        np.add.at(c, np.asarray(cols).ravel(), np.broadcast_to(np.asarray(vals, float), np.shape(cols)).ravel())
        self.cost = [c]

    # ------------------------------------------------------------------ arrays

    def objective_vector(self) -> np.ndarray:
        return np.concatenate(self.cost) if self.cost else np.zeros(0)

    def bounds(self):
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
        return cat(self.lb), cat(self.ub)

    def integrality(self) -> np.ndarray:
        return np.concatenate(self.integer) if self.integer else np.zeros(0, bool)

    def matrix(self) -> csr_matrix:
        cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dt)
        return csr_matrix(
            (cat(self._vals, float), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
            shape=(self.n_cons, self.n_vars),
        )

    def row_bounds(self):
        cat = lambda xs: np.concatenate(xs) if xs else np.zeros(0)
        return cat(self._lo), cat(self._hi)

    def senses(self) -> np.ndarray:
        return np.concatenate(self._sense) if self._sense else np.zeros(0, object)

    @property
    def is_mip(self) -> bool:
        return bool(self.integrality().any())

    # ------------------------------------------------------------------ names

    def var_index(self, name: str) -> int:
        base, idx = _parse_name(name)
        return int(self.var_blocks[base].indices()[idx])

    def con_index(self, name: str) -> int:
        base, idx = _parse_name(name)
        return int(self.con_blocks[base].indices()[idx])

    def var_names(self) -> list[str]:
        return _names(self.var_blocks, self.n_vars)

    def con_names(self) -> list[str]:
        return _names(self.con_blocks, self.n_cons)

    # ------------------------------------------------------------------ misc

    def fix_integers(self, x: np.ndarray) -> "LinearModel":
        """Copy with integer columns fixed at ``round(x)`` and relaxed to continuous."""
        out = LinearModel(self.name + "_fixed")
        out.__dict__.update({k: (list(v) if isinstance(v, list) else (dict(v) if isinstance(v, dict) else v))
                             for k, v in self.__dict__.items()})
        lb, ub = self.bounds()
        mask = self.integrality()
        xr = np.round(np.asarray(x, float))
        lb, ub = lb.copy(), ub.copy()
        lb[mask] = xr[mask]
        ub[mask] = xr[mask]
        out.lb, out.ub = [lb], [ub]
        out.integer = [np.zeros(self.n_vars, bool)]
        out.cost = [self.objective_vector()]
        return out

    def evaluate(self, x) -> float:
        return float(self.objective_vector() @ x + self.obj_constant)

    def max_violation(self, x) -> float:
        """Largest bound or row violation at point ``x`` (0 means feasible)."""
        x = np.asarray(x, float)
        lb, ub = self.bounds()
        act = self.matrix() @ x
        lo, hi = self.row_bounds()
        viol = [np.maximum(lb - x, 0), np.maximum(x - ub, 0), np.maximum(lo - act, 0), np.maximum(act - hi, 0)]
        return float(max((v.max() if v.size else 0.0) for v in viol))

    def write_lp(self, path) -> None:
        """Export in CPLEX LP text format for cross-checking with external solvers."""
        names = [_lp_name(n) for n in self.var_names()]
        cnames = [_lp_name(n) for n in self.con_names()]
        c = self.objective_vector()
        lines = ["\\ " + self.name, "Minimize", " obj: " + _lp_expr(c, range(len(c)), names)]
        if self.obj_constant:
            lines[-1] += f" + {_num(self.obj_constant)} __const"
        lines.append("Subject To")
        a = self.matrix()
        lo, hi = self.row_bounds()
        for i in range(self.n_cons):
            row = a.getrow(i)
            expr = _lp_expr(row.data, row.indices, names)
            if lo[i] == hi[i]:
                lines.append(f" {cnames[i]}: {expr} = {_num(lo[i])}")
            elif np.isfinite(hi[i]):
                lines.append(f" {cnames[i]}: {expr} <= {_num(hi[i])}")
            else:
                lines.append(f" {cnames[i]}: {expr} >= {_num(lo[i])}")
        lines.append("Bounds")
        lb, ub = self.bounds()
        for j, n in enumerate(names):
            lo_s = "-inf" if np.isneginf(lb[j]) else _num(lb[j])
            hi_s = "+inf" if np.isposinf(ub[j]) else _num(ub[j])
            lines.append(f" {lo_s} <= {n} <= {hi_s}")
        if self.obj_constant:
            lines.append(" __const = 1")
        ints = [names[j] for j in np.flatnonzero(self.integrality())]
        if ints:
            lines.append("General")
            lines.extend(" " + n for n in ints)
        lines.append("End")
        Path(path).write_text("\n".join(lines) + "\n")


def _names(blocks: dict, n: int) -> list[str]:
    out = [""] * n
    for b in blocks.values():
        for flat, idx in enumerate(np.ndindex(*b.shape)):
            out[b.start + flat] = f"{b.name}[{_fmt_index(idx)}]" if idx else b.name
    return out


def _num(v) -> str:
    return repr(float(v))


def _lp_name(name: str) -> str:
    return name.replace("[", "(").replace("]", ")")


def _lp_expr(vals, cols, names) -> str:
    terms = [f"{'+' if v >= 0 else '-'} {_num(abs(v))} {names[j]}" for v, j in zip(vals, cols) if v != 0]
    return " ".join(terms) if terms else "0 " + names[0] if names else "0"


@dataclass
class SolveResult:
    """Backend output. ``duals`` holds d(objective)/d(rhs) per row, LPs only."""

    status: Status
    objective: float = float("nan")
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    model: LinearModel | None = field(default=None, repr=False)
    mip_gap: float | None = None

    @property
    def optimal(self) -> bool:
        return self.status == Status.OPTIMAL

    def values(self, block: str) -> np.ndarray:
        return self.x[self.model.var_blocks[block].indices()]

    def block_duals(self, block: str) -> np.ndarray:
        if self.duals is None:
            raise SUCError("no duals available (model had free integer variables)")
        return self.duals[self.model.con_blocks[block].indices()]

    def value(self, name: str) -> float:
        return float(self.x[self.model.var_index(name)])

    def dual(self, name: str) -> float:
        if self.duals is None:
            raise SUCError("no duals available (model had free integer variables)")
        return float(self.duals[self.model.con_index(name)])

    @property
    def primal(self) -> dict[str, float]:
        return dict(zip(self.model.var_names(), self.x.tolist()))

    @property
    def dual_values(self) -> dict[str, float] | None:
        if self.duals is None:
            return None
        return dict(zip(self.model.con_names(), self.duals.tolist()))
