"""Model builders for the unit-commitment problem family.

Constraint block names are a stable contract: balance rows are ``bal``,
line limits ``flow_up`` / ``flow_lo``, capacity ``cap_up`` / ``cap_lo``,
ramping ``ramp_up`` / ``ramp_dn``, commitment logic ``logic``, minimum
up/down time ``minup`` / ``mindown`` and the master linking rows ``link``.
Single-load models index dispatch rows by ``[t]`` or ``[g,t]``; multi-scenario
models prepend the scenario position, e.g. ``bal[s,t]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..errors import InfeasibleCommitment, ShapeMismatch
from ..system_model import PenaltyConfig, Scenario, ScenarioSet, UCInstance
from . import checker
from .model import EQ, GE, LE, LinearModel

DEFAULT_PENALTY_MULTIPLIER = 10.0


@dataclass(frozen=True, eq=False)
class CommitmentSchedule:
    z: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @classmethod
    def from_z(cls, instance: UCInstance, z) -> "CommitmentSchedule":
        z = np.rint(np.asarray(z, float)).astype(int)
        prev = np.concatenate([instance.gen_data["initial_on"].astype(int)[:, None], z[:, :-1]], axis=1)
        diff = z - prev
        return cls(z, (diff > 0).astype(int), (diff < 0).astype(int))

    def to_dict(self) -> dict:
        return {"z": self.z.tolist(), "u": self.u.tolist(), "v": self.v.tolist()}


def default_penalties(instance: UCInstance) -> PenaltyConfig:
    value = DEFAULT_PENALTY_MULTIPLIER * float(instance.gen_data["cost_energy"].max())
    return PenaltyConfig.uniform(instance.n_lines, instance.horizon, value)


def penalties_of(instance: UCInstance) -> PenaltyConfig:
    return instance.penalties if instance.penalties is not None else default_penalties(instance)


def first_stage_cost(instance: UCInstance, z) -> float:
    """Start-up, shut-down and no-load cost of a commitment matrix."""
    sched = CommitmentSchedule.from_z(instance, z)
    gd = instance.gen_data
    return float(
        gd["cost_startup"] @ sched.u.sum(axis=1)
        + gd["cost_shutdown"] @ sched.v.sum(axis=1)
        + gd["cost_noload"] @ sched.z.sum(axis=1)
    )


def _check_load(instance: UCInstance, load: np.ndarray):
    if load.shape[-2:] != (instance.n_buses, instance.horizon):
        raise ShapeMismatch(f"load shape {load.shape[-2:]} != (buses, horizon) {(instance.n_buses, instance.horizon)}")


def forced_commitment(instance: UCInstance):
    """Bounds on z implied by initial up/down-time obligations."""
    G, T = instance.n_gens, instance.horizon
    lo = np.zeros((G, T))
    hi = np.ones((G, T))
    for g, gen in enumerate(instance.generators):
        k = gen.initial_periods_in_state
        if gen.initial_on and k < gen.min_up:
            lo[g, : gen.min_up - k] = 1.0
        elif not gen.initial_on and k < gen.min_down:
            hi[g, : gen.min_down - k] = 0.0
    return lo, hi


def _add_first_stage(m: LinearModel, inst: UCInstance):
    G, T = inst.n_gens, inst.horizon
    gd = inst.gen_data
    zlo, zhi = forced_commitment(inst)
    z = m.add_vars("z", (G, T), zlo, zhi, integer=True, cost=np.repeat(gd["cost_noload"][:, None], T, 1))
    u = m.add_vars("u", (G, T), 0, 1, integer=True, cost=np.repeat(gd["cost_startup"][:, None], T, 1))
    v = m.add_vars("v", (G, T), 0, 1, integer=True, cost=np.repeat(gd["cost_shutdown"][:, None], T, 1))

    flat = np.arange(G * T).reshape(G, T)
    # u - v - z_t + z_{t-1} = 0, with z_0 = initial_on moved to rhs
    rows = [flat, flat, flat, flat[:, 1:]]
    cols = [u, v, z, z[:, :-1]]
    vals = [1.0, -1.0, -1.0, 1.0]
    rhs = np.zeros((G, T))
    rhs[:, 0] = -gd["initial_on"].astype(float)
    m.add_constraints("logic", (G, T), *_stack(rows, cols, vals), EQ, rhs)

    for name, var, up_attr, sign_z, rhs_val in (("minup", u, "min_up", -1.0, 0.0), ("mindown", v, "min_down", 1.0, 1.0)):
        r, c, w = [flat], [z], [np.full((G, T), sign_z)]
        for g in range(G):
            win = int(gd[up_attr][g])
            for t in range(T):
                taus = np.arange(max(0, t - win + 1), t + 1)
                r.append(np.full(len(taus), flat[g, t]))
                c.append(var[g, taus])
                w.append(np.ones(len(taus)))
        m.add_constraints(name, (G, T), np.concatenate([x.ravel() for x in r]),
                          np.concatenate([x.ravel() for x in c]), np.concatenate([x.ravel() for x in w]), LE, rhs_val)
    return z, u, v


def _stack(rows, cols, vals):
    r = np.concatenate([np.asarray(x).ravel() for x in rows])
    c = np.concatenate([np.asarray(x).ravel() for x in cols])
    w = np.concatenate([np.broadcast_to(np.asarray(v, float), np.shape(x)).ravel() for v, x in zip(vals, rows)])
    return r, c, w


def _add_dispatch(m: LinearModel, inst: UCInstance, loads: np.ndarray, *, z=None, z_fixed=None,
                  single: bool, weights=None, slacks=True, eta_weights=None):
    """Dispatch block(s) for a stack of loads (S, N, T).

    ``z`` are commitment column indices (MILP) or ``z_fixed`` a 0/1 matrix (LP).
    Objective terms get ``weights[s]``; with ``eta_weights`` the dispatch cost
    is routed through epigraph variables instead.
    """
    S = loads.shape[0]
    G, T, L = inst.n_gens, inst.horizon, inst.n_lines
    gd = inst.gen_data
    pen = penalties_of(inst)
    shape = (lambda *dims: dims) if not single else (lambda *dims: dims[1:])
    pmin, pmax = gd["p_min"][None, :, None], gd["p_max"][None, :, None]

    if z_fixed is not None:
        zf = np.asarray(z_fixed, float)[None]
        p_lb, p_ub = np.broadcast_to(zf * pmin, (S, G, T)), np.broadcast_to(zf * pmax, (S, G, T))
    else:
        p_lb, p_ub = np.zeros((S, G, T)), np.broadcast_to(pmax, (S, G, T))
    direct = eta_weights is None
    w = np.ones(S) if weights is None else np.asarray(weights, float)
    wcol = w if direct else np.zeros(S)
    energy = wcol[:, None, None] * gd["cost_energy"][None, :, None] * np.ones((S, G, T))
    p = m.add_vars("p", shape(S, G, T), p_lb.reshape(shape(S, G, T)), p_ub.reshape(shape(S, G, T)),
                   cost=energy.reshape(shape(S, G, T))).reshape(S, G, T)
    if slacks:
        shed = m.add_vars("shed", shape(S, T), 0.0, np.inf,
                          cost=(wcol[:, None] * pen.shed[None]).reshape(shape(S, T))).reshape(S, T)
        spill = m.add_vars("spill", shape(S, T), 0.0, np.inf,
                           cost=(wcol[:, None] * pen.spill[None]).reshape(shape(S, T))).reshape(S, T)
        over = m.add_vars("overload", shape(S, L, T), 0.0, np.inf,
                          cost=(wcol[:, None, None] * pen.overload[None]).reshape(shape(S, L, T))).reshape(S, L, T)

    # balance
    fb = np.arange(S * T).reshape(S, T)
    rows = [np.broadcast_to(fb[:, None, :], (S, G, T))]
    cols = [p]
    vals = [1.0]
    if slacks:
        rows += [fb, fb]
        cols += [shed, spill]
        vals += [1.0, -1.0]
    m.add_constraints("bal", shape(S, T), *_stack(rows, cols, vals), EQ, loads.sum(axis=1).reshape(shape(S, T)))

    fg = np.arange(S * G * T).reshape(S, G, T)
    if z is not None:
        zb = np.broadcast_to(z[None], (S, G, T))
        m.add_constraints("cap_up", shape(S, G, T), *_stack([fg, fg], [p, zb], [1.0, -np.broadcast_to(pmax, (S, G, T))]), LE, 0.0)
        m.add_constraints("cap_lo", shape(S, G, T), *_stack([fg, fg], [p, zb], [1.0, -np.broadcast_to(pmin, (S, G, T))]), GE, 0.0)

    p0 = gd["initial_output"]
    ru = np.broadcast_to(gd["ramp_up"][None, :, None], (S, G, T)).copy()
    rd = np.broadcast_to(-gd["ramp_down"][None, :, None], (S, G, T)).copy()
    ru[:, :, 0] += p0[None, :]
    rd[:, :, 0] += p0[None, :]
    ramp_rows = [fg, fg[:, :, 1:]]
    ramp_cols = [p, p[:, :, :-1]]
    m.add_constraints("ramp_up", shape(S, G, T), *_stack(ramp_rows, ramp_cols, [1.0, -1.0]), LE, ru.reshape(shape(S, G, T)))
    m.add_constraints("ramp_dn", shape(S, G, T), *_stack(ramp_rows, ramp_cols, [1.0, -1.0]), GE, rd.reshape(shape(S, G, T)))

    if L:
        gam = inst.ptdf_gen
        li, gi = np.nonzero(np.abs(gam) > 1e-12)
        fl = np.arange(S * L * T).reshape(S, L, T)
        # entries (s, k, t) for each nonzero pair k=(l, g)
        r = fl[:, li, :]
        c = p[:, gi, :]
        vv = np.broadcast_to(gam[li, gi][None, :, None], r.shape)
        base = np.einsum("ln,snt->slt", inst.network.ptdf, loads)
        lim = inst.network.flow_limits[None, :, None]
        up_rows, up_cols, up_vals = [r], [c], [vv]
        lo_rows, lo_cols, lo_vals = [r], [c], [vv]
        if slacks:
            up_rows.append(fl); up_cols.append(over); up_vals.append(np.full(fl.shape, -1.0))
            lo_rows.append(fl); lo_cols.append(over); lo_vals.append(np.full(fl.shape, 1.0))
        m.add_constraints("flow_up", shape(S, L, T), *_stack(up_rows, up_cols, up_vals), LE, (lim + base).reshape(shape(S, L, T)))
        m.add_constraints("flow_lo", shape(S, L, T), *_stack(lo_rows, lo_cols, lo_vals), GE, (base - lim).reshape(shape(S, L, T)))

    if not direct:
        eta = m.add_vars("eta", (S,), -np.inf, np.inf, cost=eta_weights)
        fs = np.arange(S)
        r = [fs, np.broadcast_to(fs[:, None, None], (S, G, T))]
        c = [eta, p]
        v = [1.0, -np.broadcast_to(gd["cost_energy"][None, :, None], (S, G, T))]
        if slacks:
            r += [np.broadcast_to(fs[:, None], (S, T)), np.broadcast_to(fs[:, None], (S, T)),
                  np.broadcast_to(fs[:, None, None], (S, L, T))]
            c += [shed, spill, over]
            v += [-np.broadcast_to(pen.shed[None], (S, T)), -np.broadcast_to(pen.spill[None], (S, T)),
                  -np.broadcast_to(pen.overload[None], (S, L, T))]
        m.add_constraints("link", (S,), *_stack(r, c, v), GE, 0.0)
    return p


def build_deterministic_uc(instance: UCInstance, load, slacks: bool = False) -> LinearModel:
    """Single-load UC MILP; with ``slacks`` the balance/line rows get penalized slack."""
    load = np.asarray(load, float)
    _check_load(instance, load)
    m = LinearModel("deterministic_uc")
    z, _, _ = _add_first_stage(m, instance)
    _add_dispatch(m, instance, load[None], z=z, single=True, slacks=slacks)
    return m


def build_extensive_form(instance: UCInstance, scenarios: ScenarioSet) -> LinearModel:
    loads = scenarios.loads
    _check_load(instance, loads)
    m = LinearModel("extensive_form")
    z, _, _ = _add_first_stage(m, instance)
    _add_dispatch(m, instance, np.asarray(loads), z=z, single=False, weights=scenarios.probabilities)
    return m


def build_master(instance: UCInstance, scenarios: ScenarioSet, materialized: Sequence[int] = ()) -> LinearModel:
    """CCG master: first stage plus one epigraph-linked recourse block per materialized scenario.

    Block position ``k`` corresponds to scenario ``materialized[k]``; the
    probabilities are used as given (no renormalization over the subset).
    """
    materialized = list(materialized)
    m = LinearModel("master")
    m.scenario_index = materialized
    z, _, _ = _add_first_stage(m, instance)
    if materialized:
        sub = scenarios.subset(materialized)
        _check_load(instance, sub.loads)
        _add_dispatch(m, instance, np.asarray(sub.loads), z=z, single=False, eta_weights=sub.probabilities)
    return m


def build_recourse_lp(instance: UCInstance, z, scenario: Scenario | np.ndarray) -> LinearModel:
    """Dispatch LP for a fixed commitment; always feasible thanks to slacks."""
    load = scenario.net_load if isinstance(scenario, Scenario) else np.asarray(scenario, float)
    _check_load(instance, load)
    z = np.asarray(z)
    if z.shape != (instance.n_gens, instance.horizon):
        raise ShapeMismatch(f"commitment shape {z.shape} != {(instance.n_gens, instance.horizon)}")
    problems = checker.commitment_violations(instance, z)
    if problems:
        raise InfeasibleCommitment("; ".join(problems[:3]))
    m = LinearModel("recourse")
    _add_dispatch(m, instance, load[None], z_fixed=z, single=True, slacks=True)
    return m
