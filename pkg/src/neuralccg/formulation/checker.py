"""Independent feasibility checks for commitments and dispatches.

Works from the raw ``Generator`` / ``Line`` records and its own DC power-flow
solve; it deliberately shares nothing with the model builders so it can be
used to audit their output.
"""
from __future__ import annotations

import numpy as np


def _run_lengths_ok(initial_on: bool, initial_len: int, z_row, min_up: int, min_down: int):
    state, run = bool(initial_on), int(initial_len)
    for t, zt in enumerate(z_row):
        zt = bool(zt)
        if zt != state:
            need = min_up if state else min_down
            if run < need:
                yield t, ("up" if state else "down"), run, need
            state, run = zt, 1
        else:
            run += 1


def commitment_violations(instance, z, u=None, v=None) -> list[str]:
    """Check logic, start-up/shut-down consistency and min up/down times.

    When ``u``/``v`` are omitted they are taken as implied by ``z``.
    """
    z = np.asarray(z)
    out = []
    if z.shape != (len(instance.generators), instance.horizon):
        return [f"z: shape {z.shape} does not match generators x horizon"]
    if not np.all((z == 0) | (z == 1)):
        out.append("z: entries must be binary")
        return out
    for g, gen in enumerate(instance.generators):
        prev = 1 if gen.initial_on else 0
        for t in range(instance.horizon):
            cur = int(z[g, t])
            if u is not None and v is not None:
                su, sd = int(round(u[g, t])), int(round(v[g, t]))
                if su != int(cur == 1 and prev == 0) or sd != int(cur == 0 and prev == 1):
                    out.append(f"logic[{g},{t}]: start-up/shut-down ({su},{sd}) inconsistent with z {prev}->{cur}")
            prev = cur
        for t, kind, run, need in _run_lengths_ok(gen.initial_on, gen.initial_periods_in_state, z[g],
                                                   gen.min_up, gen.min_down):
            out.append(f"min_{kind}[{g},{t}]: state held {run} period(s), needs {need}")
    return out


def dc_flows(instance, injections) -> np.ndarray:
    """Line flows (lines x periods) from nodal injections by solving B theta = P.

    The reference bus absorbs any imbalance.
    """
    net = instance.network
    n = net.n_buses
    ref = net.reference_bus
    bmat = np.zeros((n, n))
    for ln in net.lines:
        b = 1.0 / ln.reactance
        i, j = ln.from_bus, ln.to_bus
        bmat[i, i] += b
        bmat[j, j] += b
        bmat[i, j] -= b
        bmat[j, i] -= b
    keep = [k for k in range(n) if k != ref]
    theta = np.zeros_like(injections, dtype=float)
    if keep:
        theta[keep] = np.linalg.solve(bmat[np.ix_(keep, keep)], injections[keep])
    return np.array([(theta[ln.from_bus] - theta[ln.to_bus]) / ln.reactance for ln in net.lines]).reshape(len(net.lines), -1)


def dispatch_violations(instance, z, p, load, *, shed=None, spill=None, overload=None, tol=1e-5) -> list[str]:
    """Re-evaluate balance, line limits, capacity and ramping for one load matrix.

    Slack arrays default to zero (the unrelaxed model). ``tol`` is absolute MW,
    scaled up for large quantities.
    """
    z = np.asarray(z, float)
    p = np.asarray(p, float)
    load = np.asarray(load, float)
    T = instance.horizon
    shed = np.zeros(T) if shed is None else np.asarray(shed)
    spill = np.zeros(T) if spill is None else np.asarray(spill)
    n_lines = len(instance.network.lines)
    overload = np.zeros((n_lines, T)) if overload is None else np.asarray(overload)
    out = []
    scale = max(1.0, float(np.abs(load).sum(axis=0).max()))
    atol = tol * scale
    for t in range(T):
        gen_total = sum(p[g, t] for g in range(len(instance.generators)))
        mismatch = gen_total + shed[t] - spill[t] - load[:, t].sum()
        if abs(mismatch) > atol:
            out.append(f"balance[{t}]: mismatch {mismatch:.6g}")
    if np.any(shed < -atol) or np.any(spill < -atol) or np.any(overload < -atol):
        out.append("slack: negative slack value")
    inj = -load.copy()
    for g, gen in enumerate(instance.generators):
        inj[gen.bus] += p[g]
    if n_lines:
        flows = dc_flows(instance, inj)
        for k, ln in enumerate(instance.network.lines):
            for t in range(T):
                excess = abs(flows[k, t]) - ln.flow_limit - overload[k, t]
                if excess > atol:
                    out.append(f"flow[{k},{t}]: exceeds limit by {excess:.6g}")
    for g, gen in enumerate(instance.generators):
        prev = gen.initial_output
        for t in range(T):
            lo, hi = z[g, t] * gen.p_min, z[g, t] * gen.p_max
            if p[g, t] < lo - atol or p[g, t] > hi + atol:
                out.append(f"capacity[{g},{t}]: {p[g, t]:.6g} outside [{lo:.6g}, {hi:.6g}]")
            step = p[g, t] - prev
            if step > gen.ramp_up + atol or step < -gen.ramp_down - atol:
                out.append(f"ramp[{g},{t}]: step {step:.6g}")
            prev = p[g, t]
    return out


def solution_violations(instance, result, loads=None, single=True) -> list[str]:
    """Audit a solved builder model (deterministic UC, extensive form or master)."""
    z = np.rint(result.values("z"))
    out = commitment_violations(instance, z, np.rint(result.values("u")), np.rint(result.values("v")))
    blocks = result.model.var_blocks
    slack = lambda name: result.values(name) if name in blocks else None
    if "p" not in blocks:
        return out
    p = result.values("p")
    sh, sp, ov = slack("shed"), slack("spill"), slack("overload")
    if single:
        out += dispatch_violations(instance, z, p, loads, shed=sh, spill=sp, overload=ov)
    else:
        for s in range(p.shape[0]):
            out += [f"s{s}/{msg}" for msg in dispatch_violations(
                instance, z, p[s], loads[s],
                shed=None if sh is None else sh[s], spill=None if sp is None else sp[s],
                overload=None if ov is None else ov[s])]
    return out
