"""Power-system data model: generators, DC network with PTDF, scenarios, instances.

All containers are frozen dataclasses holding read-only numpy arrays, so one
instance can be shared freely between workers.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import CorruptFile, DisconnectedNetwork, EmptySet, FormatVersionMismatch, InvalidRange

INSTANCE_FORMAT = "suc-instance/1"
SCENARIO_FORMAT = "suc-scenarios/1"


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Generator:
    """Thermal unit.

    ``initial_periods_in_state`` counts how long the unit has held its initial
    on/off state before t=1; the default is long enough to impose no
    minimum up/down obligation.
    """

    id: int
    bus: int
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    min_up: int
    min_down: int
    cost_energy: float
    cost_noload: float = 0.0
    cost_startup: float = 0.0
    cost_shutdown: float = 0.0
    initial_on: bool = False
    initial_periods_in_state: int = 1000
    initial_output: float = 0.0


@dataclass(frozen=True)
class Line:
    from_bus: int
    to_bus: int
    reactance: float
    flow_limit: float


@dataclass(frozen=True)
class Network:
    n_buses: int
    lines: tuple[Line, ...] = ()
    reference_bus: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lines", tuple(self.lines))

    @property
    def n_lines(self) -> int:
        return len(self.lines)

    @cached_property
    def ptdf(self) -> np.ndarray:
        return compute_ptdf(self)

    @cached_property
    def flow_limits(self) -> np.ndarray:
        return _frozen([ln.flow_limit for ln in self.lines])


@dataclass(frozen=True, eq=False)
class PenaltyConfig:
    """Slack prices for the recourse LP.

    ``shed`` and ``spill`` are per period, ``overload`` is lines x periods.
    """

    shed: np.ndarray
    spill: np.ndarray
    overload: np.ndarray
    floor: float

    def __post_init__(self):
        object.__setattr__(self, "shed", _frozen(self.shed))
        object.__setattr__(self, "spill", _frozen(self.spill))
        overload = np.asarray(self.overload, dtype=float)
        if overload.size == 0:
            overload = overload.reshape(0, len(self.shed))
        object.__setattr__(self, "overload", _frozen(overload))

    @classmethod
    def uniform(cls, n_lines: int, horizon: int, value: float, floor: float | None = None) -> "PenaltyConfig":
        return cls(
            shed=np.full(horizon, value),
            spill=np.full(horizon, value),
            overload=np.full((n_lines, horizon), value),
            floor=value if floor is None else floor,
        )

    def to_dict(self) -> dict:
        return {
            "shed": self.shed.tolist(),
            "spill": self.spill.tolist(),
            "overload": self.overload.tolist(),
            "floor": float(self.floor),
        }

    @classmethod
    def from_dict(cls, d: dict, n_lines: int, horizon: int) -> "PenaltyConfig":
        overload = np.asarray(d["overload"], dtype=float).reshape(n_lines, horizon)
        return cls(shed=d["shed"], spill=d["spill"], overload=overload, floor=d["floor"])

    def digest(self) -> str:
        return _digest(self.to_dict())


@dataclass(frozen=True, eq=False)
class Scenario:
    net_load: np.ndarray
    probability: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "net_load", _frozen(self.net_load))
        object.__setattr__(self, "probability", float(self.probability))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    scenarios: tuple[Scenario, ...]

    def __post_init__(self):
        object.__setattr__(self, "scenarios", tuple(self.scenarios))

    def __len__(self) -> int:
        return len(self.scenarios)

    def __getitem__(self, i) -> Scenario:
        return self.scenarios[i]

    def __iter__(self):
        return iter(self.scenarios)

    @cached_property
    def loads(self) -> np.ndarray:
        """Stacked net loads, shape (S, buses, periods)."""
        return _frozen(np.stack([s.net_load for s in self.scenarios]))

    @cached_property
    def probabilities(self) -> np.ndarray:
        return _frozen([s.probability for s in self.scenarios])

    @classmethod
    def from_arrays(cls, loads, probabilities=None) -> "ScenarioSet":
        loads = np.asarray(loads, dtype=float)
        if probabilities is None:
            probabilities = np.full(len(loads), 1.0 / len(loads))
        return cls(tuple(Scenario(l, p) for l, p in zip(loads, probabilities)))

    def subset(self, indices: Sequence[int]) -> "ScenarioSet":
        return ScenarioSet(tuple(self.scenarios[i] for i in indices))

    def to_dict(self) -> dict:
        return {
            "format": SCENARIO_FORMAT,
            "probabilities": self.probabilities.tolist(),
            "net_load": self.loads.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSet":
        _check_format(d, SCENARIO_FORMAT)
        return cls.from_arrays(d["net_load"], d["probabilities"])


@dataclass(frozen=True, eq=False)
class UCInstance:
    generators: tuple[Generator, ...]
    network: Network
    horizon: int
    nominal_load: np.ndarray
    penalties: PenaltyConfig | None = None

    def __post_init__(self):
        object.__setattr__(self, "generators", tuple(self.generators))
        object.__setattr__(self, "nominal_load", _frozen(self.nominal_load))

    @property
    def n_gens(self) -> int:
        return len(self.generators)

    @property
    def n_buses(self) -> int:
        return self.network.n_buses

    @property
    def n_lines(self) -> int:
        return self.network.n_lines

    @cached_property
    def gen_data(self) -> dict[str, np.ndarray]:
        """Column view of generator attributes as read-only arrays."""
        cols = {}
        for name in Generator.__dataclass_fields__:
            dtype = bool if name == "initial_on" else (int if name in ("id", "bus", "min_up", "min_down", "initial_periods_in_state") else float)
            cols[name] = _frozen([getattr(g, name) for g in self.generators], dtype=dtype)
        return cols

    @cached_property
    def ptdf_gen(self) -> np.ndarray:
        """PTDF columns at generator buses, lines x generators."""
        if self.n_lines == 0:
            return np.zeros((0, self.n_gens))
        return _frozen(self.network.ptdf[:, self.gen_data["bus"]])

    def with_penalties(self, penalties: PenaltyConfig) -> "UCInstance":
        return UCInstance(self.generators, self.network, self.horizon, self.nominal_load, penalties)

    def physics_dict(self) -> dict:
        net = self.network
        return {
            "generators": [_gen_to_dict(g) for g in self.generators],
            "network": {
                "buses": net.n_buses,
                "reference_bus": net.reference_bus,
                "lines": [
                    {"from": ln.from_bus, "to": ln.to_bus, "reactance": ln.reactance, "flow_limit": ln.flow_limit}
                    for ln in net.lines
                ],
            },
            "horizon": self.horizon,
            "nominal_load": self.nominal_load.tolist(),
        }

    def digest(self) -> str:
        """Hash of everything except penalties."""
        return _digest(self.physics_dict())

    def to_dict(self) -> dict:
        d = {"format": INSTANCE_FORMAT, **self.physics_dict()}
        d["penalties"] = None if self.penalties is None else self.penalties.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "UCInstance":
        _check_format(d, INSTANCE_FORMAT)
        try:
            gens = tuple(Generator(**g) for g in d["generators"])
            nd = d["network"]
            lines = tuple(Line(int(l["from"]), int(l["to"]), float(l["reactance"]), float(l["flow_limit"])) for l in nd["lines"])
            net = Network(int(nd["buses"]), lines, int(nd.get("reference_bus", 0)))
            horizon = int(d["horizon"])
            load = np.asarray(d["nominal_load"], dtype=float)
            pen = d.get("penalties")
            penalties = None if pen is None else PenaltyConfig.from_dict(pen, len(lines), horizon)
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptFile(f"malformed instance document: {exc}") from exc
        return cls(gens, net, horizon, load, penalties)


def _gen_to_dict(g: Generator) -> dict:
    return {k: getattr(g, k) for k in Generator.__dataclass_fields__}


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _check_format(d: dict, expected: str):
    if not isinstance(d, dict) or "format" not in d:
        raise CorruptFile(f"missing 'format' field (expected {expected!r})")
    if d["format"] != expected:
        raise FormatVersionMismatch(f"format {d['format']!r}, reader supports {expected!r}")


# --------------------------------------------------------------------------- PTDF


def _susceptance(network: Network):
    n, m = network.n_buses, network.n_lines
    inc = np.zeros((m, n))
    for k, ln in enumerate(network.lines):
        inc[k, ln.from_bus] = 1.0
        inc[k, ln.to_bus] = -1.0
    b = np.array([1.0 / ln.reactance for ln in network.lines])
    return inc, b


def is_connected(network: Network) -> bool:
    n = network.n_buses
    if n <= 1:
        return True
    rows = [ln.from_bus for ln in network.lines]
    cols = [ln.to_bus for ln in network.lines]
    adj = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp == 1


def compute_ptdf(network: Network) -> np.ndarray:
    """Line flow sensitivities to bus injections, withdrawn at the reference bus.

    Returns a lines x buses matrix whose reference-bus column is zero.
    """
    n, ref = network.n_buses, network.reference_bus
    if not 0 <= ref < n:
        raise DisconnectedNetwork(f"reference bus {ref} outside 0..{n - 1}")
    if not is_connected(network):
        raise DisconnectedNetwork("network graph is not connected")
    if network.n_lines == 0:
        return _frozen(np.zeros((0, n)))
    inc, b = _susceptance(network)
    bbus = inc.T @ (b[:, None] * inc)
    keep = np.arange(n) != ref
    try:
        x = np.linalg.solve(bbus[np.ix_(keep, keep)], np.eye(n - 1))
    except np.linalg.LinAlgError as exc:
        raise DisconnectedNetwork("reduced susceptance matrix is singular") from exc
    ptdf = np.zeros((network.n_lines, n))
    ptdf[:, keep] = (b[:, None] * inc[:, keep]) @ x
    return _frozen(ptdf)


# --------------------------------------------------------------------------- scenarios


def generate_scenarios(nominal_load, count: int, variability=(0.7, 1.0), seed=None) -> ScenarioSet:
    """Draw ``count`` scenarios, scaling every entry by an independent uniform factor."""
    lo, hi = variability
    if lo <= 0 or lo > hi:
        raise InvalidRange(f"variability range [{lo}, {hi}] must satisfy 0 < lo <= hi")
    if count < 1:
        raise InvalidRange("scenario count must be >= 1")
    nominal = np.asarray(nominal_load, dtype=float)
    rng = np.random.default_rng(seed)
    alpha = rng.uniform(lo, hi, size=(count, *nominal.shape))
    return ScenarioSet.from_arrays(alpha * nominal)


def mean_scenario(scenarios: ScenarioSet) -> Scenario:
    if len(scenarios) == 0:
        raise EmptySet("cannot average an empty scenario set")
    p = scenarios.probabilities
    return Scenario(np.tensordot(p, scenarios.loads, axes=1), 1.0)


# --------------------------------------------------------------------------- validation


def validate_scenarios(scenarios: ScenarioSet, shape=None) -> list[str]:
    out = []
    if len(scenarios) == 0:
        return ["scenarios: set is empty"]
    total = float(np.sum(scenarios.probabilities))
    if abs(total - 1.0) > 1e-9:
        out.append(f"scenarios: probabilities sum to {total:.12g}, expected 1")
    shapes = {s.net_load.shape for s in scenarios}
    if len(shapes) > 1:
        out.append(f"scenarios: inconsistent net_load shapes {sorted(shapes)}")
    for i, s in enumerate(scenarios):
        if not 0.0 < s.probability <= 1.0:
            out.append(f"scenarios[{i}].probability: {s.probability} not in (0, 1]")
        if not np.all(np.isfinite(s.net_load)):
            out.append(f"scenarios[{i}].net_load: non-finite entries")
        if shape is not None and s.net_load.shape != tuple(shape):
            out.append(f"scenarios[{i}].net_load: shape {s.net_load.shape}, expected {tuple(shape)}")
    return out


def validate_instance(instance: UCInstance, scenarios: ScenarioSet | None = None) -> list[str]:
    """Collect every broken invariant as a ``"field: rule"`` message. Empty means valid."""
    out = []
    net = instance.network
    n = net.n_buses
    for g in instance.generators:
        tag = f"generators[{g.id}]"
        if not 0 <= g.bus < n:
            out.append(f"{tag}.bus: {g.bus} not a valid bus index")
        if not 0 <= g.p_min <= g.p_max:
            out.append(f"{tag}.p_min: requires 0 <= p_min <= p_max")
        if g.ramp_up <= 0 or g.ramp_down <= 0:
            out.append(f"{tag}.ramp: ramp limits must be > 0")
        if g.min_up < 1 or g.min_down < 1:
            out.append(f"{tag}.min_up/min_down: must be >= 1")
        costs = (g.cost_energy, g.cost_noload, g.cost_startup, g.cost_shutdown)
        if min(costs) < 0:
            out.append(f"{tag}.cost: all costs must be >= 0")
        if not g.initial_on and g.initial_output != 0:
            out.append(f"{tag}.initial_output: must be 0 when initial_on is false")
        # literal ramping (no start-up/shut-down allowance) needs these for recourse feasibility
        if g.p_min > min(g.ramp_up, g.ramp_down):
            out.append(f"{tag}.p_min: exceeds a ramp limit, start-up/shut-down would be infeasible")
        if g.initial_on and not g.p_min <= g.initial_output <= g.p_max:
            out.append(f"{tag}.initial_output: must lie in [p_min, p_max] when on")
        if g.initial_on and g.initial_output > g.ramp_down:
            out.append(f"{tag}.initial_output: exceeds ramp_down, shut-down at t=1 would be infeasible")
        if g.initial_periods_in_state < 0:
            out.append(f"{tag}.initial_periods_in_state: must be >= 0")
    if not 0 <= net.reference_bus < n:
        out.append(f"network.reference_bus: {net.reference_bus} not a valid bus index")
    for k, ln in enumerate(net.lines):
        if not (0 <= ln.from_bus < n and 0 <= ln.to_bus < n) or ln.from_bus == ln.to_bus:
            out.append(f"network.lines[{k}]: invalid endpoints ({ln.from_bus}, {ln.to_bus})")
        if ln.reactance <= 0:
            out.append(f"network.lines[{k}].reactance: must be > 0")
        if ln.flow_limit <= 0:
            out.append(f"network.lines[{k}].flow_limit: must be > 0")
    if not any(m.startswith("network.lines") for m in out) and not is_connected(net):
        out.append("network: graph is not connected")
    if instance.horizon < 1:
        out.append("horizon: must be >= 1")
    if instance.nominal_load.shape != (n, instance.horizon):
        out.append(f"nominal_load: shape {instance.nominal_load.shape}, expected {(n, instance.horizon)}")
    elif not np.all(np.isfinite(instance.nominal_load)):
        out.append("nominal_load: non-finite entries")
    pen = instance.penalties
    if pen is not None:
        T, L = instance.horizon, net.n_lines
        if pen.shed.shape != (T,) or pen.spill.shape != (T,) or pen.overload.shape != (L, T):
            out.append("penalties: shapes do not match horizon/lines")
        elif pen.floor <= 0:
            out.append("penalties.floor: must be > 0")
        else:
            tol = 1e-12 * pen.floor
            for name in ("shed", "spill", "overload"):
                if np.any(getattr(pen, name) < pen.floor - tol):
                    out.append(f"penalties.{name}: entries below floor {pen.floor}")
    if scenarios is not None:
        out.extend(validate_scenarios(scenarios, (n, instance.horizon)))
    return out


# --------------------------------------------------------------------------- random instances

_DAILY_SHAPE = np.array([
    0.62, 0.58, 0.56, 0.55, 0.56, 0.60, 0.68, 0.78, 0.86, 0.90, 0.93, 0.95,
    0.96, 0.96, 0.95, 0.94, 0.95, 0.98, 1.00, 0.98, 0.92, 0.84, 0.75, 0.67,
])


def random_network(n_buses: int, rng: np.random.Generator, extra_lines: int | None = None) -> list[tuple[int, int, float]]:
    """Random spanning tree plus a few chords; returns (from, to, reactance) triples."""
    order = rng.permutation(n_buses)
    edges = []
    for k in range(1, n_buses):
        parent = order[rng.integers(0, k)]
        edges.append((int(min(parent, order[k])), int(max(parent, order[k]))))
    if extra_lines is None:
        extra_lines = max(1, n_buses // 3) if n_buses > 2 else 0
    existing = set(edges)
    candidates = [(i, j) for i in range(n_buses) for j in range(i + 1, n_buses) if (i, j) not in existing]
    if candidates and extra_lines:
        pick = rng.choice(len(candidates), size=min(extra_lines, len(candidates)), replace=False)
        edges.extend(candidates[i] for i in sorted(pick))
    return [(i, j, float(rng.uniform(0.05, 0.25))) for i, j in edges]


def make_random_instance(n_buses: int, n_gens: int, horizon: int, seed=None, *,
                         penalty_multiplier: float = 10.0, congestion: float = 1.3) -> UCInstance:
    """Seeded synthetic instance that satisfies :func:`validate_instance`.

    Line limits are ``congestion`` times the peak line flows of a copper-plate
    UC dispatch at nominal load, so values near 1 produce binding lines.
    """
    rng = np.random.default_rng(seed)
    triples = random_network(n_buses, rng)

    p_max = rng.uniform(50.0, 200.0, n_gens)
    p_min = p_max * rng.uniform(0.1, 0.3, n_gens)
    ramp = np.maximum(p_max * rng.uniform(0.3, 0.6, n_gens), p_min)
    cost = np.sort(rng.uniform(10.0, 50.0, n_gens))
    gen_bus = rng.integers(0, n_buses, n_gens)
    min_up = rng.integers(1, 5, n_gens)
    min_down = rng.integers(1, 5, n_gens)

    shape = np.resize(_DAILY_SHAPE, horizon)
    share = rng.dirichlet(np.ones(n_buses))
    peak = 0.75 * p_max.sum()
    nominal = peak * share[:, None] * shape[None, :]

    # initial state: merit-order units covering 1.1x the first-period load, each
    # dispatched pro rata and past its min up/down window, so t=0 is reachable
    load0 = float(nominal[:, 0].sum())
    on = np.cumsum(p_max) - p_max < 1.1 * load0
    frac = min(0.85 * load0 / p_max[on].sum(), 1.0)
    out = np.where(on, np.minimum(np.clip(frac * p_max, p_min, p_max), ramp), 0.0)
    held = np.where(on, min_up, min_down) + rng.integers(0, 4, n_gens)
    gens = []
    for g in range(n_gens):
        gens.append(Generator(
            id=g, bus=int(gen_bus[g]), p_min=float(p_min[g]), p_max=float(p_max[g]),
            ramp_up=float(ramp[g]), ramp_down=float(ramp[g]),
            min_up=int(min_up[g]), min_down=int(min_down[g]),
            cost_energy=float(cost[g]), cost_noload=float(rng.uniform(0, 10) * p_min[g] / 10),
            cost_startup=float(rng.uniform(50, 500)), cost_shutdown=float(rng.uniform(0, 50)),
            initial_on=bool(on[g]), initial_periods_in_state=int(held[g]), initial_output=float(out[g]),
        ))

    # limits from the flows of a copper-plate UC dispatch at nominal load
    from .formulation.backend import HighsBackend
    from .formulation.builders import build_deterministic_uc

    lines_tmp = tuple(Line(i, j, x, 1.0) for i, j, x in triples)
    ptdf = compute_ptdf(Network(n_buses, lines_tmp))
    plate = UCInstance(tuple(gens), Network(n_buses, (), 0), horizon, nominal)
    res = HighsBackend().solve(build_deterministic_uc(plate, nominal))
    if not res.optimal:
        res = HighsBackend().solve(build_deterministic_uc(plate, nominal, slacks=True))
    inj = -nominal.copy()
    np.add.at(inj, gen_bus, res.values("p"))
    flows = np.abs(ptdf @ inj).max(axis=1)
    limits = np.maximum(congestion * flows, 0.1 * peak / max(1, n_buses - 1))
    lines = tuple(Line(i, j, x, float(f)) for (i, j, x), f in zip(triples, limits))
    net = Network(n_buses, lines, 0)
    value = penalty_multiplier * float(cost.max())
    pen = PenaltyConfig.uniform(len(lines), horizon, value)
    return UCInstance(tuple(gens), net, horizon, nominal, pen)


# --------------------------------------------------------------------------- files


def save_instance(instance: UCInstance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=1))


def load_instance(path) -> UCInstance:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError:
        raise
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return UCInstance.from_dict(doc)


def save_scenarios(scenarios: ScenarioSet, path) -> None:
    Path(path).write_text(json.dumps(scenarios.to_dict()))


def load_scenarios(path) -> ScenarioSet:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    return ScenarioSet.from_dict(doc)
