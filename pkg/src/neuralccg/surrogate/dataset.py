"""Training data for the recourse surrogate: commitment pool, scenario sampling, exact labels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BackendFailure, CorruptFile, FormatVersionMismatch, StaleModel
from ..formulation.backend import HighsBackend, SolverBackend
from ..formulation.builders import build_deterministic_uc, penalties_of
from ..recourse import evaluate_pairs
from ..system_model import UCInstance, generate_scenarios

DATASET_FORMAT = "suc-dataset/1"


@dataclass
class SurrogateDataset:
    z: np.ndarray      # (M, G*T) 0/1
    xi: np.ndarray     # (M, N*T) MW
    q: np.ndarray      # (M,) $
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.q)

    @property
    def features(self) -> np.ndarray:
        return np.concatenate([self.z.astype(float), self.xi], axis=1)

    def subset(self, idx) -> "SurrogateDataset":
        return SurrogateDataset(self.z[idx], self.xi[idx], self.q[idx], dict(self.meta))


def repair_commitment(instance: UCInstance, z) -> np.ndarray:
    """Project a 0/1 matrix onto commitments satisfying logic and min up/down times.

    Walks each unit forward in time and reverts any switch that would cut the
    current run short; this also honours the initial-state obligations.
    """
    z = np.array(z, dtype=int)
    for g, gen in enumerate(instance.generators):
        state, run = int(gen.initial_on), gen.initial_periods_in_state
        for t in range(instance.horizon):
            want = int(z[g, t])
            if want != state:
                need = gen.min_up if state else gen.min_down
                if run >= need:
                    state, run = want, 1
                    continue
                z[g, t] = state
            run += 1
    return z


def commitment_pool(instance: UCInstance, n_uc: int, rng: np.random.Generator,
                    backend: SolverBackend, variability=(0.7, 1.0)) -> list[np.ndarray]:
    """Distinct UC solutions under randomly perturbed nominal loads."""
    pool, seen = [], set()
    lo, hi = variability
    span = hi - lo
    for _ in range(n_uc):
        # overall level within an extended range, plus per-entry noise
        level = rng.uniform(lo - 0.5 * span, hi + 0.25 * span)
        noise = rng.uniform(1 - 0.5 * span, 1 + 0.5 * span, size=instance.nominal_load.shape)
        res = backend.solve(build_deterministic_uc(instance, instance.nominal_load * level * noise, slacks=True))
        if not res.optimal:
            raise BackendFailure(f"UC for the commitment pool returned {res.status.value}", res.status)
        z = np.rint(res.values("z")).astype(int)
        key = z.tobytes()
        if key not in seen:
            seen.add(key)
            pool.append(z)
    return pool


def sample_commitments(instance: UCInstance, n: int, pool: list, rng: np.random.Generator,
                       flip_fraction: float = 0.5, max_flip_rate: float = 0.15) -> np.ndarray:
    """Half pool members, half repaired random bit-flips of pool members."""
    G, T = instance.n_gens, instance.horizon
    out = np.empty((n, G, T), dtype=int)
    flipped = rng.random(n) < flip_fraction
    base = rng.integers(0, len(pool), n)
    for i in range(n):
        z = pool[base[i]].copy()
        if flipped[i]:
            rate = rng.uniform(0.0, max_flip_rate)
            mask = rng.random((G, T)) < rate
            if not mask.any():
                mask[rng.integers(G), rng.integers(T)] = True
            z = repair_commitment(instance, np.where(mask, 1 - z, z))
        out[i] = z
    return out


def generate_dataset(instance: UCInstance, n_samples: int, seed=None, workers: int | None = None,
                     backend: SolverBackend | None = None, *, variability=(0.7, 1.0),
                     n_uc: int | None = None) -> SurrogateDataset:
    """Sample (z, xi) pairs and label them with exact recourse costs.

    Deterministic for a fixed seed regardless of ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    backend = backend or HighsBackend()
    rng = np.random.default_rng(seed)
    n_uc = n_uc if n_uc is not None else int(np.clip(n_samples // 500, 4, 24))
    pool = commitment_pool(instance, n_uc, rng, backend, variability)
    zs = sample_commitments(instance, n_samples, pool, rng)
    scen_seed = int(rng.integers(0, 2**63 - 1))
    loads = generate_scenarios(instance.nominal_load, n_samples, variability, scen_seed).loads
    evals = evaluate_pairs(instance, zs, loads, backend, workers)
    q = np.array([e.cost for e in evals])
    meta = {
        "instance_hash": instance.digest(),
        "penalty_hash": penalties_of(instance).digest(),
        "count": int(n_samples),
        "pool_size": len(pool),
        "seed": seed,
        "variability": list(variability),
    }
    return SurrogateDataset(zs.reshape(n_samples, -1).astype(np.int8), loads.reshape(n_samples, -1), q, meta)


def save_dataset(ds: SurrogateDataset, path) -> None:
    """First line: JSON header; then one comma-separated row per sample (z..., xi..., Q)."""
    header = dict(ds.meta)
    header.update({"format": DATASET_FORMAT, "count": len(ds), "z_dim": ds.z.shape[1], "xi_dim": ds.xi.shape[1]})
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for z, xi, q in zip(ds.z, ds.xi, ds.q):
            fh.write(",".join(map(str, z.tolist())) + "," + ",".join(map(repr, xi.tolist())) + "," + repr(float(q)) + "\n")


def load_dataset(path, instance: UCInstance | None = None) -> SurrogateDataset:
    path = Path(path)
    try:
        with open(path) as fh:
            header = json.loads(fh.readline())
            if not isinstance(header, dict) or "format" not in header:
                raise CorruptFile(f"{path}: missing format field")
            if header["format"] != DATASET_FORMAT:
                raise FormatVersionMismatch(f"{path}: format {header['format']!r}, reader supports {DATASET_FORMAT!r}")
            zd, xd, n = int(header["z_dim"]), int(header["xi_dim"]), int(header["count"])
            data = np.loadtxt(fh, delimiter=",", ndmin=2) if n else np.zeros((0, zd + xd + 1))
    except (json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if data.shape != (n, zd + xd + 1):
        raise CorruptFile(f"{path}: expected {n} rows of {zd + xd + 1} values, found {data.shape}")
    ds = SurrogateDataset(data[:, :zd].astype(np.int8), data[:, zd:zd + xd], data[:, -1],
                          {k: v for k, v in header.items() if k not in ("format", "z_dim", "xi_dim")})
    if instance is not None and header.get("instance_hash") != instance.digest():
        raise StaleModel(f"{path}: dataset built for instance {header.get('instance_hash')}, got {instance.digest()}")
    return ds
