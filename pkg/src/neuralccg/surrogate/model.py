"""Surrogate recourse model: normalizer + MLP bound to one instance, and its file format."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import CorruptFile, FormatVersionMismatch, ShapeMismatch, StaleModel
from ..system_model import UCInstance
from .mlp import MLP

MODEL_FORMAT = "suc-model/1"


@dataclass
class Normalizer:
    """Affine maps ``(x - offset) / scale`` for inputs and the scalar target."""

    in_offset: np.ndarray
    in_scale: np.ndarray
    out_offset: float = 0.0
    out_scale: float = 1.0

    def __post_init__(self):
        self.in_offset = np.asarray(self.in_offset, float)
        self.in_scale = np.asarray(self.in_scale, float)
        if np.any(self.in_scale <= 0) or self.out_scale <= 0:
            raise ValueError("normalizer scales must be > 0")

    @classmethod
    def identity(cls, n_inputs: int) -> "Normalizer":
        return cls(np.zeros(n_inputs), np.ones(n_inputs))

    @classmethod
    def for_instance(cls, instance: UCInstance, targets=None, center: bool = False) -> "Normalizer":
        """z passes through; xi is divided by nominal load (zeros guarded with 1).

        The target is divided by its mean. With ``center`` the load ratios are
        shifted by 1 and the target is standardized instead.
        """
        gt = instance.n_gens * instance.horizon
        nominal = instance.nominal_load.ravel()
        scale = np.where(np.abs(nominal) > 0, np.abs(nominal), 1.0)
        offset = np.concatenate([np.zeros(gt), scale if center else np.zeros_like(scale)])
        scale = np.concatenate([np.ones(gt), scale])
        if targets is None:
            return cls(offset, scale)
        t = np.asarray(targets, float)
        mean = float(t.mean())
        if center:
            std = float(t.std())
            return cls(offset, scale, mean, std if std > 0 else max(abs(mean), 1.0))
        return cls(offset, scale, 0.0, mean if mean > 0 else 1.0)

    def transform_inputs(self, x):
        return (np.asarray(x, float) - self.in_offset) / self.in_scale

    def inverse_inputs(self, x):
        return np.asarray(x, float) * self.in_scale + self.in_offset

    def transform_target(self, y):
        return (np.asarray(y, float) - self.out_offset) / self.out_scale

    def inverse_target(self, y):
        return np.asarray(y, float) * self.out_scale + self.out_offset

    def to_dict(self) -> dict:
        return {"in_offset": self.in_offset.tolist(), "in_scale": self.in_scale.tolist(),
                "out_offset": self.out_offset, "out_scale": self.out_scale}


def flatten_inputs(z, loads) -> np.ndarray:
    """Concatenate flattened commitments and net loads into network inputs.

    ``z`` is (G, T) or (B, G, T); ``loads`` (N, T) or (B, N, T). A single
    commitment broadcasts against a batch of loads.
    """
    z = np.asarray(z, float)
    loads = np.asarray(loads, float)
    if z.ndim == 2 and loads.ndim == 2:
        return np.concatenate([z.ravel(), loads.ravel()])[None]
    if z.ndim == 2:
        z = np.broadcast_to(z, (loads.shape[0], *z.shape))
    zb = z.reshape(z.shape[0], -1)
    lb = loads.reshape(loads.shape[0], -1)
    return np.concatenate([zb, lb], axis=1)


@dataclass
class SurrogateModel:
    mlp: MLP
    normalizer: Normalizer
    instance_hash: str
    penalty_hash: str | None
    n_gens: int
    n_buses: int
    horizon: int
    mean_target: float = 1.0

    @property
    def n_inputs(self) -> int:
        return (self.n_gens + self.n_buses) * self.horizon

    def check_instance(self, instance: UCInstance):
        if instance.digest() != self.instance_hash:
            raise StaleModel(f"model trained for instance {self.instance_hash}, got {instance.digest()}")
        pen = instance.penalties.digest() if instance.penalties is not None else None
        if self.penalty_hash is not None and pen is not None and pen != self.penalty_hash:
            raise StaleModel("model trained under different penalty settings")

    def predict_features(self, x) -> np.ndarray:
        return self.normalizer.inverse_target(self.mlp.forward(self.normalizer.transform_inputs(x)))

    def estimate(self, z, loads) -> np.ndarray:
        """Estimated recourse cost for one commitment against a stack of loads."""
        z = np.asarray(z)
        loads = np.asarray(loads, float)
        if z.shape[-2:] != (self.n_gens, self.horizon) or loads.shape[-2:] != (self.n_buses, self.horizon):
            raise ShapeMismatch(f"z {z.shape} / loads {loads.shape} do not match model "
                                f"({self.n_gens}, {self.n_buses}, {self.horizon})")
        if loads.ndim == 2:
            loads = loads[None]
        return self.predict_features(flatten_inputs(z, loads))


def forward(model: SurrogateModel, z, xi, instance: UCInstance | None = None) -> float:
    """Single surrogate evaluation in $; checks the instance hash when given one."""
    if instance is not None:
        model.check_instance(instance)
    load = getattr(xi, "net_load", xi)
    return float(model.estimate(z, load)[0])


def save_model(model: SurrogateModel, path) -> None:
    doc = {
        "format": MODEL_FORMAT,
        "dims": model.mlp.dims,
        "instance_hash": model.instance_hash,
        "penalty_hash": model.penalty_hash,
        "shape": {"generators": model.n_gens, "buses": model.n_buses, "horizon": model.horizon},
        "mean_target": model.mean_target,
        "normalizer": model.normalizer.to_dict(),
        "weights": [w.tolist() for w in model.mlp.weights],
        "biases": [b.tolist() for b in model.mlp.biases],
    }
    Path(path).write_text(json.dumps(doc))


def load_model(path) -> SurrogateModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if not isinstance(doc, dict) or "format" not in doc:
        raise CorruptFile(f"{path}: missing format field")
    if doc["format"] != MODEL_FORMAT:
        raise FormatVersionMismatch(f"{path}: format {doc['format']!r}, reader supports {MODEL_FORMAT!r}")
    try:
        ws = [np.asarray(w, float) for w in doc["weights"]]
        bs = [np.asarray(b, float) for b in doc["biases"]]
        dims = list(doc["dims"])
        if [ws[0].shape[0]] + [w.shape[1] for w in ws] != dims or any(b.shape != (w.shape[1],) for w, b in zip(ws, bs)):
            raise ValueError("weight shapes disagree with dims")
        nd = doc["normalizer"]
        norm = Normalizer(nd["in_offset"], nd["in_scale"], float(nd["out_offset"]), float(nd["out_scale"]))
        shape = doc["shape"]
        model = SurrogateModel(MLP(ws, bs), norm, doc["instance_hash"], doc.get("penalty_hash"),
                               int(shape["generators"]), int(shape["buses"]), int(shape["horizon"]),
                               float(doc.get("mean_target", 1.0)))
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    if model.n_inputs != dims[0]:
        raise CorruptFile(f"{path}: input dim {dims[0]} != (G+N)*T = {model.n_inputs}")
    return model
