"""Mini-batch Adam training of the recourse surrogate."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import Diverged
from ..system_model import UCInstance
from .dataset import SurrogateDataset
from .mlp import DESK_HIDDEN, MLP, Adam
from .model import Normalizer, SurrogateModel

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    hidden: tuple = DESK_HIDDEN
    lr: float = 1e-3
    batch: int = 256
    epochs: int = 200
    seed: int = 0
    val_fraction: float = 0.2
    patience: int = 10
    center: bool = False  # True: standardize the target instead of dividing by its mean
    lr_decay: float = 1.0  # multiplicative per epoch


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_mape: list = field(default_factory=list)
    best_epoch: int = -1


def mape(pred, target) -> float:
    """Mean absolute percentage error in percent (zero targets skipped)."""
    pred, target = np.asarray(pred, float), np.asarray(target, float)
    keep = np.abs(target) > 0
    return float(100.0 * np.mean(np.abs(pred[keep] - target[keep]) / np.abs(target[keep])))


def split_indices(n: int, val_fraction: float, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_val = int(round(val_fraction * n))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def train(dataset: SurrogateDataset, instance: UCInstance, config: TrainConfig | None = None,
          **overrides) -> tuple[SurrogateModel, TrainHistory]:
    """Fit an MLP on normalized (z, xi) -> Q with early stopping on validation loss.

    Returns the weights from the best validation epoch.
    """
    cfg = config or TrainConfig()
    for k, v in overrides.items():
        setattr(cfg, k, v)
    n = len(dataset)
    if n < 100:
        raise ValueError(f"need at least 100 samples to train, got {n}")
    if not 0 < cfg.val_fraction < 1:
        raise ValueError("val_fraction must lie in (0, 1)")
    tr, va = split_indices(n, cfg.val_fraction, cfg.seed)
    x_all = dataset.features
    norm = Normalizer.for_instance(instance, dataset.q[tr], center=cfg.center)
    x_tr, x_va = norm.transform_inputs(x_all[tr]), norm.transform_inputs(x_all[va])
    y_tr, y_va = norm.transform_target(dataset.q[tr]), norm.transform_target(dataset.q[va])

    rng = np.random.default_rng(cfg.seed + 1)
    mlp = MLP.init([x_all.shape[1], *cfg.hidden, 1], seed=cfg.seed)
    opt = Adam(mlp.params(), lr=cfg.lr)
    hist = TrainHistory()
    best, best_loss, stale = mlp.copy(), np.inf, 0

    def val_loss(m):
        err = m.forward(x_va) - y_va
        return 0.5 * float(err @ err) / len(y_va)

    for epoch in range(cfg.epochs):
        order = rng.permutation(len(tr))
        total = 0.0
        for start in range(0, len(order), cfg.batch):
            idx = order[start:start + cfg.batch]
            loss, grads = mlp.loss_and_grads(x_tr[idx], y_tr[idx])
            if not np.isfinite(loss):
                raise Diverged(f"non-finite training loss at epoch {epoch}; lower the learning rate")
            opt.step(mlp.params(), grads)
            total += loss * len(idx)
        vl = val_loss(mlp)
        if not np.isfinite(vl):
            raise Diverged(f"non-finite validation loss at epoch {epoch}")
        hist.train_loss.append(total / len(tr))
        hist.val_loss.append(vl)
        hist.val_mape.append(mape(norm.inverse_target(mlp.forward(x_va)), dataset.q[va]))
        log.info("epoch %d train %.4g val %.4g mape %.3f%%", epoch, hist.train_loss[-1], vl, hist.val_mape[-1])
        if vl < best_loss:
            best, best_loss, stale, hist.best_epoch = mlp.copy(), vl, 0, epoch
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        opt.lr *= cfg.lr_decay

    model = SurrogateModel(
        best, norm, instance.digest(), dataset.meta.get("penalty_hash"),
        instance.n_gens, instance.n_buses, instance.horizon, float(np.mean(dataset.q[tr])),
    )
    return model, hist
