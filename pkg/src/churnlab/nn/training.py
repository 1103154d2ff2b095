"""Mini-batch training with early stopping on a stratified validation split."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Mapping, Protocol

import numpy as np

from .layers import bce_loss
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


class NumericalError(ArithmeticError):
    """Training produced a non-finite loss or parameter."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 256
    max_epochs: int = 100
    patience: int = 10
    validation_fraction: float = 0.1
    seed: int = 0
    clip_norm: float | None = None

    def __post_init__(self) -> None:
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0.0 < self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown train config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


class Trainable(Protocol):
    def trainable_params(self) -> dict[str, np.ndarray]: ...
    def forward(self, inputs, train: bool = False) -> tuple[np.ndarray, object]: ...
    def backward(self, cache, dp: np.ndarray) -> dict[str, np.ndarray]: ...


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = -1  # 0-based index into the loss lists

    @property
    def epochs(self) -> int:
        return len(self.val_loss)

    def to_dict(self) -> dict:
        return asdict(self)


def stratified_split(y: np.ndarray, fraction: float, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(train_idx, val_idx) holding out ``fraction`` of each class."""
    y = np.asarray(y)
    val = []
    for cls in np.unique(y):
        idx = rng.permutation(np.flatnonzero(y == cls))
        n_val = int(round(fraction * idx.size))
        if idx.size > 1:
            n_val = min(max(n_val, 1), idx.size - 1)
        else:
            n_val = 0
        val.append(idx[:n_val])
    val_idx = np.sort(np.concatenate(val)) if val else np.zeros(0, dtype=np.int64)
    mask = np.ones(y.size, dtype=bool)
    mask[val_idx] = False
    return np.flatnonzero(mask), val_idx


def _clip(grads: dict[str, np.ndarray], max_norm: float) -> None:
    norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if norm > max_norm:
        for g in grads.values():
            g *= max_norm / norm


def evaluate_loss(model: Trainable, inputs, y: np.ndarray) -> float:
    p, _ = model.forward(inputs)
    return bce_loss(p, y)[0]


def train(
    model: Trainable,
    inputs,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    epoch_hook: Callable[[int, Trainable], None] | None = None,
) -> History:
    """Fit ``model`` in place and return the loss history.

    ``inputs`` must support ``inputs[idx]`` row selection. Parameters of the
    epoch with the lowest validation loss are restored at the end.
    ``epoch_hook(epoch, model)`` runs after each epoch's updates, before the
    validation loss is measured.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    if n < 2 * cfg.batch_size:
        raise ValueError(f"{n} samples is fewer than two batches of {cfg.batch_size}")
    rng = np.random.default_rng(cfg.seed)
    tr_idx, va_idx = stratified_split(y, cfg.validation_fraction, rng)
    val_inputs, val_y = inputs[va_idx], y[va_idx]
    params = model.trainable_params()
    state = AdamState()
    hist = History()
    best_loss = np.inf
    best = {k: v.copy() for k, v in params.items()}
    wait = 0
    for epoch in range(cfg.max_epochs):
        order = tr_idx[rng.permutation(tr_idx.size)]
        total = 0.0
        for start in range(0, order.size, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            p, cache = model.forward(inputs[batch], train=True)
            loss, dp = bce_loss(p, y[batch])
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite training loss at epoch {epoch}")
            grads = model.backward(cache, dp)
            if cfg.clip_norm is not None:
                _clip(grads, cfg.clip_norm)
            adam_step(params, grads, state, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
            total += loss * batch.size
        if epoch_hook is not None:
            epoch_hook(epoch, model)
        if not all(np.isfinite(v).all() for v in params.values()):
            raise NumericalError(f"non-finite parameters after epoch {epoch}; try clip_norm")
        val_loss = evaluate_loss(model, val_inputs, val_y)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        hist.train_loss.append(total / order.size)
        hist.val_loss.append(val_loss)
        if val_loss < best_loss:
            best_loss, hist.best_epoch, wait = val_loss, epoch, 0
            for k, v in params.items():
                np.copyto(best[k], v)
        else:
            wait += 1
            if wait >= cfg.patience:
                break
    for k, v in params.items():
        np.copyto(v, best[k])
    log.debug("trained %d epochs, best %d (val %.5f)", hist.epochs, hist.best_epoch, best_loss)
    return hist
