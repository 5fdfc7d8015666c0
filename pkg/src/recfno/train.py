"""Optimization loop: Adam, multiplicative learning-rate decay, L1 loss,
seeded minibatching, and validation-based checkpoint selection.

The per-epoch validation pass runs with parameters rounded to float32 — the
precision a checkpoint stores — so a saved-then-reloaded model reproduces the
recorded validation metrics bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .errors import TrainingDiverged
from .metrics import mae, max_ae
from .rng import Rng
from .tensor import ComplexTensor, Tensor


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 8
    lr0: float = 1e-3
    decay: float = 0.97
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not (0.0 < self.decay <= 1.0):
            raise ValueError("decay factor must be in (0, 1]")


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    """Multiplicative schedule: lr0 * decay^epoch."""
    return cfg.lr0 * cfg.decay**epoch


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean absolute difference (subgradient 0 at ties)."""
    return T.mean_(T.abs_(T.sub(pred, target)))


def _float_view(arr: np.ndarray) -> np.ndarray:
    """Real view of a parameter buffer; complex becomes interleaved pairs."""
    if np.iscomplexobj(arr):
        return arr.view(np.float64)
    return arr


class Adam:
    """Standard bias-corrected Adam; complex weights update as two
    independent real components."""

    def __init__(self, params, cfg: TrainConfig):
        self.params = list(params)  # [(name, tensor)]
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(_float_view(p.data)) for _, p in self.params]
        self.v = [np.zeros_like(_float_view(p.data)) for _, p in self.params]

    def zero_grad(self):
        for _, p in self.params:
            p.zero_grad()

    def step(self, lr: float):
        cfg = self.cfg
        self.t += 1
        c1 = 1.0 - cfg.beta1**self.t
        c2 = 1.0 - cfg.beta2**self.t
        for i, (name, p) in enumerate(self.params):
            if p.grad is None:
                g = np.zeros_like(_float_view(p.data))
            else:
                g = _float_view(np.ascontiguousarray(p.grad))
                if not np.all(np.isfinite(g)):
                    raise TrainingDiverged(f"NaN/Inf gradient in parameter {name!r}")
            m, v = self.m[i], self.v[i]
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * g * g
            upd = lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
            _float_view(p.data)[...] -= upd


@dataclass
class Normalization:
    """z-score transform fitted on the training split."""

    mean: float
    std: float

    def normalize(self, x):
        return (x - self.mean) / self.std

    def denormalize(self, x):
        return x * self.std + self.mean


@dataclass
class HistoryRow:
    epoch: int
    lr: float
    train_l1: float
    val_l1: float
    val_mae: float
    val_maxae: float


HISTORY_COLUMNS = ("epoch", "lr", "train_l1", "val_l1", "val_mae", "val_maxae")


def history_to_csv(history: list[HistoryRow]) -> str:
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        lines.append(
            f"{row.epoch},{row.lr!r},{row.train_l1!r},{row.val_l1!r},{row.val_mae!r},{row.val_maxae!r}"
        )
    return "\n".join(lines) + "\n"


@dataclass
class TrainResult:
    history: list[HistoryRow]
    best_epoch: int
    best_val_mae: float
    best_state: list[tuple[str, np.ndarray]]  # float32-rounded parameter values
    diverged: bool = False


def _round_f32(arr: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(arr):
        return arr.astype(np.complex64).astype(np.complex128)
    return arr.astype(np.float32).astype(np.float64)


def train_loop(adapter, train_samples, val_samples, cfg: TrainConfig) -> TrainResult:
    """Generic loop over a model adapter.

    The adapter provides parameters() -> [(name, tensor)], loss(sample) ->
    scalar Tensor recorded on the tape, and predict_physical(sample) ->
    ndarray in physical units for validation metrics.
    """
    params = adapter.parameters()
    adam = Adam(params, cfg)
    rng = Rng(cfg.seed)
    history: list[HistoryRow] = []
    best_epoch, best_val = -1, np.inf
    best_state = [(n, _round_f32(p.data)) for n, p in params]
    diverged = False

    n_train = len(train_samples)
    for epoch in range(cfg.epochs):
        lr = lr_at(epoch, cfg)
        order = rng.derive("shuffle", epoch).permutation(n_train)
        running, seen = 0.0, 0
        for start in range(0, n_train, cfg.batch_size):
            chunk = order[start : start + cfg.batch_size]
            adam.zero_grad()
            value = 0.0
            # one backward per sample: gradients accumulate across the
            # minibatch, and the tape (plus its buffers) stays small
            for idx in chunk:
                T.active_tape().clear()
                li = T.mul(adapter.loss(train_samples[int(idx)]), 1.0 / len(chunk))
                value += li.item()
                T.backward(li)
            if not np.isfinite(value):
                diverged = True
                break
            try:
                adam.step(lr)
            except TrainingDiverged:
                diverged = True
                break
            running += value * len(chunk)
            seen += len(chunk)
        if diverged:
            break
        train_l1 = running / max(seen, 1)

        # validate with float32-rounded parameters (what a checkpoint holds)
        masters = [p.data.copy() for _, p in params]
        for _, p in params:
            p.data[...] = _round_f32(p.data)
        with T.no_grad():
            val_l1 = 0.0
            maes, maxes = [], []
            for sample in val_samples:
                val_l1 += adapter.loss(sample).item()
                pred = adapter.predict_physical(sample)
                maes.append(mae(sample.target_phys, pred))
                maxes.append(max_ae(sample.target_phys, pred))
            val_l1 /= max(len(val_samples), 1)
            val_mae = float(np.mean(maes)) if maes else np.inf
            val_maxae = float(np.max(maxes)) if maxes else np.inf
        if val_mae < best_val:
            best_val = val_mae
            best_epoch = epoch
            best_state = [(n, p.data.copy()) for n, p in params]
        for (_, p), master in zip(params, masters):
            p.data[...] = master

        history.append(HistoryRow(epoch, lr, train_l1, val_l1, val_mae, val_maxae))

    return TrainResult(history, best_epoch, float(best_val), best_state, diverged)
