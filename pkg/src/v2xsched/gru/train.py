"""Adam mini-batch training with best-validation weight selection."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .model import GruModel, mse_grad

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    pass


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int = -1
    seconds: float = 0.0


def model_inputs(model: GruModel, X, feature: int):
    """Input columns a model consumes: all three, or only its own target feature."""
    if model.input_dim == X.shape[2]:
        return X
    if model.input_dim == 1:
        return X[:, :, feature : feature + 1]
    raise ValueError(f"{model.name}: input dim {model.input_dim} does not fit {X.shape[2]} features")


def predict(model: GruModel, X, batch: int = 256):
    """Forward in chunks; returns (N, output_dim)."""
    out = [model.forward(X[i : i + batch]) for i in range(0, len(X), batch)]
    return np.concatenate(out) if out else np.zeros((0, model.output_dim))


def evaluate(model: GruModel, X, T, batch: int = 256) -> float:
    if len(X) == 0:
        return float("nan")
    return float(np.mean((predict(model, X, batch) - T) ** 2))


def train(
    model: GruModel,
    dataset: Dataset,
    epochs: int = 50,
    batch: int = 64,
    lr: float = 1e-3,
    seed: int = 0,
    *,
    time_budget_s: float | None = None,
    clip_norm: float | None = None,
    bptt_steps: int | None = None,
    max_batches: int | None = None,
    progress=None,
) -> tuple[GruModel, TrainHistory]:
    """Fit ``model`` to the dataset's residual targets.

    Mini-batches are reshuffled every epoch from ``seed``. The returned model carries
    the weights of the epoch with the lowest validation MSE. ``time_budget_s`` ends
    training at the first batch past the budget (the partial epoch is still validated). ``clip_norm`` rescales the global gradient
    norm; None disables it. ``bptt_steps`` truncates backpropagation through time to the
    last that many steps (None is exact BPTT). ``max_batches`` caps the total number of
    optimizer steps.
    """
    tr_idx, va_idx = dataset.split["train"], dataset.split["val"]
    if len(tr_idx) == 0:
        raise ValueError("empty training partition")
    X = model_inputs(model, dataset.X, dataset.feature)
    R = dataset.residual_targets()
    Xva, Rva = X[va_idx], R[va_idx]
    rng = np.random.default_rng(seed)
    params = model.params()
    opt = Adam(params, lr=lr)
    hist = TrainHistory()
    best = [p.copy() for p in params]
    best_val = np.inf
    start = time.perf_counter()
    steps = 0
    for epoch in range(epochs):
        order = rng.permutation(tr_idx)
        total, count = 0.0, 0
        for i in range(0, len(order), batch):
            bi = np.sort(order[i : i + batch])
            xb, tb = X[bi], R[bi]
            pred, caches = model.forward(xb, return_cache=True, tail_steps=bptt_steps)
            loss = float(np.mean((pred - tb) ** 2))
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"{model.name}: non-finite loss at epoch {epoch} batch {i // batch} (lr={lr})"
                )
            grads = model.backward(mse_grad(pred, tb), caches, bptt_steps)
            del caches
            if clip_norm is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
                if norm > clip_norm:
                    grads = [g * (clip_norm / norm) for g in grads]
            opt.step(params, grads)
            total += loss * len(bi)
            count += len(bi)
            steps += 1
            if (max_batches is not None and steps >= max_batches) or (
                time_budget_s is not None and time.perf_counter() - start > time_budget_s
            ):
                break
        train_mse = total / count
        val_mse = evaluate(model, Xva, Rva) if len(va_idx) else train_mse
        if not np.isfinite(val_mse):
            raise TrainingDivergedError(f"{model.name}: non-finite validation MSE at epoch {epoch}")
        hist.train_mse.append(train_mse)
        hist.val_mse.append(val_mse)
        if val_mse < best_val:
            best_val = val_mse
            hist.best_epoch = epoch
            best = [p.copy() for p in params]
        elapsed = time.perf_counter() - start
        log.info("%s epoch %d train %.3g val %.3g (%.0fs)", model.name, epoch, train_mse, val_mse, elapsed)
        if progress is not None:
            progress(model.name, epoch, train_mse, val_mse, elapsed)
        if (max_batches is not None and steps >= max_batches) or (
            time_budget_s is not None and elapsed > time_budget_s
        ):
            break
    for p, b in zip(params, best):
        p[...] = b
    hist.seconds = time.perf_counter() - start
    model.meta.update({"feature": dataset.feature, "residual": True, "best_val_mse": float(best_val)})
    return model, hist


def heldout_mse(model: GruModel, dataset: Dataset) -> float:
    idx = dataset.split["test"]
    X = model_inputs(model, dataset.X[idx], dataset.feature)
    return evaluate(model, X, dataset.residual_targets(idx))
