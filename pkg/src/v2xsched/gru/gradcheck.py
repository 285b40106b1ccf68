"""Central finite-difference check of the analytic gradients."""
from __future__ import annotations

import numpy as np

from .model import GruModel, build_model, mse_grad, mse_loss


def grad_check(model: GruModel, X, Y, eps: float = 1e-5, n_weights: int = 200, seed: int = 0) -> float:
    """Max relative error between backprop and central differences.

    Checks ``n_weights`` randomly chosen scalar parameters (all of them if there are
    fewer), relative error |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-12).
    """
    pred, caches = model.forward(X, return_cache=True)
    grads = model.backward(mse_grad(pred, Y), caches)
    params = model.params()
    sizes = np.array([p.size for p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = np.arange(total) if total <= n_weights else rng.choice(total, size=n_weights, replace=False)
    bounds = np.cumsum(sizes)
    worst = 0.0
    for flat in np.sort(picks):
        k = int(np.searchsorted(bounds, flat, side="right"))
        local = int(flat - (bounds[k - 1] if k else 0))
        p = params[k].reshape(-1)
        orig = p[local]
        p[local] = orig + eps
        lp = mse_loss(model.forward(X), Y)
        p[local] = orig - eps
        lm = mse_loss(model.forward(X), Y)
        p[local] = orig
        g_fd = (lp - lm) / (2 * eps)
        g_bp = float(grads[k].reshape(-1)[local])
        rel = abs(g_bp - g_fd) / max(abs(g_bp), abs(g_fd), 1e-12)
        worst = max(worst, rel)
    return worst


def small_problem(seed: int = 0, hidden: int = 4, steps: int = 20, batch: int = 3, input_dim: int = 3):
    """A hidden-4 / sequence-20 model, inputs and targets for gradient checking."""
    arch = [("gru", hidden), ("gru", hidden), ("dense", 3, "relu"), ("dense", 10, "linear")]
    model = build_model("check", input_dim, seed, architecture=arch)
    rng = np.random.default_rng(seed + 1)
    for p in model.params():
        # non-zero biases so every gate and relu branch is exercised
        p += rng.normal(0, 0.3, p.shape)
    X = rng.normal(0, 1, (batch, steps, input_dim))
    Y = rng.normal(0, 1, (batch, 10))
    return model, X, Y
