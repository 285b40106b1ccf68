"""GRU and dense layers with exact backpropagation through time.

Layers use the row-vector convention: a GRU layer maps ``x (B, in)`` through
``x @ W + b`` with ``W (in, 3H)`` and recurrent ``U (H, 3H)``, gate blocks ordered
reset, update, candidate. ``GruCellWeights`` gives the per-gate (hidden x input) view.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels

HORIZON = 10

# Table of model structures: ("gru", units) or ("dense", units, activation)
ARCHITECTURES = {
    "speed": [("gru", 128), ("gru", 128), ("dense", HORIZON, "linear")],
    "sine": [("gru", 128), ("gru", 128), ("gru", 128), ("dense", HORIZON, "linear")],
    "cosine": [
        ("gru", 128),
        ("gru", 128),
        ("gru", 128),
        ("dense", 32, "relu"),
        ("dense", 32, "relu"),
        ("dense", HORIZON, "linear"),
    ],
}
MODEL_NAMES = tuple(ARCHITECTURES)


class ShapeError(ValueError):
    pass


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


@dataclass
class GruCellWeights:
    W_r: np.ndarray
    W_z: np.ndarray
    W_h: np.ndarray
    U_r: np.ndarray
    U_z: np.ndarray
    U_h: np.ndarray
    b_r: np.ndarray
    b_z: np.ndarray
    b_h: np.ndarray


def gru_cell_forward(x, h_prev, w: GruCellWeights):
    """One GRU step on vectors: reset r, update z, candidate h~, h = (1-z) h + z h~."""
    x = np.asarray(x, dtype=float)
    h_prev = np.asarray(h_prev, dtype=float)
    H, n_in = w.W_r.shape
    if x.shape != (n_in,) or h_prev.shape != (H,):
        raise ShapeError(f"expected x ({n_in},) and h ({H},), got {x.shape} and {h_prev.shape}")
    r = sigmoid(w.W_r @ x + w.U_r @ h_prev + w.b_r)
    z = sigmoid(w.W_z @ x + w.U_z @ h_prev + w.b_z)
    h_tilde = np.tanh(w.W_h @ x + w.U_h @ (r * h_prev) + w.b_h)
    return (1.0 - z) * h_prev + z * h_tilde


class GruLayer:
    kind = "gru"

    def __init__(self, n_in: int, units: int, rng: np.random.Generator | None = None):
        self.n_in, self.units = n_in, units
        if rng is None:
            self.W = np.zeros((n_in, 3 * units))
            self.U = np.zeros((units, 3 * units))
        else:
            self.W = rng.uniform(-1, 1, (n_in, 3 * units)) / np.sqrt(n_in)
            self.U = rng.uniform(-1, 1, (units, 3 * units)) / np.sqrt(units)
        self.b = np.zeros(3 * units)

    @property
    def n_out(self):
        return self.units

    def params(self):
        return [self.W, self.U, self.b]

    def param_names(self):
        return ["W", "U", "b"]

    def cell_weights(self) -> GruCellWeights:
        H = self.units
        Wt, Ut = self.W.T, self.U.T
        return GruCellWeights(
            Wt[:H].copy(), Wt[H : 2 * H].copy(), Wt[2 * H :].copy(),
            Ut[:H].copy(), Ut[H : 2 * H].copy(), Ut[2 * H :].copy(),
            self.b[:H].copy(), self.b[H : 2 * H].copy(), self.b[2 * H :].copy(),
        )

    def set_cell_weights(self, w: GruCellWeights):
        self.W[...] = np.concatenate([w.W_r, w.W_z, w.W_h]).T
        self.U[...] = np.concatenate([w.U_r, w.U_z, w.U_h]).T
        self.b[...] = np.concatenate([w.b_r, w.b_z, w.b_h])

    def forward(self, X, h0=None):
        """X: (T, B, in) time-major. Returns all hidden states (T, B, H) and a cache."""
        T, B, _ = X.shape
        xw = (X.reshape(T * B, -1) @ self.W + self.b).reshape(T, B, -1)
        h0 = np.zeros((B, self.units)) if h0 is None else np.ascontiguousarray(h0)
        hs, r, z, c = _kernels.gru_forward(xw, self.U, h0)
        return hs, (X, h0, hs, r, z, c)

    def step_states(self, X, h0):
        """Hidden states over X (T, B, in) from h0 without keeping gate activations."""
        T, B, _ = X.shape
        xw = (X.reshape(T * B, -1) @ self.W + self.b).reshape(T, B, -1)
        return _kernels.gru_forward(xw, self.U, np.ascontiguousarray(h0))[0]

    def backward(self, dhs, cache, steps=None, need_dx=True):
        """Gradients from dLoss/dhs. ``steps`` truncates BPTT to the last ``steps`` steps."""
        X, h0, hs, r, z, c = cache
        T, B, H = hs.shape
        k0 = 0 if steps is None or steps >= T else T - steps
        if k0:
            h0 = hs[k0 - 1]
            X, hs, r, z, c = X[k0:], hs[k0:], r[k0:], z[k0:], c[k0:]
            dhs = dhs[k0:]
        Tk = T - k0
        da, _ = _kernels.gru_backward(np.ascontiguousarray(dhs), self.U, np.ascontiguousarray(h0), hs, r, z, c)
        da2 = da.reshape(Tk * B, 3 * H)
        dW = X.reshape(Tk * B, -1).T @ da2
        db = da2.sum(axis=0)
        hprev = np.concatenate([h0[None], hs[:-1]], axis=0).reshape(Tk * B, H)
        dU = np.empty_like(self.U)
        dU[:, : 2 * H] = hprev.T @ da2[:, : 2 * H]
        dU[:, 2 * H :] = (r.reshape(Tk * B, H) * hprev).T @ da2[:, 2 * H :]
        dX = None
        if need_dx:
            dX = np.zeros((T, B, self.n_in))
            dX[k0:] = (da2 @ self.W.T).reshape(Tk, B, self.n_in)
        return dX, [dW, dU, db]


class DenseLayer:
    kind = "dense"

    def __init__(self, n_in: int, units: int, activation: str = "linear",
                 rng: np.random.Generator | None = None):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.n_in, self.units, self.activation = n_in, units, activation
        if rng is None:
            self.W = np.zeros((n_in, units))
        else:
            self.W = rng.uniform(-1, 1, (n_in, units)) / np.sqrt(n_in)
        self.b = np.zeros(units)

    @property
    def n_out(self):
        return self.units

    def params(self):
        return [self.W, self.b]

    def param_names(self):
        return ["W", "b"]

    def forward(self, x):
        a = x @ self.W + self.b
        y = np.maximum(a, 0.0) if self.activation == "relu" else a
        return y, (x, a)

    def backward(self, dy, cache):
        x, a = cache
        da = dy * (a > 0) if self.activation == "relu" else dy
        return da @ self.W.T, [x.T @ da, da.sum(axis=0)]


class GruModel:
    """Stacked GRU layers feeding a dense head from the last time step."""

    def __init__(self, name: str, layers: list, input_dim: int, meta: dict | None = None):
        self.name = name
        self.layers = layers
        self.input_dim = input_dim
        self.meta = dict(meta or {})
        self._check_chain()

    def _check_chain(self):
        n = self.input_dim
        seen_dense = False
        for k, layer in enumerate(self.layers):
            if layer.n_in != n:
                raise ShapeError(f"layer {k} ({layer.kind}) expects input {layer.n_in}, gets {n}")
            if layer.kind == "gru" and seen_dense:
                raise ShapeError(f"layer {k}: GRU after a dense layer")
            seen_dense |= layer.kind == "dense"
            n = layer.n_out
        if not self.layers or self.layers[0].kind != "gru":
            raise ShapeError("model must start with a GRU layer")

    @property
    def output_dim(self):
        return self.layers[-1].n_out

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def param_labels(self):
        return [f"{k}.{layer.kind}.{n}" for k, layer in enumerate(self.layers) for n in layer.param_names()]

    def n_params(self):
        return sum(p.size for p in self.params())

    def _gru_layers(self):
        return [layer for layer in self.layers if layer.kind == "gru"]

    def _prefix_states(self, seq, chunk):
        """Per-layer hidden state after running ``seq`` (T, B, F) in time chunks."""
        B = seq.shape[1]
        hs = [np.zeros((B, layer.units)) for layer in self._gru_layers()]
        for t0 in range(0, seq.shape[0], chunk):
            x = seq[t0 : t0 + chunk]
            for k, layer in enumerate(self._gru_layers()):
                x = layer.step_states(x, hs[k])
                hs[k] = x[-1].copy()
        return hs

    def forward(self, X, return_cache=False, tail_steps=None, chunk=50):
        """X: (B, T, F) batch-major sequences -> (B, output_dim).

        Only the last ``tail_steps`` steps keep gate caches (enough for BPTT truncated to
        that length); earlier steps run in memory-light chunks. Without ``return_cache``
        the whole sequence runs that way.
        """
        X = np.asarray(X, dtype=float)
        if X.ndim != 3 or X.shape[2] != self.input_dim:
            raise ShapeError(f"expected (B, T, {self.input_dim}) input, got {X.shape}")
        seq = np.ascontiguousarray(X.transpose(1, 0, 2))
        T = seq.shape[0]
        if not return_cache:
            head = self._prefix_states(seq, chunk)[-1]
            return self._head(head)[0]
        k0 = 0 if tail_steps is None or tail_steps >= T else T - tail_steps
        h0s = self._prefix_states(seq[:k0], chunk) if k0 else [None] * len(self._gru_layers())
        seq = seq[k0:]
        caches = []
        k = 0
        while k < len(self.layers) and self.layers[k].kind == "gru":
            seq, cache = self.layers[k].forward(seq, h0s[k])
            caches.append(cache)
            k += 1
        y, dense_caches = self._head(seq[-1])
        return y, caches + dense_caches

    def _head(self, y):
        caches = []
        for layer in self.layers[len(self._gru_layers()):]:
            y, cache = layer.forward(y)
            caches.append(cache)
        return y, caches

    def backward(self, dy, caches, bptt_steps=None):
        """Gradients of every parameter given dLoss/dOutput; same order as params().

        Exact BPTT over the whole sequence by default; ``bptt_steps`` truncates it.
        """
        grads = [None] * len(self.layers)
        n_gru = sum(1 for layer in self.layers if layer.kind == "gru")
        for k in range(len(self.layers) - 1, n_gru - 1, -1):
            dy, grads[k] = self.layers[k].backward(dy, caches[k])
        T = caches[n_gru - 1][2].shape[0]
        dseq = np.zeros((T,) + dy.shape)
        dseq[-1] = dy
        for k in range(n_gru - 1, -1, -1):
            dseq, grads[k] = self.layers[k].backward(dseq, caches[k], bptt_steps, need_dx=k > 0)
        return [g for gl in grads for g in gl]


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    return float(np.mean((pred - target) ** 2))


def mse_grad(pred, target):
    return 2.0 * (pred - target) / pred.size


def build_model(name: str, input_dim: int = 3, seed: int | None = 0, *,
                architecture: list | None = None, zero: bool = False) -> GruModel:
    spec = architecture if architecture is not None else ARCHITECTURES[name]
    rng = None if zero else np.random.default_rng(seed)
    layers = []
    n = input_dim
    for entry in spec:
        if entry[0] == "gru":
            layers.append(GruLayer(n, entry[1], rng))
        elif entry[0] == "dense":
            layers.append(DenseLayer(n, entry[1], entry[2] if len(entry) > 2 else "linear", rng))
        else:
            raise ValueError(f"unknown layer kind {entry[0]!r}")
        n = layers[-1].n_out
    return GruModel(name, layers, input_dim)


def architecture_of(model: GruModel) -> list:
    out = []
    for layer in model.layers:
        if layer.kind == "gru":
            out.append(("gru", layer.units))
        else:
            out.append(("dense", layer.units, layer.activation))
    return out
