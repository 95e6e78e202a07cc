"""Dense layers with explicit forward/backward passes.

Each layer caches what its backward pass needs during ``forward`` and
accumulates parameter gradients into ``self.grads`` during ``backward``.
A layer supports one pending backward per forward call.
"""
from __future__ import annotations

import math

import numpy as np

BCE_CLAMP = 1e-7


def uniform_init(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def relu(x):
    return np.maximum(x, 0.0)


def softmax(x, axis=-1):
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


class Module:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def zero_grad(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)

    def _acc(self, name, g):
        self.grads[name] = self.grads.get(name, 0) + g


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator):
        super().__init__()
        self.params["W"] = uniform_init(rng, (n_in, n_out), n_in)
        self.params["b"] = uniform_init(rng, (n_out,), n_in)
        self.zero_grad()

    def forward(self, x, train=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        x = self._x
        x2 = x.reshape(-1, x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self._acc("W", x2.T @ dy2)
        self._acc("b", dy2.sum(axis=0))
        return dy @ self.params["W"].T


def linear_forward(x, W, b):
    if x.shape[-1] != W.shape[0] or W.shape[1] != np.shape(b)[-1]:
        raise ValueError("shape mismatch in linear layer")
    return x @ W + b


def linear_backward(x, W, dy):
    """Gradients ``(dx, dW, db)`` of ``y = x W + b``."""
    return dy @ W.T, x.T @ dy, dy.sum(axis=0)


class ReLU(Module):
    def forward(self, x, train=False):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class Sigmoid(Module):
    def forward(self, x, train=False):
        self._y = sigmoid(x)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Dropout(Module):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate
        self.rng = rng

    def forward(self, x, train=False):
        if not train or self.rate == 0.0:
            self._scale = None
            return x
        keep = self.rng.random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale


class BatchNorm(Module):
    """Per-feature normalization over all leading axes.

    Running statistics follow ``running = momentum * running + (1 - momentum) * batch``.
    """

    def __init__(self, n_features: int, momentum: float = 0.9, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.params["gamma"] = np.ones(n_features)
        self.params["beta"] = np.zeros(n_features)
        self.buffers["running_mean"] = np.zeros(n_features)
        self.buffers["running_var"] = np.ones(n_features)
        self.zero_grad()

    def forward(self, x, train=False):
        shape = x.shape
        x2 = x.reshape(-1, shape[-1])
        g, b = self.params["gamma"], self.params["beta"]
        if train:
            if x2.shape[0] < 2:
                raise ValueError("batch normalization needs at least 2 rows in train mode")
            mean = x2.mean(axis=0)
            var = x2.var(axis=0)
            m = self.momentum
            self.buffers["running_mean"] = m * self.buffers["running_mean"] + (1 - m) * mean
            self.buffers["running_var"] = m * self.buffers["running_var"] + (1 - m) * var
            inv = 1.0 / np.sqrt(var + self.eps)
            xhat = (x2 - mean) * inv
            self._cache = (xhat, inv)
        else:
            inv = 1.0 / np.sqrt(self.buffers["running_var"] + self.eps)
            xhat = (x2 - self.buffers["running_mean"]) * inv
            self._cache = None
        return (xhat * g + b).reshape(shape)

    def backward(self, dy):
        shape = dy.shape
        dy2 = dy.reshape(-1, shape[-1])
        g = self.params["gamma"]
        if self._cache is None:
            raise RuntimeError("backward through inference-mode batch norm is not supported")
        xhat, inv = self._cache
        self._acc("gamma", (dy2 * xhat).sum(axis=0))
        self._acc("beta", dy2.sum(axis=0))
        dxhat = dy2 * g
        n = dy2.shape[0]
        dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        return dx.reshape(shape)


def gru_cell(x_t, h_prev, W, U, b):
    """One GRU step; returns ``h_new`` and the cache for :func:`gru_cell_backward`.

    Gate blocks in ``W``, ``U`` and ``b`` are ordered (update z, reset r, candidate)::

        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        c = tanh(x Wc + (r * h) Uc + bc)
        h_new = (1 - z) * h + z * c
    """
    H = h_prev.shape[-1]
    if W.shape != (x_t.shape[-1], 3 * H) or U.shape != (H, 3 * H):
        raise ValueError("shape mismatch in GRU cell")
    xw = x_t @ W + b
    hu = h_prev @ U[:, : 2 * H]
    z = sigmoid(xw[..., :H] + hu[..., :H])
    r = sigmoid(xw[..., H:2 * H] + hu[..., H:])
    rh = r * h_prev
    c = np.tanh(xw[..., 2 * H:] + rh @ U[:, 2 * H:])
    h_new = (1.0 - z) * h_prev + z * c
    return h_new, (x_t, h_prev, z, r, rh, c)


def gru_cell_backward(dh, cache, W, U):
    """Returns ``(dx, dh_prev, dW, dU, db)`` for one step."""
    x_t, h_prev, z, r, rh, c = cache
    H = h_prev.shape[-1]
    dc = dh * z
    dz = dh * (c - h_prev)
    dh_prev = dh * (1.0 - z)
    dac = dc * (1.0 - c * c)
    drh = dac @ U[:, 2 * H:].T
    dr = drh * h_prev
    dh_prev = dh_prev + drh * r
    daz = dz * z * (1.0 - z)
    dar = dr * r * (1.0 - r)
    dgates = np.concatenate([daz, dar, dac], axis=-1)
    dW = x_t.T @ dgates
    db = dgates.sum(axis=0)
    dU = np.zeros_like(U)
    dU[:, : 2 * H] = h_prev.T @ np.concatenate([daz, dar], axis=-1)
    dU[:, 2 * H:] = rh.T @ dac
    dx = dgates @ W.T
    dh_prev = dh_prev + np.concatenate([daz, dar], axis=-1) @ U[:, : 2 * H].T
    return dx, dh_prev, dW, dU, db


class GRU(Module):
    """Single GRU layer unrolled over a ``(B, L, n_in)`` sequence."""

    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator):
        super().__init__()
        self.hidden = hidden
        self.params["W"] = uniform_init(rng, (n_in, 3 * hidden), hidden)
        self.params["U"] = uniform_init(rng, (hidden, 3 * hidden), hidden)
        self.params["b"] = uniform_init(rng, (3 * hidden,), hidden)
        self.zero_grad()

    def forward(self, xs, h0=None, train=False):
        B, L, _ = xs.shape
        h = np.zeros((B, self.hidden)) if h0 is None else h0
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        out = np.empty((B, L, self.hidden))
        self._caches = []
        for t in range(L):
            h, cache = gru_cell(xs[:, t], h, W, U, b)
            self._caches.append(cache)
            out[:, t] = h
        return out

    def backward(self, douts):
        """Backpropagation through time; returns ``(dxs, dh0)``."""
        W, U = self.params["W"], self.params["U"]
        B, L, H = douts.shape
        dxs = np.empty((B, L, W.shape[0]))
        dh = np.zeros((B, H))
        dW = np.zeros_like(W)
        dU = np.zeros_like(U)
        db = np.zeros(3 * H)
        for t in reversed(range(L)):
            dx, dh, dWt, dUt, dbt = gru_cell_backward(dh + douts[:, t], self._caches[t], W, U)
            dxs[:, t] = dx
            dW += dWt
            dU += dUt
            db += dbt
        self._acc("W", dW)
        self._acc("U", dU)
        self._acc("b", db)
        return dxs, dh


class MultiHeadAttention(Module):
    """Self-attention over a ``(B, L, n_q)`` sequence.

    Head ``h`` uses columns ``h*d_k:(h+1)*d_k`` of the query, key and value
    projections; the concatenated head outputs are mapped back by ``WO``.
    """

    def __init__(self, n_q: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if n_q % heads:
            raise ValueError("n_q must be divisible by the number of heads")
        self.heads = heads
        self.d_k = n_q // heads
        for name in ("WQ", "WK", "WV", "WO"):
            self.params[name] = uniform_init(rng, (n_q, n_q), n_q)
        self.zero_grad()

    def _split(self, x):
        B, L, _ = x.shape
        return x.reshape(B, L, self.heads, self.d_k).transpose(0, 2, 1, 3)

    def forward(self, x, train=False):
        if x.ndim != 3 or x.shape[-1] != self.params["WQ"].shape[0]:
            raise ValueError("attention input must be (B, L, n_q)")
        p = self.params
        Q, K, V = (self._split(x @ p[k]) for k in ("WQ", "WK", "WV"))
        scores = Q @ K.transpose(0, 1, 3, 2) / math.sqrt(self.d_k)
        A = softmax(scores, axis=-1)
        Z = A @ V
        B, _, L, _ = Z.shape
        concat = Z.transpose(0, 2, 1, 3).reshape(B, L, -1)
        self._cache = (x, Q, K, V, A, concat)
        self.last_attention = A
        return concat @ p["WO"]

    def backward(self, dy):
        p = self.params
        x, Q, K, V, A, concat = self._cache
        B, L, n_q = x.shape
        self._acc("WO", concat.reshape(-1, n_q).T @ dy.reshape(-1, n_q))
        dconcat = dy @ p["WO"].T
        dZ = self._split(dconcat)
        dA = dZ @ V.transpose(0, 1, 3, 2)
        dV = A.transpose(0, 1, 3, 2) @ dZ
        dscores = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / math.sqrt(self.d_k)
        dQ = dscores @ K
        dK = dscores.transpose(0, 1, 3, 2) @ Q
        dx = np.zeros_like(x)
        x2 = x.reshape(-1, n_q)
        for name, d in (("WQ", dQ), ("WK", dK), ("WV", dV)):
            d2 = d.transpose(0, 2, 1, 3).reshape(B, L, n_q)
            self._acc(name, x2.T @ d2.reshape(-1, n_q))
            dx += d2 @ p[name].T
        return dx


def bce_loss(m, target):
    """Mean binary cross-entropy and its gradient with respect to ``m``.

    Predictions are clamped to ``[1e-7, 1 - 1e-7]``; the gradient is zero
    where the clamp is active.
    """
    m = np.asarray(m, dtype=float)
    t = np.asarray(target, dtype=float)
    mc = np.clip(m, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -np.mean(t * np.log(mc) + (1.0 - t) * np.log(1.0 - mc))
    grad = (mc - t) / (mc * (1.0 - mc)) / m.size
    grad = np.where((m < BCE_CLAMP) | (m > 1.0 - BCE_CLAMP), 0.0, grad)
    return float(loss), grad
