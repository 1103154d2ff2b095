"""Dense and LSTM layers with hand-written backward passes (float64, batch-first)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit

# Keras defaults for the hard sigmoid
HARD_SIGMOID_SLOPE = 0.2
HARD_SIGMOID_OFFSET = 0.5


def hard_sigmoid(x):
    return np.clip(HARD_SIGMOID_SLOPE * np.asarray(x, dtype=np.float64) + HARD_SIGMOID_OFFSET, 0.0, 1.0)


def hard_sigmoid_grad(x):
    """Derivative of ``hard_sigmoid``; 0 at and beyond the kinks at +-2.5."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(np.abs(x) < 0.5 / HARD_SIGMOID_SLOPE, HARD_SIGMOID_SLOPE, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "sigmoid":
        return sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    if kind == "relu":
        return np.maximum(z, 0.0)
    raise ValueError(f"unknown activation {kind!r}")


def _activation_grad(kind: str, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return np.ones_like(z)
    if kind == "sigmoid":
        return y * (1.0 - y)
    if kind == "tanh":
        return 1.0 - y * y
    if kind == "relu":
        return (z > 0).astype(np.float64)
    raise ValueError(f"unknown activation {kind!r}")


def glorot_uniform(rng: np.random.Generator, fan_out: int, fan_in: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_out, fan_in))


class Dense:
    """``y = act(x @ W.T + b)`` with ``W`` of shape (out, in)."""

    ACTIVATIONS = ("linear", "sigmoid", "tanh", "relu")

    def __init__(self, in_dim: int, out_dim: int, activation: str = "linear", rng: np.random.Generator | None = None):
        if activation not in self.ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_dim, self.out_dim, self.activation = in_dim, out_dim, activation
        self.W = glorot_uniform(rng, out_dim, in_dim)
        self.b = np.zeros(out_dim)

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}

    def forward(self, x: np.ndarray):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"Dense expects (batch, {self.in_dim}) input, got {x.shape}")
        z = x @ self.W.T + self.b
        y = _activate(self.activation, z)
        return y, (x, z, y)

    def backward(self, cache, dy: np.ndarray):
        x, z, y = cache
        dz = dy * _activation_grad(self.activation, z, y)
        return {"W": dz.T @ x, "b": dz.sum(axis=0)}, dz @ self.W


class LSTM:
    """Single LSTM layer returning the last hidden state.

    Gate blocks are stacked in the order input, forget, candidate, output:
    ``W`` is (4*units, input_dim), ``U`` is (4*units, units), ``b`` is (4*units,).
    Gates use the hard sigmoid, the candidate and cell output use tanh.
    """

    GATES = ("i", "f", "g", "o")

    def __init__(self, input_dim: int, units: int = 16, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        H = units
        self.input_dim, self.units = input_dim, units
        self.W = glorot_uniform(rng, H, input_dim, shape=(4 * H, input_dim))
        self.U = glorot_uniform(rng, H, H, shape=(4 * H, H))
        self.b = np.zeros(4 * H)
        self.b[H:2 * H] = 1.0  # forget-gate bias

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "U": self.U, "b": self.b}

    def gate(self, name: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Views ``(W_x, U_x, b_x)`` of one gate block."""
        k = self.GATES.index(name)
        sl = slice(k * self.units, (k + 1) * self.units)
        return self.W[sl], self.U[sl], self.b[sl]

    def forward(self, x: np.ndarray, h0: np.ndarray | None = None, c0: np.ndarray | None = None):
        if x.ndim != 3 or x.shape[2] != self.input_dim:
            raise ValueError(f"LSTM expects (batch, steps, {self.input_dim}) input, got {x.shape}")
        B, T, _ = x.shape
        H = self.units
        h = np.zeros((B, H)) if h0 is None else np.ascontiguousarray(h0, dtype=np.float64)
        c = np.zeros((B, H)) if c0 is None else np.ascontiguousarray(c0, dtype=np.float64)
        if h.shape != (B, H) or c.shape != (B, H):
            raise ValueError(f"initial states must have shape {(B, H)}")
        xs = np.ascontiguousarray(x.transpose(1, 0, 2), dtype=np.float64)  # time-major
        pre_x = xs @ self.W.T + self.b
        acts, hs, cs, tcs = _lstm_forward_kernel(pre_x, np.ascontiguousarray(self.U.T), h, c)
        return hs[T].copy(), (xs, acts, hs, cs, tcs)

    def backward(self, cache, dh_T: np.ndarray, dc_T: np.ndarray | None = None, need_dx: bool = True):
        """Returns ``(grads, dx, dh0, dc0)``; ``dx`` is batch-first like the
        input, or None when ``need_dx`` is false."""
        xs, acts, hs, cs, tcs = cache
        T, B, _ = xs.shape
        H = self.units
        dh = np.array(dh_T, dtype=np.float64, order="C")
        dc = np.zeros((B, H)) if dc_T is None else np.array(dc_T, dtype=np.float64, order="C")
        dz_all, dh0, dc0 = _lstm_backward_kernel(acts, cs, tcs, np.ascontiguousarray(self.U), dh, dc)
        flat_dz = dz_all.reshape(T * B, 4 * H)
        grads = {
            "W": flat_dz.T @ xs.reshape(T * B, -1),
            "U": flat_dz.T @ hs[:-1].reshape(T * B, H),
            "b": flat_dz.sum(axis=0),
        }
        dx = (dz_all @ self.W).transpose(1, 0, 2) if need_dx else None
        return grads, dx, dh0, dc0


@njit(cache=True, inline="always")
def _tanh(x):
    # exp-based tanh; several times faster than libm tanh inside the kernel
    if -0.02 < x < 0.02:
        x2 = x * x
        return x * (1.0 + x2 * (-1.0 / 3.0 + x2 * (2.0 / 15.0 - x2 * (17.0 / 315.0))))
    return 1.0 - 2.0 / (math.exp(2.0 * x) + 1.0)


@njit(cache=True)
def _lstm_forward_kernel(pre_x, UT, h0, c0):
    T, B, G = pre_x.shape
    H = G // 4
    acts = np.empty((T, B, G))
    hs = np.empty((T + 1, B, H))
    cs = np.empty((T + 1, B, H))
    tcs = np.empty((T, B, H))
    hs[0] = h0
    cs[0] = c0
    for t in range(T):
        rec = hs[t] @ UT
        for b in range(B):
            for j in range(H):
                zi = pre_x[t, b, j] + rec[b, j]
                zf = pre_x[t, b, H + j] + rec[b, H + j]
                zg = pre_x[t, b, 2 * H + j] + rec[b, 2 * H + j]
                zo = pre_x[t, b, 3 * H + j] + rec[b, 3 * H + j]
                i = min(max(0.2 * zi + 0.5, 0.0), 1.0)
                f = min(max(0.2 * zf + 0.5, 0.0), 1.0)
                g = _tanh(zg)
                o = min(max(0.2 * zo + 0.5, 0.0), 1.0)
                c = f * cs[t, b, j] + i * g
                tc = _tanh(c)
                acts[t, b, j] = i
                acts[t, b, H + j] = f
                acts[t, b, 2 * H + j] = g
                acts[t, b, 3 * H + j] = o
                cs[t + 1, b, j] = c
                tcs[t, b, j] = tc
                hs[t + 1, b, j] = o * tc
    return acts, hs, cs, tcs


@njit(cache=True)
def _lstm_backward_kernel(acts, cs, tcs, U, dh, dc):
    T, B, G = acts.shape
    H = G // 4
    dz_all = np.empty((T, B, G))
    for t in range(T - 1, -1, -1):
        for b in range(B):
            for j in range(H):
                i = acts[t, b, j]
                f = acts[t, b, H + j]
                g = acts[t, b, 2 * H + j]
                o = acts[t, b, 3 * H + j]
                tc = tcs[t, b, j]
                d_c = dc[b, j] + dh[b, j] * o * (1.0 - tc * tc)
                # hard sigmoid slope is 0.2 strictly inside (0, 1), 0 when saturated
                dz_all[t, b, j] = d_c * g * (0.2 if 0.0 < i < 1.0 else 0.0)
                dz_all[t, b, H + j] = d_c * cs[t, b, j] * (0.2 if 0.0 < f < 1.0 else 0.0)
                dz_all[t, b, 2 * H + j] = d_c * i * (1.0 - g * g)
                dz_all[t, b, 3 * H + j] = dh[b, j] * tc * (0.2 if 0.0 < o < 1.0 else 0.0)
                dc[b, j] = d_c * f
        dh = dz_all[t] @ U
    return dz_all, dh, dc


def bce_loss(p: np.ndarray, y: np.ndarray, eps: float = 1e-7):
    """Mean binary cross-entropy and its gradient with respect to ``p``.

    ``p`` is clamped to ``[eps, 1 - eps]``; the gradient is zero where the
    clamp is active.
    """
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    pc = np.clip(p, eps, 1.0 - eps)
    n = p.size
    loss = -np.mean(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    inside = (p > eps) & (p < 1.0 - eps)
    grad = np.where(inside, (pc - y) / (pc * (1.0 - pc)), 0.0) / n
    return float(loss), grad
