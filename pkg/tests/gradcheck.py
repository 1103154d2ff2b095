"""Analytic-vs-central-difference gradient checks on random small configs."""

from __future__ import annotations

import numpy as np

from churnlab.architectures import Batch, Dims, build
from churnlab.nn import LSTM, Dense, bce_loss

from oracles import numeric_grad

RTOL, ATOL = 1e-4, 1e-6


def max_violation(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Largest error ratio against the tolerance; <= 1 passes."""
    err = np.abs(analytic - numeric)
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    ok_rel = err / np.maximum(scale, 1e-300) / RTOL
    ok_abs = err / ATOL
    return float(np.max(np.minimum(ok_rel, ok_abs))) if err.size else 0.0


def check_dense(rng: np.random.Generator) -> float:
    n, i, o = rng.integers(1, 5), rng.integers(1, 6), rng.integers(1, 5)
    act = rng.choice(Dense.ACTIVATIONS)
    layer = Dense(int(i), int(o), str(act), rng)
    layer.b[:] = rng.normal(0, 0.5, o)
    x = rng.normal(size=(n, i))
    w = rng.normal(size=(n, o))
    f = lambda: float(np.sum(w * layer.forward(x)[0]))  # noqa: E731
    _, cache = layer.forward(x)
    grads, dx = layer.backward(cache, w)
    worst = max_violation(dx, numeric_grad(f, x))
    for k, p in layer.params.items():
        worst = max(worst, max_violation(grads[k], numeric_grad(f, p)))
    return worst


def check_lstm(rng: np.random.Generator) -> float:
    n, T, d, H = (int(v) for v in (rng.integers(1, 4), rng.integers(1, 6), rng.integers(1, 5), rng.integers(1, 5)))
    layer = LSTM(d, H, rng)
    layer.b[:] += rng.normal(0, 0.3, 4 * H)
    x = rng.normal(size=(n, T, d))
    h0 = rng.normal(0, 0.5, (n, H))
    c0 = rng.normal(0, 0.5, (n, H))
    w = rng.normal(size=(n, H))
    f = lambda: float(np.sum(w * layer.forward(x, h0, c0)[0]))  # noqa: E731
    _, cache = layer.forward(x, h0, c0)
    grads, dx, dh0, dc0 = layer.backward(cache, w)
    worst = max(
        max_violation(dx, numeric_grad(f, x)),
        max_violation(dh0, numeric_grad(f, h0)),
        max_violation(dc0, numeric_grad(f, c0)),
    )
    for k, p in layer.params.items():
        worst = max(worst, max_violation(grads[k], numeric_grad(f, p)))
    return worst


def check_architecture(arch: str, rng: np.random.Generator) -> float:
    dims = Dims(n_t=int(rng.integers(2, 5)), n_f=int(rng.integers(1, 4)), n_agg=int(rng.integers(1, 5)),
                units=int(rng.integers(1, 4)), ann_hidden=int(rng.integers(1, 5)))
    model = build(arch, dims, seed=int(rng.integers(2**31)))
    if arch == "lstm-pred-agg":
        model.stage = "joint"
    for v in model.params().values():
        v += rng.normal(0, 0.1, v.shape)
    n = int(rng.integers(2, 5))
    batch = Batch(rng.normal(size=(n, dims.n_t, dims.n_f)), rng.normal(size=(n, dims.n_agg)))
    y = rng.integers(0, 2, n).astype(float)
    f = lambda: bce_loss(model.forward(batch)[0], y)[0]  # noqa: E731
    p, cache = model.forward(batch)
    grads = model.backward(cache, bce_loss(p, y)[1])
    params = model.trainable_params()
    assert set(grads) == set(params)
    return max(max_violation(grads[k], numeric_grad(f, v)) for k, v in params.items())
