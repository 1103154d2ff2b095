"""Slow, obviously-correct reference implementations used by the tests."""

from __future__ import annotations

import numpy as np


def label_by_scanning(active_days, t, horizon, obs=14, span=30, offset=7):
    """Day-by-day scan: eligible if active in the observation window; churner
    if some active day d in [t - obs, t + offset) is followed by ``span``
    silent days that all lie before ``horizon``."""
    active = set(active_days)
    if not any(d in active for d in range(t - obs, t)):
        return "not_eligible"
    for d in range(t - obs, t + offset):
        if d not in active:
            continue
        gap = range(d + 1, d + span + 1)
        if gap[-1] < horizon and not any(g in active for g in gap):
            return "churner"
    return "nonchurner"


def pairwise_auc(scores, labels):
    """P(score of a random positive > random negative), ties count half."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    pos, neg = s[y], s[~y]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (pos.size * neg.size)


def gini(y):
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return 0.0
    p = y.mean()
    return 2.0 * p * (1.0 - p)


def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f`` with respect to array ``x`` (in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g
