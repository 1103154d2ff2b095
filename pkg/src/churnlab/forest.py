"""Random forest classifier with Gini splits and impurity-based importances."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from numba import njit


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    max_features: int | None = None  # None -> floor(sqrt(n_features))
    min_samples_split: int = 2
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ValueError("min_samples_split must be >= 2")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    def features_per_split(self, n_features: int) -> int:
        k = self.max_features if self.max_features is not None else int(np.floor(np.sqrt(n_features)))
        if not 1 <= k <= n_features:
            raise ValueError(f"max_features {k} outside [1, {n_features}]")
        return k

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ForestConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown forest config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass
class DecisionTree:
    """Flat node arrays; ``feature[k] == -1`` marks a leaf. Samples with
    ``x[feature] <= threshold`` go left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # positive-class fraction of the node's training samples
    n_samples: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row."""
        return _apply(np.ascontiguousarray(X, dtype=np.float64), self.feature, self.threshold, self.left, self.right)

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.int64)
        for k in range(self.n_nodes):
            if self.feature[k] >= 0:
                depth[self.left[k]] = depth[self.right[k]] = depth[k] + 1
        return int(depth.max())


@dataclass
class RandomForest:
    trees: list[DecisionTree]
    n_features: int
    importances: np.ndarray

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self.predict_proba(X[None, :])[0]
        if X.shape[1] != self.n_features:
            raise ValueError(f"forest expects {self.n_features} features, got {X.shape[1]}")
        total = np.zeros(X.shape[0])
        for tree in self.trees:
            total += tree.predict(X)
        return total / len(self.trees)


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        k = 0
        while feature[k] >= 0:
            if X[r, feature[k]] <= threshold[k]:
                k = left[k]
            else:
                k = right[k]
        out[r] = k
    return out


def encode_columns(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-column rank codes: ``X[r, f] == values[offsets[f] + codes[r, f]]``
    with each column's distinct values sorted ascending."""
    codes = np.empty(X.shape, dtype=np.int64)
    values, offsets = [], [0]
    for f in range(X.shape[1]):
        u, inv = np.unique(X[:, f], return_inverse=True)
        codes[:, f] = inv.reshape(-1)
        values.append(u)
        offsets.append(offsets[-1] + u.size)
    return codes, np.concatenate(values) if values else np.zeros(0), np.asarray(offsets, dtype=np.int64)


@njit(cache=True)
def _grow(codes, values, offsets, y, rows, max_features, min_split, max_depth, seed):
    # Splits are searched over the distinct values present in a node, in
    # ascending order. Low-cardinality columns are scanned through a
    # histogram of rank codes, the rest by sorting; both visit the same
    # candidate thresholds in the same order.
    np.random.seed(seed)
    n_feat = codes.shape[1]
    cap = 2 * rows.size + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    n_samples = np.zeros(cap, dtype=np.int64)
    importance = np.zeros(n_feat)

    max_card = 0
    for f in range(n_feat):
        max_card = max(max_card, offsets[f + 1] - offsets[f])
    hist_n = np.zeros(max_card, dtype=np.int64)
    hist_pos = np.zeros(max_card)
    work = rows.copy()
    st_node = np.empty(cap, dtype=np.int64)
    st_lo = np.empty(cap, dtype=np.int64)
    st_hi = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    feats = np.arange(n_feat)
    keys = np.empty(rows.size, dtype=np.int64)
    labs = np.empty(rows.size)

    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, rows.size, 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node, lo, hi, depth = st_node[top], st_lo[top], st_hi[top], st_depth[top]
        n = hi - lo
        pos = 0.0
        for r in range(lo, hi):
            pos += y[work[r]]
        value[node] = pos / n
        n_samples[node] = n
        if n < min_split or pos == 0.0 or pos == n or (max_depth >= 0 and depth >= max_depth):
            continue
        p = pos / n
        gini_parent = 2.0 * p * (1.0 - p)
        best_gain = -1.0
        best_f = -1
        best_code = 0
        visited = 0
        for k in range(n_feat):
            if visited >= max_features:
                break
            j = k + np.random.randint(n_feat - k)
            feats[k], feats[j] = feats[j], feats[k]
            f = feats[k]
            card = offsets[f + 1] - offsets[f]
            kmin = card
            kmax = -1
            for r in range(lo, hi):
                c = codes[work[r], f]
                kmin = min(kmin, c)
                kmax = max(kmax, c)
            if kmin == kmax:
                continue  # constant in this node; does not count towards max_features
            visited += 1
            left_n = 0.0
            left_pos = 0.0
            if kmax - kmin + 1 <= n:
                for c in range(kmin, kmax + 1):
                    hist_n[c] = 0
                    hist_pos[c] = 0.0
                for r in range(lo, hi):
                    c = codes[work[r], f]
                    hist_n[c] += 1
                    hist_pos[c] += y[work[r]]
                for c in range(kmin, kmax):
                    if hist_n[c] == 0:
                        continue
                    left_n += hist_n[c]
                    left_pos += hist_pos[c]
                    nr = n - left_n
                    pl = left_pos / left_n
                    pr = (pos - left_pos) / nr
                    gain = gini_parent - (left_n * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / n
                    if gain > best_gain:
                        best_gain, best_f, best_code = gain, f, c
            else:
                for r in range(n):
                    keys[r] = codes[work[lo + r], f]
                order = np.argsort(keys[:n])
                for r in range(n):
                    labs[r] = y[work[lo + order[r]]]
                for i in range(n - 1):
                    left_n += 1.0
                    left_pos += labs[i]
                    c = keys[order[i]]
                    if c == keys[order[i + 1]]:
                        continue
                    nr = n - left_n
                    pl = left_pos / left_n
                    pr = (pos - left_pos) / nr
                    gain = gini_parent - (left_n * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)) / n
                    if gain > best_gain:
                        best_gain, best_f, best_code = gain, f, c
        if best_f < 0:
            continue
        # threshold halfway to the next distinct value present in the node
        nxt = offsets[best_f + 1] - offsets[best_f]
        for r in range(lo, hi):
            c = codes[work[r], best_f]
            if best_code < c < nxt:
                nxt = c
        v0 = values[offsets[best_f] + best_code]
        v1 = values[offsets[best_f] + nxt]
        thr = 0.5 * (v0 + v1)
        if thr == v1:
            thr = v0
        # partition work[lo:hi] so rows going left come first
        i, j = lo, hi - 1
        while i <= j:
            if codes[work[i], best_f] <= best_code:
                i += 1
            else:
                work[i], work[j] = work[j], work[i]
                j -= 1
        importance[best_f] += n * max(best_gain, 0.0)
        feature[node] = best_f
        threshold[node] = thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        st_node[top], st_lo[top], st_hi[top], st_depth[top] = n_nodes, lo, i, depth + 1
        st_node[top + 1], st_lo[top + 1], st_hi[top + 1], st_depth[top + 1] = n_nodes + 1, i, hi, depth + 1
        top += 2
        n_nodes += 2
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), n_samples[:n_nodes].copy(), importance)


def fit_tree(X: np.ndarray, y: np.ndarray, rows: np.ndarray, max_features: int,
             min_samples_split: int = 2, max_depth: int | None = None, seed: int = 0,
             encoded: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None) -> tuple[DecisionTree, np.ndarray]:
    """Grow one tree on ``X[rows]`` (rows may repeat). Returns the tree and its
    per-feature impurity decrease weighted by node sample counts.
    ``encoded`` is ``encode_columns(X)``, passed in to share it across trees."""
    codes, values, offsets = encoded if encoded is not None else encode_columns(np.asarray(X, dtype=np.float64))
    *arrays, importance = _grow(
        codes, values, offsets,
        np.ascontiguousarray(y, dtype=np.float64),
        np.ascontiguousarray(rows, dtype=np.int64),
        int(max_features), int(min_samples_split), -1 if max_depth is None else int(max_depth), int(seed),
    )
    return DecisionTree(*arrays), importance


def fit_forest(X: np.ndarray, y: np.ndarray, cfg: ForestConfig = ForestConfig()) -> RandomForest:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError("X must be (n_samples, n_features) matching y")
    if y.size < 2:
        raise ValueError("need at least 2 samples")
    n, d = X.shape
    k = cfg.features_per_split(d)
    encoded = encode_columns(X)
    trees, per_tree = [], []
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.n_trees):
        rng = np.random.default_rng(child)
        rows = rng.integers(0, n, n) if cfg.bootstrap else np.arange(n)
        tree, imp = fit_tree(X, y, rows, k, cfg.min_samples_split, cfg.max_depth,
                             int(rng.integers(0, 2**31 - 1)), encoded)
        trees.append(tree)
        total = imp.sum()
        per_tree.append(imp / total if total > 0 else imp)
    importances = np.mean(per_tree, axis=0)
    total = importances.sum()
    if total > 0:
        importances = importances / total
    return RandomForest(trees, d, importances)


def feature_importance(forest: RandomForest, names: Sequence[str] | None = None) -> list[tuple[str, float]]:
    """(name, importance) pairs, most important first; ties keep feature order."""
    names = list(names) if names is not None else [f"f{i}" for i in range(forest.n_features)]
    if len(names) != forest.n_features:
        raise ValueError("one name per feature required")
    order = sorted(range(forest.n_features), key=lambda i: (-forest.importances[i], i))
    return [(names[i], float(forest.importances[i])) for i in order]


def write_importance(ranked: Sequence[tuple[str, float]], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("rank,feature,importance\n")
        for r, (name, imp) in enumerate(ranked, start=1):
            fh.write(f"{r},{name},{imp!r}\n")
