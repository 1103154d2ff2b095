"""Cross-validated comparison: folds, ROC/AUC, threshold metrics, aggregation."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence

import numpy as np

from .architectures import ArchitectureId, TrainedModel, train_architecture
from .features import AGGREGATE_COLUMNS, Dataset
from .forest import ForestConfig
from .nn import NumericalError, TrainConfig

log = logging.getLogger(__name__)

METRICS = ("auc", "f1", "accuracy")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    test_folds: tuple[np.ndarray, ...]
    seed: int

    def train_indices(self, fold: int) -> np.ndarray:
        mask = np.ones(sum(f.size for f in self.test_folds), dtype=bool)
        mask[self.test_folds[fold]] = False
        return np.flatnonzero(mask)

    def splits(self) -> Iterable[tuple[np.ndarray, np.ndarray]]:
        for i, test in enumerate(self.test_folds):
            yield self.train_indices(i), test


def stratified_kfold(labels: Sequence[int], k: int = 10, seed: int = 0) -> FoldPlan:
    """Shuffle each class, then deal all samples round-robin into ``k`` folds
    (negatives first, positives continuing where they stopped), so fold sizes
    and per-class counts both differ by at most one."""
    y = np.asarray(labels)
    if k < 2:
        raise ValueError("k must be >= 2")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2 or counts.min() < k:
        raise ValueError(f"every class needs at least k={k} samples, got counts {dict(zip(classes.tolist(), counts.tolist()))}")
    rng = np.random.default_rng(seed)
    dealt = np.concatenate([rng.permutation(np.flatnonzero(y == c)) for c in classes])
    folds = tuple(np.sort(dealt[i::k]) for i in range(k))
    return FoldPlan(k, folds, seed)


def _check_binary(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.size != y.size:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    if y.all() or not y.any():
        raise ValueError("AUC is undefined unless both classes are present")
    return s, y.astype(bool)


def midranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    order = np.argsort(x, kind="mergesort")
    sx = x[order]
    boundaries = np.flatnonzero(np.diff(sx)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [sx.size]])
    avg = (starts + ends + 1) / 2.0  # mean of ranks start+1 .. end
    ranks = np.empty(x.size)
    ranks[order] = np.repeat(avg, ends - starts)
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney AUC with midrank tie correction."""
    s, y = _check_binary(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    r = midranks(s)
    return float((r[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


class RocPoint(NamedTuple):
    fpr: float
    tpr: float
    threshold: float


def roc_curve(scores, labels) -> list[RocPoint]:
    """Points for thresholds at every distinct score (predict positive when
    score >= threshold), preceded by (0, 0) at threshold +inf."""
    s, y = _check_binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    ss, yy = s[order], y[order]
    last_of_group = np.flatnonzero(np.concatenate([np.diff(ss) != 0, [True]]))
    tp = np.cumsum(yy)[last_of_group]
    fp = (last_of_group + 1) - tp
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    pts = [RocPoint(0.0, 0.0, math.inf)]
    pts += [RocPoint(float(f / n_neg), float(t / n_pos), float(ss[i])) for f, t, i in zip(fp, tp, last_of_group)]
    return pts


def trapezoid_area(points: Sequence[RocPoint]) -> float:
    area = 0.0
    for a, b in zip(points, points[1:]):
        area += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2.0
    return area


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(scores, labels, threshold: float = 0.5) -> ConfusionCounts:
    """Predict churn when ``score > threshold`` (strict)."""
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    y = np.asarray(labels).reshape(-1).astype(bool)
    pred = s > threshold
    return ConfusionCounts(
        int(np.sum(pred & y)), int(np.sum(pred & ~y)), int(np.sum(~pred & ~y)), int(np.sum(~pred & y))
    )


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.n if c.n else 0.0


def precision(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0


def recall(c: ConfusionCounts) -> float:
    return c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0


def f1(c: ConfusionCounts) -> float:
    # harmonic mean of precision and recall, written over counts
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn) if c.tp else 0.0


def two_sigma(values: Sequence[float], mode: str = "sem") -> float:
    """Twice the standard error of the mean (``sem``) or twice the sample
    standard deviation (``std``) of per-fold values."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    sd = float(np.std(v, ddof=1))
    if mode == "sem":
        return 2.0 * sd / math.sqrt(v.size)
    if mode == "std":
        return 2.0 * sd
    raise ValueError(f"unknown uncertainty mode {mode!r}")


@dataclass
class MetricSummary:
    arch: str
    per_fold: list[dict] = field(default_factory=list)  # {"fold", "auc", "f1", "accuracy", "n_test"} or {"fold", "error"}
    uncertainty: str = "sem"
    cohort: str | None = None

    @property
    def completed(self) -> list[dict]:
        return [f for f in self.per_fold if "error" not in f]

    @property
    def complete(self) -> bool:
        return bool(self.per_fold) and len(self.completed) == len(self.per_fold)

    def mean(self, metric: str) -> float:
        vals = [f[metric] for f in self.completed]
        return float(np.mean(vals)) if vals else math.nan

    def sigma2(self, metric: str) -> float:
        return two_sigma([f[metric] for f in self.completed], self.uncertainty)

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "cohort": self.cohort,
            "uncertainty": f"two_sigma_{self.uncertainty}",
            "complete": self.complete,
            "folds": self.per_fold,
            "aggregate": {m: {"mean": self.mean(m), "two_sigma": self.sigma2(m)} for m in METRICS},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSummary":
        unc = d.get("uncertainty", "two_sigma_sem").removeprefix("two_sigma_")
        return cls(d["arch"], list(d["folds"]), unc, d.get("cohort"))


def fold_metrics(scores: np.ndarray, labels: np.ndarray) -> dict:
    c = confusion(scores, labels)
    return {"auc": roc_auc(scores, labels), "f1": f1(c), "accuracy": accuracy(c), "n_test": int(c.n)}


def converted_cohort(data: Dataset) -> np.ndarray:
    """Samples of players with at least one purchase before the prediction date."""
    return data.aggregate[:, AGGREGATE_COLUMNS.index("total_spend")] > 0


COHORTS: dict[str, Callable[[Dataset], np.ndarray]] = {"converted": converted_cohort}


@dataclass
class CvResult:
    summary: MetricSummary
    scores: np.ndarray  # out-of-fold probability per sample (nan where a fold failed)
    models: list[TrainedModel | None] = field(default_factory=list)


def run_cv(
    data: Dataset,
    arch: ArchitectureId | str,
    train_cfg: TrainConfig,
    plan: FoldPlan,
    cohort: str | None = None,
    forest_cfg: ForestConfig | None = None,
    uncertainty: str = "sem",
    stage1: Sequence[TrainedModel] | None = None,
    keep_models: bool = False,
) -> CvResult:
    """Train on each fold's training rows, score its test rows.

    A cohort restricts which test rows are scored; training is unchanged.
    A fold whose training fails numerically is recorded with an error and
    left out of the aggregates.
    """
    arch = ArchitectureId(arch)
    mask = COHORTS[cohort](data) if cohort else np.ones(len(data), dtype=bool)
    summary = MetricSummary(arch.value, uncertainty=uncertainty, cohort=cohort)
    scores = np.full(len(data), np.nan)
    models: list[TrainedModel | None] = []
    for i, (tr, te) in enumerate(plan.splits()):
        try:
            model = train_architecture(
                arch, data.subset(tr), train_cfg, forest_cfg,
                stage1=stage1[i] if stage1 is not None else None,
            )
        except NumericalError as exc:
            log.error("%s fold %d failed: %s", arch.value, i, exc)
            summary.per_fold.append({"fold": i, "error": str(exc)})
            models.append(None)
            continue
        te = te[mask[te]]
        p = model.predict_proba(data.subset(te))
        scores[te] = p
        summary.per_fold.append({"fold": i, **fold_metrics(p, data.label[te])})
        models.append(model if keep_models else None)
        log.info("%s fold %d: auc %.4f", arch.value, i, summary.per_fold[-1]["auc"])
    return CvResult(summary, scores, models)


def format_value(mean: float, sigma2: float, digits: int = 4) -> str:
    """``0.8592 (18)``: two-sigma in units of the last shown digit."""
    if math.isnan(mean):
        return "n/a"
    return f"{mean:.{digits}f} ({int(round(sigma2 * 10**digits))})"


def format_table(summaries: Sequence[MetricSummary]) -> str:
    rows = [("Model", "AUC", "F1 score", "Accuracy")]
    for s in summaries:
        try:
            name = ArchitectureId(s.arch).display_name
        except ValueError:
            name = s.arch
        if not s.complete:
            name += " *"
        rows.append((name, *(format_value(s.mean(m), s.sigma2(m)) for m in METRICS)))
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "-+-".join("-" * w for w in widths))
    unc = {s.uncertainty for s in summaries}
    note = f"Parentheses: two-sigma ({'/'.join(sorted(unc))}) on the last digits."
    if any(not s.complete for s in summaries):
        note += " * = some folds failed."
    return "\n".join(lines + ["", note]) + "\n"


def write_roc_csv(points: Sequence[RocPoint], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        fh.write("fpr,tpr,threshold\n")
        for p in points:
            fh.write(f"{p.fpr!r},{p.tpr!r},{p.threshold!r}\n")


def read_roc_csv(path: str | Path) -> list[RocPoint]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "fpr,tpr,threshold":
        raise ValueError(f"{path}: not a ROC CSV")
    return [RocPoint(*map(float, ln.split(","))) for ln in lines[1:] if ln]


def dump_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")
