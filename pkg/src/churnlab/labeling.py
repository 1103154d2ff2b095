"""Churn labels: eligibility, churn-date detection and the prediction-offset rule.

A churn date is the last active day before a silent gap of at least
``churn_span_days`` that lies fully inside the observed data. A player
sampled at prediction date ``t`` is

* not eligible if they have no activity in ``[t - observation_days, t)``;
* a churner if some churn date falls in
  ``[t - observation_days, t + prediction_offset_days - 1]``;
* a non-churner otherwise.
"""

from __future__ import annotations

import bisect
import csv
import enum
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from .eventlog import EventLog, activity_days


class ConfigError(ValueError):
    """Invalid configuration or a request that would produce censored labels."""


@dataclass(frozen=True)
class ChurnConfig:
    observation_days: int = 14
    churn_span_days: int = 30
    prediction_offset_days: int = 7
    sampling_spacing_days: int = 18
    sampling_count: int = 8

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value!r}")
        if self.observation_days % 7:
            raise ConfigError("observation_days must be a multiple of 7 (weekly periodicity)")
        if self.sampling_spacing_days <= self.observation_days:
            raise ConfigError("sampling_spacing_days must exceed observation_days so windows do not overlap")

    @property
    def label_delay(self) -> int:
        """Days of future data needed before a label is final (37 by default)."""
        return self.prediction_offset_days + self.churn_span_days

    def to_dict(self) -> dict:
        return asdict(self)


class ChurnLabel(enum.Enum):
    CHURNER = "churner"
    NONCHURNER = "nonchurner"
    NOT_ELIGIBLE = "not_eligible"


def churn_date(activity: Iterable[int], horizon: int, span: int) -> int | None:
    """Smallest active day ``d`` followed by no activity in ``(d, d + span]``
    with ``d + span < horizon``. Days at or after ``horizon`` are unknown."""
    days = sorted({d for d in activity if d < horizon})
    for i, d in enumerate(days):
        if d + span >= horizon:
            return None
        nxt = days[i + 1] if i + 1 < len(days) else None
        if nxt is None or nxt > d + span:
            return d
    return None


def label_player(
    activity: Sequence[int], prediction_date: int, cfg: ChurnConfig, horizon: int
) -> ChurnLabel:
    if horizon < prediction_date + cfg.label_delay:
        raise ConfigError(
            f"horizon {horizon} < prediction date {prediction_date} + {cfg.label_delay}: label would be censored"
        )
    days = sorted(set(activity))
    window_start = prediction_date - cfg.observation_days
    lo = bisect.bisect_left(days, window_start)
    if lo == len(days) or days[lo] >= prediction_date:
        return ChurnLabel.NOT_ELIGIBLE
    d = churn_date(days[lo:], horizon, cfg.churn_span_days)
    if d is not None and d <= prediction_date + cfg.prediction_offset_days - 1:
        return ChurnLabel.CHURNER
    return ChurnLabel.NONCHURNER


def sampling_dates(first_date: int, cfg: ChurnConfig) -> list[int]:
    return [first_date + i * cfg.sampling_spacing_days for i in range(cfg.sampling_count)]


class Sample(NamedTuple):
    player_id: str
    prediction_date: int
    label: ChurnLabel


def build_samples(
    log: EventLog, dates: Sequence[int], cfg: ChurnConfig, horizon: int
) -> list[Sample]:
    """Every eligible (player, date) pair, ordered by date then player id."""
    for t in dates:
        if horizon < t + cfg.label_delay:
            raise ConfigError(f"sampling date {t} too close to horizon {horizon}")
    activity = {pid: activity_days(log, pid) for pid in log.player_ids}
    out = []
    for t in dates:
        for pid in log.player_ids:
            label = label_player(activity[pid], t, cfg, horizon)
            if label is not ChurnLabel.NOT_ELIGIBLE:
                out.append(Sample(pid, t, label))
    return out


MANIFEST_FIELDS = ("player_id", "prediction_date", "label")


def write_manifest(samples: Iterable[Sample], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for s in samples:
            w.writerow((s.player_id, s.prediction_date, s.label.value))


def read_manifest(path: str | Path) -> list[Sample]:
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != MANIFEST_FIELDS:
            raise ValueError(f"{path}: expected header {','.join(MANIFEST_FIELDS)}")
        out = []
        for row in reader:
            label = ChurnLabel(row[2])
            if label is ChurnLabel.NOT_ELIGIBLE:
                raise ValueError(f"{path}:{reader.line_num}: manifests hold eligible samples only")
            out.append(Sample(row[0], int(row[1]), label))
        return out
