"""Model inputs: the per-day temporal matrix and the aggregate player vector.

Temporal columns (one row per day of the observation window, oldest first):

    activity, gameStarted, missionStarted, missionMovesUsed, pointsPerMission,
    movesPerMission, missionCompleted, missionCompletedFraction, missionFailed,
    converted

Aggregate entries (36) come in five blocks: player description (4), player
behaviour (15, over a 183-day lookback), per-mode progression (10), platform
one-hot (4) and acquisition one-hot (3). Behaviour entries that the event log
does not record directly are derived from it with the fixed proxy constants
below.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Sequence

import numpy as np

from .eventlog import DAILY_COLUMNS, DailyRecord, EventLog, daily_counts
from .labeling import ChurnConfig, ChurnLabel, ConfigError, Sample

if TYPE_CHECKING:
    from .synth import PlayerProfile

TEMPORAL_COLUMNS = (
    "activity",
    "gameStarted",
    "missionStarted",
    "missionMovesUsed",
    "pointsPerMission",
    "movesPerMission",
    "missionCompleted",
    "missionCompletedFraction",
    "missionFailed",
    "converted",
)

PLATFORMS = ("android", "fireos", "ios", "kindle")
ACQUISITION_CHANNELS = ("acquired", "crosspromoted", "organic")
GAME_MODES = (
    "daily",
    "main",
    "onelife_challenge",
    "social_challenge",
    "tournament",
    "treasurehunt",
    "hot_streak",
    "level_dash",
    "levelrush",
    "startournament",
)

DESCRIPTION_COLUMNS = ("fb_connected", "monthssinceinstall", "num_activedays", "maxlvl")
BEHAVIOUR_COLUMNS = (
    "minutesplayed_sum",
    "minutes_perday_avg",
    "gamestarted_sum",
    "levelstarted_sum",
    "completionrate",
    "abandonedrate",
    "coinsused",
    "coinused_perlevel",
    "coinsreceived",
    "continuesused_perlevel",
    "boostersused_perlevel",
    "transaction_sum",
    "sum_spend",
    "total_spend",
    "progressionrate",
)
AGGREGATE_COLUMNS = (
    DESCRIPTION_COLUMNS
    + BEHAVIOUR_COLUMNS
    + GAME_MODES
    + tuple(f"platform_{p}" for p in PLATFORMS)
    + tuple(f"acquisition_{a}" for a in ACQUISITION_CHANNELS)
)
assert len(AGGREGATE_COLUMNS) == 36

DAYS_PER_MONTH = 30.44
LOOKBACK_DAYS = 183
# proxies for quantities the event log does not carry
SECONDS_PER_MOVE = 6.0
SECONDS_PER_SESSION = 30.0
MOVES_PER_BOOSTER = 50
COINS_PER_CONTINUE = 10.0
COINS_PER_BOOSTER = 5.0
POINTS_PER_COIN = 100.0
PURCHASE_PRICE = 4.99

_S, _MS, _MC, _MF, _MOV, _PTS, _PUR = range(len(DAILY_COLUMNS))


def _ratio(num, den):
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    return np.divide(num, den, out=np.zeros(np.broadcast(num, den).shape), where=den > 0)


def temporal_matrix(counts: np.ndarray) -> np.ndarray:
    """Map a ``(n_days, 7)`` daily count table onto the 10 temporal columns."""
    c = np.asarray(counts, dtype=np.float64)
    started = c[:, _MS]
    out = np.empty((c.shape[0], len(TEMPORAL_COLUMNS)))
    out[:, 0] = (c != 0).any(axis=1)
    out[:, 1] = c[:, _S]
    out[:, 2] = started
    out[:, 3] = c[:, _MOV]
    out[:, 4] = _ratio(c[:, _PTS], started)
    out[:, 5] = _ratio(c[:, _MOV], started)
    out[:, 6] = c[:, _MC]
    out[:, 7] = _ratio(c[:, _MC], started)
    out[:, 8] = c[:, _MF]
    out[:, 9] = c[:, _PUR] > 0
    return out


def temporal_features(bins: Sequence[DailyRecord], observation_days: int = 14) -> np.ndarray:
    """Temporal matrix from consecutive daily records (oldest first)."""
    if len(bins) != observation_days:
        raise ValueError(f"expected {observation_days} daily records, got {len(bins)}")
    for a, b in zip(bins, bins[1:]):
        if b.day != a.day + 1:
            raise ValueError("daily records must cover consecutive days")
    counts = np.array(
        [
            (r.sessions, r.missions_started, r.missions_completed, r.missions_failed,
             r.total_moves, r.total_points, int(r.purchased))
            for r in bins
        ],
        dtype=np.int64,
    ).reshape(len(bins), len(DAILY_COLUMNS))
    return temporal_matrix(counts)


def _one_hot(value: str, choices: Sequence[str], what: str) -> np.ndarray:
    if value not in choices:
        raise ConfigError(f"unknown {what} {value!r}; expected one of {', '.join(choices)}")
    v = np.zeros(len(choices))
    v[choices.index(value)] = 1.0
    return v


def aggregate_features(
    log: EventLog,
    profile: "PlayerProfile",
    prediction_date: int,
    lookback_days: int = LOOKBACK_DAYS,
) -> np.ndarray:
    """36-entry aggregate vector describing the player as of ``prediction_date``."""
    pid = profile.player_id
    sl = log.span(pid)
    days = log.day[sl]
    past = int(np.searchsorted(days, prediction_date))
    kinds = log.kind[sl][:past]
    lifetime_completed = float(np.count_nonzero(kinds == 2))
    lifetime_purchases = float(np.count_nonzero(kinds == 4))

    start = prediction_date - lookback_days
    window = daily_counts(log, pid, start, prediction_date).sum(axis=0).astype(np.float64)
    lo = int(np.searchsorted(days, start))
    active_days = float(np.unique(days[lo:past]).size)

    sessions, started, completed, failed = window[_S], window[_MS], window[_MC], window[_MF]
    moves, points, purchases = window[_MOV], window[_PTS], window[_PUR]
    minutes = (SECONDS_PER_MOVE * moves + SECONDS_PER_SESSION * sessions) / 60.0
    boosters = float(int(moves) // MOVES_PER_BOOSTER)
    coins_used = COINS_PER_CONTINUE * failed + COINS_PER_BOOSTER * boosters

    description = [
        float(bool(profile.fb_connected)),
        max(prediction_date - profile.install_day, 0) / DAYS_PER_MONTH,
        active_days,
        1.0 + lifetime_completed,
    ]
    behaviour = [
        minutes,
        float(_ratio(minutes, active_days)),
        sessions,
        started,
        float(_ratio(completed, started)),
        float(_ratio(max(started - completed - failed, 0.0), started)),
        coins_used,
        float(_ratio(coins_used, started)),
        points / POINTS_PER_COIN,
        float(_ratio(failed, started)),
        float(_ratio(boosters, started)),
        purchases,
        PURCHASE_PRICE * purchases,
        PURCHASE_PRICE * lifetime_purchases,
        float(_ratio(completed, active_days)),
    ]
    shares = np.asarray(profile.progression, dtype=np.float64)
    if shares.shape != (len(GAME_MODES),):
        raise ConfigError(f"profile {pid} needs {len(GAME_MODES)} progression shares")
    return np.concatenate([
        description,
        behaviour,
        shares * lifetime_completed,
        _one_hot(profile.platform, PLATFORMS, "platform"),
        _one_hot(profile.acquisition, ACQUISITION_CHANNELS, "acquisition channel"),
    ])


@dataclass(frozen=True)
class LabeledSample:
    player_id: str
    prediction_date: int
    temporal: np.ndarray
    aggregate: np.ndarray
    label: int


def flatten(temporal: np.ndarray, aggregate: np.ndarray | None = None, include_aggregate: bool = False) -> np.ndarray:
    """Day-major flattening of one ``(n_t, n_f)`` matrix or a ``(N, n_t, n_f)`` batch.

    With ``include_aggregate`` the aggregate vector is appended.
    """
    temporal = np.asarray(temporal)
    flat = temporal.reshape(temporal.shape[:-2] + (-1,))
    if not include_aggregate:
        return flat
    if aggregate is None:
        raise ValueError("include_aggregate requires the aggregate vector")
    return np.concatenate([flat, np.asarray(aggregate)], axis=-1)


def flat_feature_names(observation_days: int = 14) -> list[str]:
    """Names of the flattened temporal vector; suffix is days ago (1 = most recent)."""
    return [f"{col}_{observation_days - t}" for t in range(observation_days) for col in TEMPORAL_COLUMNS]


@dataclass
class Dataset:
    """Featurized samples stored column-wise."""

    player_id: np.ndarray
    prediction_date: np.ndarray
    temporal: np.ndarray
    aggregate: np.ndarray
    label: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = len(self.label)
        if self.temporal.ndim != 3 or self.temporal.shape[0] != n or self.temporal.shape[2] != len(TEMPORAL_COLUMNS):
            raise ValueError(f"temporal block has shape {self.temporal.shape}")
        if self.aggregate.shape != (n, len(AGGREGATE_COLUMNS)):
            raise ValueError(f"aggregate block has shape {self.aggregate.shape}")
        if len(self.player_id) != n or len(self.prediction_date) != n:
            raise ValueError("column lengths differ")

    def __len__(self) -> int:
        return len(self.label)

    def __getitem__(self, i: int) -> LabeledSample:
        return LabeledSample(
            str(self.player_id[i]), int(self.prediction_date[i]),
            self.temporal[i], self.aggregate[i], int(self.label[i]),
        )

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(
            self.player_id[idx], self.prediction_date[idx], self.temporal[idx],
            self.aggregate[idx], self.label[idx], dict(self.meta),
        )

    @property
    def observation_days(self) -> int:
        return self.temporal.shape[1]

    def save(self, path: str | Path, extra: Mapping | None = None) -> Path:
        """Write ``<stem>.npz`` (columns) plus ``<stem>.json`` (schema sidecar)."""
        path = Path(path).with_suffix(".npz")
        with path.open("wb") as fh:
            np.savez(
                fh,
                player_id=self.player_id.astype(str),
                prediction_date=self.prediction_date,
                temporal=self.temporal,
                aggregate=self.aggregate,
                label=self.label,
            )
        sidecar = {
            "format": "churnlab-dataset/1",
            "n_samples": len(self),
            "observation_days": self.observation_days,
            "temporal_columns": list(TEMPORAL_COLUMNS),
            "aggregate_columns": list(AGGREGATE_COLUMNS),
            "flat_columns": flat_feature_names(self.observation_days),
            "scaler": fit_scaler(self).to_dict() if len(self) >= 2 else None,
            **self.meta,
            **(extra or {}),
        }
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        path = Path(path).with_suffix(".npz")
        sidecar = json.loads(path.with_suffix(".json").read_text())
        if sidecar.get("format") != "churnlab-dataset/1":
            raise ValueError(f"{path}: unknown dataset format {sidecar.get('format')!r}")
        if sidecar["aggregate_columns"] != list(AGGREGATE_COLUMNS) or sidecar["temporal_columns"] != list(TEMPORAL_COLUMNS):
            raise ValueError(f"{path}: column layout does not match this version")
        with np.load(path, allow_pickle=False) as z:
            meta = {"config_hash": sidecar["config_hash"]} if "config_hash" in sidecar else {}
            return cls(z["player_id"], z["prediction_date"], z["temporal"], z["aggregate"], z["label"], meta)

    def to_csv(self, path: str | Path) -> None:
        """Flat CSV for inspection: ids, label, 140 temporal columns, 36 aggregates."""
        names = ["player_id", "prediction_date", "label"] + flat_feature_names(self.observation_days) + list(AGGREGATE_COLUMNS)
        flat = flatten(self.temporal, self.aggregate, include_aggregate=True)
        with Path(path).open("w", encoding="utf-8", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for pid, t, y, row in zip(self.player_id, self.prediction_date, self.label, flat):
                fh.write(f"{pid},{t},{y}," + ",".join(repr(float(v)) for v in row) + "\n")


def featurize(
    log: EventLog,
    profiles: Mapping[str, "PlayerProfile"],
    samples: Sequence[Sample],
    cfg: ChurnConfig = ChurnConfig(),
    lookback_days: int = LOOKBACK_DAYS,
) -> Dataset:
    n = len(samples)
    T = cfg.observation_days
    temporal = np.zeros((n, T, len(TEMPORAL_COLUMNS)))
    aggregate = np.zeros((n, len(AGGREGATE_COLUMNS)))
    labels = np.zeros(n, dtype=np.int8)
    for i, s in enumerate(samples):
        if s.player_id not in profiles:
            raise KeyError(f"no profile for player {s.player_id!r}")
        temporal[i] = temporal_matrix(daily_counts(log, s.player_id, s.prediction_date - T, s.prediction_date))
        aggregate[i] = aggregate_features(log, profiles[s.player_id], s.prediction_date, lookback_days)
        if s.label is ChurnLabel.NOT_ELIGIBLE:
            raise ValueError(f"sample {s} is not eligible")
        labels[i] = s.label is ChurnLabel.CHURNER
    return Dataset(
        np.array([s.player_id for s in samples], dtype=str),
        np.array([s.prediction_date for s in samples], dtype=np.int64),
        temporal,
        aggregate,
        labels,
    )


def _fit_columns(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    constant = std <= 1e-12 * (1.0 + np.abs(mean))
    # constant columns pass through untouched
    return np.where(constant, 0.0, mean), np.where(constant, 1.0, std)


@dataclass(frozen=True)
class Scaler:
    temporal_mean: np.ndarray
    temporal_std: np.ndarray
    aggregate_mean: np.ndarray
    aggregate_std: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("temporal_mean", "temporal_std", "aggregate_mean", "aggregate_std")}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Scaler":
        return cls(*(np.asarray(d[k], dtype=np.float64) for k in ("temporal_mean", "temporal_std", "aggregate_mean", "aggregate_std")))

    def transform(self, temporal: np.ndarray, aggregate: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return (temporal - self.temporal_mean) / self.temporal_std, (aggregate - self.aggregate_mean) / self.aggregate_std


def fit_scaler(data: Dataset) -> Scaler:
    """Z-score parameters per temporal column (pooled over days) and per aggregate entry."""
    if len(data) < 2:
        raise ValueError("fit_scaler needs at least 2 training samples")
    tm, ts = _fit_columns(data.temporal.reshape(-1, data.temporal.shape[-1]))
    am, as_ = _fit_columns(data.aggregate)
    return Scaler(tm, ts, am, as_)


def apply_scaler(scaler: Scaler, data: Dataset) -> Dataset:
    temporal, aggregate = scaler.transform(data.temporal, data.aggregate)
    return Dataset(data.player_id, data.prediction_date, temporal, aggregate, data.label, dict(data.meta))
