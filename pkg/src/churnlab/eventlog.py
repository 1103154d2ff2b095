"""Raw gameplay telemetry: event model, CSV/JSONL I/O and per-day binning."""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence

import numpy as np

log = logging.getLogger(__name__)

FIELDS = ("player_id", "day", "kind", "moves_used", "points")

# Column order of the per-day count table returned by ``daily_counts``.
DAILY_COLUMNS = (
    "sessions",
    "missions_started",
    "missions_completed",
    "missions_failed",
    "total_moves",
    "total_points",
    "purchases",
)


class EventKind(enum.IntEnum):
    SESSION_START = 0
    MISSION_START = 1
    MISSION_COMPLETE = 2
    MISSION_FAIL = 3
    PURCHASE = 4

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "EventKind":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown event kind {text!r}") from None

    @property
    def is_mission(self) -> bool:
        return self in (EventKind.MISSION_START, EventKind.MISSION_COMPLETE, EventKind.MISSION_FAIL)


@dataclass(frozen=True)
class PlayerEvent:
    player_id: str
    day: int
    kind: EventKind
    moves_used: int = 0
    points: int = 0

    def __post_init__(self) -> None:
        if not self.player_id:
            raise ValueError("empty player_id")
        if self.day < 0:
            raise ValueError(f"negative day {self.day}")
        if self.moves_used < 0 or self.points < 0:
            raise ValueError("moves_used and points must be non-negative")
        if not self.kind.is_mission and (self.moves_used or self.points):
            raise ValueError(f"{self.kind.label} events carry no moves or points")


@dataclass(frozen=True)
class DailyRecord:
    player_id: str
    day: int
    sessions: int = 0
    missions_started: int = 0
    missions_completed: int = 0
    missions_failed: int = 0
    total_moves: int = 0
    total_points: int = 0
    purchased: bool = False

    def is_empty(self) -> bool:
        return not (
            self.sessions
            or self.missions_started
            or self.missions_completed
            or self.missions_failed
            or self.total_moves
            or self.total_points
            or self.purchased
        )


class EventLog:
    """Immutable columnar store of events sorted by (player_id, day).

    Events of one player occupy a contiguous slice, so a player's activity
    is found with one dict lookup plus a slice.
    """

    def __init__(
        self,
        player_ids: Sequence[str],
        player: np.ndarray,
        day: np.ndarray,
        kind: np.ndarray,
        moves: np.ndarray,
        points: np.ndarray,
    ) -> None:
        # Callers must pass arrays already sorted by (player, day); use
        # ``from_columns`` otherwise.
        self.player_ids: tuple[str, ...] = tuple(player_ids)
        self.player = np.asarray(player, dtype=np.int64)
        self.day = np.asarray(day, dtype=np.int64)
        self.kind = np.asarray(kind, dtype=np.int8)
        self.moves = np.asarray(moves, dtype=np.int64)
        self.points = np.asarray(points, dtype=np.int64)
        for arr in (self.player, self.day, self.kind, self.moves, self.points):
            arr.setflags(write=False)
        self._index = {pid: i for i, pid in enumerate(self.player_ids)}
        self._offsets = np.searchsorted(self.player, np.arange(len(self.player_ids) + 1))

    @classmethod
    def empty(cls) -> "EventLog":
        z = np.zeros(0, dtype=np.int64)
        return cls((), z, z, z, z, z)

    @classmethod
    def from_columns(cls, player_id, day, kind, moves, points) -> "EventLog":
        """Build from per-event columns in any order; ordering within a
        (player, day) is preserved (stable sort)."""
        player_id = np.asarray(player_id, dtype=str)
        if player_id.size == 0:
            return cls.empty()
        ids, inverse = np.unique(player_id, return_inverse=True)
        day = np.asarray(day, dtype=np.int64)
        if (day < 0).any():
            raise ValueError("negative day in event columns")
        order = np.argsort(inverse * (int(day.max()) + 1) + day, kind="stable")
        return cls(
            [str(p) for p in ids],
            inverse[order],
            day[order],
            np.asarray(kind, dtype=np.int8)[order],
            np.asarray(moves, dtype=np.int64)[order],
            np.asarray(points, dtype=np.int64)[order],
        )

    @classmethod
    def from_events(cls, events: Iterable[PlayerEvent]) -> "EventLog":
        events = list(events)
        return cls.from_columns(
            [e.player_id for e in events],
            [e.day for e in events],
            [int(e.kind) for e in events],
            [e.moves_used for e in events],
            [e.points for e in events],
        )

    def __len__(self) -> int:
        return int(self.day.size)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventLog):
            return NotImplemented
        return self.player_ids == other.player_ids and all(
            np.array_equal(a, b)
            for a, b in zip(
                (self.player, self.day, self.kind, self.moves, self.points),
                (other.player, other.day, other.kind, other.moves, other.points),
            )
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"EventLog(events={len(self)}, players={len(self.player_ids)})"

    def __contains__(self, player_id: str) -> bool:
        return player_id in self._index

    def span(self, player_id: str) -> slice:
        """Slice of the event arrays belonging to ``player_id`` (empty if unknown)."""
        i = self._index.get(player_id)
        if i is None:
            return slice(0, 0)
        return slice(int(self._offsets[i]), int(self._offsets[i + 1]))

    def events(self, player_id: str | None = None) -> Iterator[PlayerEvent]:
        sl = self.span(player_id) if player_id is not None else slice(0, len(self))
        for j in range(sl.start, sl.stop):
            yield PlayerEvent(
                self.player_ids[self.player[j]],
                int(self.day[j]),
                EventKind(int(self.kind[j])),
                int(self.moves[j]),
                int(self.points[j]),
            )

    __iter__ = events

    def days_of(self, player_id: str) -> np.ndarray:
        return self.day[self.span(player_id)]


class IngestResult(NamedTuple):
    log: EventLog
    accepted: int
    rejected: list[tuple[int, str]]  # (line number, reason)


def _parse_int(value: object, name: str) -> int:
    if isinstance(value, bool):
        raise ValueError(f"{name} must be an integer")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value.strip()
        if text.lstrip("-").isdigit():
            return int(text)
    raise ValueError(f"{name} must be an integer, got {value!r}")


def _parse_row(row: dict) -> PlayerEvent:
    missing = [f for f in FIELDS if row.get(f) is None]
    if missing:
        raise ValueError(f"missing field(s) {', '.join(missing)}")
    pid = str(row["player_id"]).strip()
    return PlayerEvent(
        pid,
        _parse_int(row["day"], "day"),
        EventKind.parse(str(row["kind"])),
        _parse_int(row["moves_used"], "moves_used"),
        _parse_int(row["points"], "points"),
    )


def _infer_format(path: Path) -> str:
    return "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson", ".json") else "csv"


def ingest(path: str | Path, format: str | None = None) -> IngestResult:
    """Read an event file. Malformed rows are skipped and reported with their
    1-based line number; I/O errors and a wrong CSV header are fatal."""
    path = Path(path)
    fmt = format or _infer_format(path)
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unsupported format {fmt!r}")
    events: list[PlayerEvent] = []
    rejected: list[tuple[int, str]] = []
    with path.open("r", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                return IngestResult(EventLog.empty(), 0, [])
            if tuple(h.strip() for h in header) != FIELDS:
                raise ValueError(f"{path}: expected header {','.join(FIELDS)}, got {','.join(header)}")
            for values in reader:
                lineno = reader.line_num
                if not values:
                    continue
                if len(values) != len(FIELDS):
                    rejected.append((lineno, f"expected {len(FIELDS)} fields, got {len(values)}"))
                    continue
                try:
                    events.append(_parse_row(dict(zip(FIELDS, values))))
                except ValueError as exc:
                    rejected.append((lineno, str(exc)))
        else:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    if not isinstance(obj, dict):
                        raise ValueError("line is not a JSON object")
                    events.append(_parse_row(obj))
                except ValueError as exc:
                    rejected.append((lineno, str(exc)))
    if rejected:
        log.warning("%s: rejected %d malformed row(s), first at line %d", path, len(rejected), rejected[0][0])
    return IngestResult(EventLog.from_events(events), len(events), rejected)


def write_events(log_: EventLog, path: str | Path, format: str | None = None) -> None:
    """Write ``log_`` in storage order with LF line endings."""
    path = Path(path)
    fmt = format or _infer_format(path)
    labels = [k.label for k in EventKind]
    ids = log_.player_ids
    with path.open("w", encoding="utf-8", newline="") as fh:
        if fmt == "csv":
            fh.write(",".join(FIELDS) + "\n")
            fh.writelines(
                f"{ids[p]},{d},{labels[k]},{m},{pt}\n"
                for p, d, k, m, pt in zip(
                    log_.player.tolist(), log_.day.tolist(), log_.kind.tolist(),
                    log_.moves.tolist(), log_.points.tolist(),
                )
            )
        elif fmt == "jsonl":
            for p, d, k, m, pt in zip(
                log_.player.tolist(), log_.day.tolist(), log_.kind.tolist(),
                log_.moves.tolist(), log_.points.tolist(),
            ):
                fh.write(json.dumps(
                    {"player_id": ids[p], "day": d, "kind": labels[k], "moves_used": m, "points": pt},
                    separators=(",", ":"),
                ) + "\n")
        else:
            raise ValueError(f"unsupported format {fmt!r}")


def daily_counts(log_: EventLog, player_id: str, start: int, end: int) -> np.ndarray:
    """Per-day count table of shape ``(end - start, 7)`` in ``DAILY_COLUMNS`` order."""
    if start >= end:
        raise ValueError(f"empty day range [{start}, {end})")
    out = np.zeros((end - start, len(DAILY_COLUMNS)), dtype=np.int64)
    sl = log_.span(player_id)
    days = log_.day[sl]
    lo, hi = np.searchsorted(days, [start, end])
    if lo == hi:
        return out
    rows = days[lo:hi] - start
    kind = log_.kind[sl][lo:hi]
    # column for each kind: session, start, complete, fail, purchase
    np.add.at(out, (rows, np.array([0, 1, 2, 3, 6])[kind]), 1)
    np.add.at(out[:, 4], rows, log_.moves[sl][lo:hi])
    np.add.at(out[:, 5], rows, log_.points[sl][lo:hi])
    return out


def daily_bins(log_: EventLog, player_id: str, start: int, end: int) -> list[DailyRecord]:
    """One record per day in ``[start, end)``, zero-filled on inactive days."""
    table = daily_counts(log_, player_id, start, end)
    return [
        DailyRecord(player_id, start + i, *(int(v) for v in row[:6]), purchased=bool(row[6]))
        for i, row in enumerate(table)
    ]


def activity_days(log_: EventLog, player_id: str) -> list[int]:
    """Sorted distinct days on which the player has any event."""
    return np.unique(log_.days_of(player_id)).tolist()
