"""Synthetic player telemetry with a planted, context-dependent churn signal.

Each player belongs to one of four archetypes. Play alternates between
normal phases and engagement declines: during a decline the activity level
ramps down over ``decline_length_days`` while a churn hazard ramps up
(``base_hazard[archetype] * ramp``). Players that survive a decline take a
short break and return to normal play.

The decline looks the same for every archetype, but newbies and casual players
usually churn at the end of it while veterans and spenders usually come back.
Archetypes share their per-day play model apart from a slightly different
play rate and purchases; they are told apart by tenure, level, spend and mode
mix, all of which only show up in aggregate features.

Per-day volume is deliberately noisy: skipped days come in short runs, a
share of started missions is abandoned without moves or points, and level
lengths are overdispersed. Whether the player showed up on the most recent
days is therefore the sharpest short-term churn cue.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple

import numpy as np

from .eventlog import EventKind, EventLog, write_events
from .features import ACQUISITION_CHANNELS, GAME_MODES, PLATFORMS

ARCHETYPES = ("newbie", "casual", "veteran", "spender")
ABANDON_RATE = 0.6
MOVES_SHAPE = 1.5
ACTIVITY_PERSISTENCE = 0.5


@dataclass(frozen=True)
class ArchetypeTraits:
    p_active: float  # mean daily play probability in normal phase
    sessions: float  # mean extra sessions per active day
    missions: float  # mean missions started per active day
    skill: tuple[float, float]  # beta distribution parameters
    onset_rate: float  # daily probability that a decline starts
    purchase_rate: float  # purchase probability per active day
    fb_rate: float
    platform: tuple[float, ...]  # over PLATFORMS
    acquisition: tuple[float, ...]  # over ACQUISITION_CHANNELS
    modes: tuple[float, ...]  # Dirichlet concentration over GAME_MODES


TRAITS: dict[str, ArchetypeTraits] = {
    "newbie": ArchetypeTraits(
        0.90, 1.0, 1.5, (3.0, 3.0), 0.08, 0.0, 0.25,
        (0.55, 0.05, 0.35, 0.05), (0.60, 0.15, 0.25),
        (4, 30, 1, 1, 1, 1, 2, 1, 1, 1),
    ),
    "casual": ArchetypeTraits(
        0.92, 1.0, 1.5, (3.0, 3.0), 0.04, 0.0, 0.35,
        (0.50, 0.05, 0.40, 0.05), (0.45, 0.20, 0.35),
        (8, 25, 2, 3, 2, 3, 3, 2, 2, 1),
    ),
    "veteran": ArchetypeTraits(
        0.93, 1.0, 1.5, (3.0, 3.0), 0.03, 0.0, 0.55,
        (0.40, 0.05, 0.50, 0.05), (0.25, 0.25, 0.50),
        (6, 15, 5, 5, 7, 5, 4, 5, 5, 6),
    ),
    "spender": ArchetypeTraits(
        0.94, 1.0, 1.5, (3.0, 3.0), 0.025, 0.08, 0.60,
        (0.30, 0.05, 0.60, 0.05), (0.35, 0.20, 0.45),
        (5, 15, 6, 5, 8, 6, 4, 6, 5, 7),
    ),
}


@dataclass(frozen=True)
class SynthConfig:
    player_count: int = 16000
    day_span: int = 365
    seed: int = 0
    archetype_weights: Mapping[str, float] = field(
        default_factory=lambda: {"newbie": 0.52, "casual": 0.30, "veteran": 0.12, "spender": 0.06}
    )
    base_hazard: Mapping[str, float] = field(
        default_factory=lambda: {"newbie": 0.60, "casual": 0.45, "veteran": 0.05, "spender": 0.05}
    )
    weekly_amplitude: float = 0.1
    decline_length_days: int = 10
    decline_floor: float = 0.15  # activity multiplier reached at the end of a decline
    max_break_days: int = 20  # pause after a survived decline; below the churn span
    observation_days: int = 14
    label_delay_days: int = 37

    def __post_init__(self) -> None:
        if self.player_count < 0:
            raise ValueError("player_count must be >= 0")
        if set(self.archetype_weights) != set(ARCHETYPES) or set(self.base_hazard) != set(ARCHETYPES):
            raise ValueError(f"archetype tables must cover exactly {ARCHETYPES}")
        if not math.isclose(sum(self.archetype_weights.values()), 1.0, abs_tol=1e-9):
            raise ValueError("archetype weights must sum to 1")
        if any(w < 0 for w in self.archetype_weights.values()):
            raise ValueError("archetype weights must be non-negative")
        if not all(0.0 < h < 1.0 for h in self.base_hazard.values()):
            raise ValueError("hazards must lie in (0, 1)")
        if not 0.0 <= self.weekly_amplitude <= 1.0:
            raise ValueError("weekly_amplitude must lie in [0, 1]")
        if self.day_span < self.label_delay_days + self.observation_days:
            raise ValueError("day_span too short to label any sample")
        if self.decline_length_days < 1 or not 0.0 <= self.decline_floor < 1.0:
            raise ValueError("invalid decline shape")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["archetype_weights"] = dict(self.archetype_weights)
        d["base_hazard"] = dict(self.base_hazard)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth config key(s): {', '.join(sorted(unknown))}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class PlayerProfile:
    player_id: str
    archetype: str
    install_day: int
    platform: str
    acquisition: str
    fb_connected: bool
    skill: float
    progression: tuple[float, ...]  # share of completed levels per game mode


class PlayerTrace(NamedTuple):
    """Latent ground truth behind one simulated player."""

    profile: PlayerProfile
    engagement: np.ndarray  # activity multiplier per day of the span
    decline_phase: np.ndarray  # 1..L inside a decline, 0 otherwise
    churn_day: int | None  # day the churn hazard fired


def player_id(index: int) -> str:
    return f"p{index:07d}"


def player_rng(seed: int, index: int) -> np.random.Generator:
    """Counter-based stream keyed by (seed, player index)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def decline_ramp(cfg: SynthConfig) -> np.ndarray:
    L = cfg.decline_length_days
    return np.arange(1, L + 1) / L


def decline_churn_probability(hazard: float, phase: int, cfg: SynthConfig) -> float:
    """P(churn before the decline ends | no churn during the first ``phase - 1`` days)."""
    ramp = decline_ramp(cfg)[max(phase, 1) - 1:]
    return float(1.0 - np.prod(1.0 - hazard * ramp))


def _weekly(days: np.ndarray, amplitude: float) -> np.ndarray:
    # activity peaks at the end of each 7-day cycle
    return 1.0 + amplitude * np.cos(2.0 * np.pi * (days % 7 - 6) / 7.0)


def _overdispersed(rng: np.random.Generator, mean: float, size: int) -> np.ndarray:
    # negative binomial with shape MOVES_SHAPE: levels differ a lot in length
    return rng.negative_binomial(MOVES_SHAPE, MOVES_SHAPE / (MOVES_SHAPE + mean), size)


def _sticky_uniforms(rng: np.random.Generator, n: int, persistence: float) -> np.ndarray:
    """Uniform(0, 1) marginals where each day repeats the previous day's
    draw with probability ``persistence``, so skipped days come in runs."""
    u = rng.random(n)
    keep = rng.random(n) < persistence
    keep[0] = False
    # index of the most recent fresh draw at or before each day
    src = np.maximum.accumulate(np.where(keep, 0, np.arange(n)))
    return u[src]


def simulate_player(cfg: SynthConfig, index: int) -> tuple[PlayerTrace, dict[str, np.ndarray]]:
    rng = player_rng(cfg.seed, index)
    names = ARCHETYPES
    weights = np.array([cfg.archetype_weights[a] for a in names])
    arch = names[int(rng.choice(len(names), p=weights))]
    tr = TRAITS[arch]
    last_install = cfg.day_span - cfg.label_delay_days
    install = int(rng.integers(0, last_install))
    skill = float(np.clip(rng.beta(*tr.skill), 0.02, 0.98))
    profile = PlayerProfile(
        player_id=player_id(index),
        archetype=arch,
        install_day=install,
        platform=PLATFORMS[int(rng.choice(len(PLATFORMS), p=tr.platform))],
        acquisition=ACQUISITION_CHANNELS[int(rng.choice(len(ACQUISITION_CHANNELS), p=tr.acquisition))],
        fb_connected=bool(rng.random() < tr.fb_rate),
        skill=round(skill, 6),
        progression=tuple(round(float(x), 6) for x in rng.dirichlet(tr.modes)),
    )
    skill = profile.skill

    span = cfg.day_span
    engagement = np.zeros(span)
    phase = np.zeros(span, dtype=np.int64)
    L = cfg.decline_length_days
    ramp = decline_ramp(cfg)
    level = 1.0 - (1.0 - cfg.decline_floor) * ramp
    hazard = cfg.base_hazard[arch]
    churn_day = None
    t = install
    while t < span:
        normal = int(rng.geometric(tr.onset_rate))
        engagement[t:t + normal] = 1.0
        t += normal
        if t >= span:
            break
        n = min(L, span - t)
        engagement[t:t + n] = level[:n]
        phase[t:t + n] = np.arange(1, n + 1)
        fired = np.flatnonzero(rng.random(L) < hazard * ramp)
        if fired.size:
            churn_day = t + int(fired[0])
            engagement[churn_day + 1:] = 0.0
            phase[churn_day + 1:] = 0
            break
        t += L + int(rng.integers(0, cfg.max_break_days + 1))

    days = np.arange(span)
    p_active = float(np.clip(tr.p_active + rng.normal(0.0, 0.05), 0.2, 0.98))
    prob = np.clip(p_active * _weekly(days, cfg.weekly_amplitude) * engagement, 0.0, 1.0)
    active = _sticky_uniforms(rng, span, ACTIVITY_PERSISTENCE) < prob
    active[:install] = False
    active[install] = True  # declines start at least one day after install
    if churn_day is not None:
        active[churn_day + 1:] = False
    act_days = np.flatnonzero(active)
    m = engagement[act_days]
    k = act_days.size
    sessions = 1 + rng.poisson(tr.sessions * m)
    started = 1 + rng.poisson(tr.missions * m)
    # abandoned missions leave no moves or points behind
    finished = rng.binomial(started, 1.0 - ABANDON_RATE)
    completed = rng.binomial(finished, skill)
    failed = finished - completed
    purchases = (rng.random(k) < tr.purchase_rate).astype(np.int64)
    trace = PlayerTrace(profile, engagement, phase, churn_day)
    counts = dict(day=act_days, sessions=sessions, started=started, completed=completed,
                  failed=failed, purchases=purchases)
    # per-mission moves and points drawn here so the stream order is fixed
    n_done, n_fail = int(completed.sum()), int(failed.sum())
    counts["done_moves"] = 1 + _overdispersed(rng, 18.0 * (1.3 - skill), n_done)
    counts["done_points"] = 50 * rng.poisson(4.0 + 6.0 * skill, n_done)
    counts["fail_moves"] = 1 + _overdispersed(rng, 24.0, n_fail)
    counts["fail_points"] = 50 * rng.poisson(1.0 + 2.0 * skill, n_fail)
    return trace, counts


def _events_from_counts(c: dict[str, np.ndarray]) -> tuple[np.ndarray, ...]:
    """Expand per-day counts to event rows: sessions, starts, completions,
    failures, purchases, in that order within each day."""
    per_kind = np.stack([c["sessions"], c["started"], c["completed"], c["failed"], c["purchases"]], axis=1)
    n_rows = per_kind.sum(axis=1)
    day = np.repeat(c["day"], n_rows)
    kind = np.repeat(np.tile(np.arange(5, dtype=np.int8), len(c["day"])), per_kind.ravel())
    moves = np.zeros(day.size, dtype=np.int64)
    points = np.zeros(day.size, dtype=np.int64)
    done = kind == EventKind.MISSION_COMPLETE
    fail = kind == EventKind.MISSION_FAIL
    moves[done], points[done] = c["done_moves"], c["done_points"]
    moves[fail], points[fail] = c["fail_moves"], c["fail_points"]
    return day, kind, moves, points


def generate(cfg: SynthConfig, with_traces: bool = False):
    """Simulate ``cfg.player_count`` players.

    Returns ``(log, profiles)``, or ``(log, profiles, traces)`` when
    ``with_traces`` is set. Deterministic in ``cfg``.
    """
    profiles, traces = [], []
    cols: list[list[np.ndarray]] = [[], [], [], [], []]
    for i in range(cfg.player_count):
        trace, counts = simulate_player(cfg, i)
        day, kind, moves, points = _events_from_counts(counts)
        for store, arr in zip(cols, (np.full(day.size, i, dtype=np.int64), day, kind, moves, points)):
            store.append(arr)
        profiles.append(trace.profile)
        if with_traces:
            traces.append(trace)
    if cfg.player_count == 0:
        log = EventLog.empty()
    else:
        player, day, kind, moves, points = (np.concatenate(c) for c in cols)
        # drop players without events so player indices stay dense
        present = np.unique(player)
        remap = np.full(cfg.player_count, -1, dtype=np.int64)
        remap[present] = np.arange(present.size)
        log = EventLog([player_id(int(p)) for p in present], remap[player], day, kind, moves, points)
    if with_traces:
        return log, profiles, traces
    return log, profiles


PROFILE_FIELDS = ("player_id", "archetype", "install_day", "platform", "acquisition", "fb_connected", "skill") + tuple(
    f"mode_{m}" for m in GAME_MODES
)


def write_profiles(profiles: Iterable[PlayerProfile], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_FIELDS)
        for p in profiles:
            w.writerow(
                (p.player_id, p.archetype, p.install_day, p.platform, p.acquisition, int(p.fb_connected), repr(p.skill))
                + tuple(repr(x) for x in p.progression)
            )


def read_profiles(path: str | Path) -> dict[str, PlayerProfile]:
    out = {}
    with Path(path).open("r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PROFILE_FIELDS:
            raise ValueError(f"{path}: unexpected profile header")
        for row in reader:
            pid, arch, install, platform, acq, fb, skill, *modes = row
            out[pid] = PlayerProfile(pid, arch, int(install), platform, acq, fb == "1", float(skill),
                                     tuple(float(x) for x in modes))
    return out


def export(log: EventLog, profiles: Iterable[PlayerProfile], directory: str | Path, format: str = "csv") -> tuple[Path, Path]:
    """Write ``events.<fmt>`` and ``profiles.csv`` into ``directory``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ext = "jsonl" if format == "jsonl" else "csv"
    events_path = directory / f"events.{ext}"
    profiles_path = directory / "profiles.csv"
    write_events(log, events_path, format)
    write_profiles(profiles, profiles_path)
    return events_path, profiles_path
