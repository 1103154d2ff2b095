"""Experiment configuration and per-stage content hashes.

An experiment is described by one JSON file. Every knob has a documented
default (see ``ExperimentConfig``); the single master ``seed`` feeds the
generator, the fold split, network initialisation and the forest.

Each pipeline stage has a hash over its own settings and the hash of the
stage it consumes, so a change upstream invalidates everything downstream
while unrelated edits (say, the fold count) leave earlier artifacts valid.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .architectures import ArchitectureId
from .features import LOOKBACK_DAYS
from .forest import ForestConfig
from .labeling import ChurnConfig, ConfigError
from .nn import TrainConfig
from .synth import SynthConfig

STAGES = ("synth", "label", "featurize", "train", "eval")
COHORT_CHOICES = ("converted",)
UNCERTAINTY_CHOICES = ("sem", "std")


def digest(obj: Any) -> str:
    """Short SHA-256 over canonical JSON."""
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(raw.encode()).hexdigest()[:16]


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _sub(cls, d: Mapping | None, what: str):
    d = dict(d or {})
    if "seed" in d:
        raise ConfigError(f"{what}.seed is not configurable; set the top-level 'seed'")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{what}: {exc}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    synth: SynthConfig = field(default_factory=SynthConfig)
    events: str | None = None  # external event log; replaces the generator
    profiles: str | None = None  # profile CSV for an external log
    churn: ChurnConfig = field(default_factory=ChurnConfig)
    first_sampling_date: int | None = None  # None: latest date whose labels are all final
    lookback_days: int = LOOKBACK_DAYS
    train: TrainConfig = field(default_factory=TrainConfig)
    forest: ForestConfig = field(default_factory=ForestConfig)
    architectures: tuple[str, ...] = tuple(a.value for a in ArchitectureId)
    folds: int = 10
    cohort: str | None = None
    uncertainty: str = "sem"

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if (self.events is None) != (self.profiles is None):
            raise ConfigError("'events' and 'profiles' must be given together")
        for a in self.architectures:
            try:
                ArchitectureId(a)
            except ValueError:
                raise ConfigError(f"unknown architecture {a!r}") from None
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        if self.cohort not in (None, *COHORT_CHOICES):
            raise ConfigError(f"cohort must be one of {COHORT_CHOICES} or null")
        if self.uncertainty not in UNCERTAINTY_CHOICES:
            raise ConfigError(f"uncertainty must be one of {UNCERTAINTY_CHOICES}")
        if self.lookback_days < 1:
            raise ConfigError("lookback_days must be >= 1")
        # thread the master seed into every seeded component
        object.__setattr__(self, "synth", replace(self.synth, seed=self.seed))
        object.__setattr__(self, "train", replace(self.train, seed=self.seed))
        object.__setattr__(self, "forest", replace(self.forest, seed=self.seed))
        object.__setattr__(self, "architectures", tuple(self.architectures))

    @property
    def horizon(self) -> int:
        """First day past the data (only defined for generated data)."""
        return self.synth.day_span

    def sampling_start(self, horizon: int) -> int:
        if self.first_sampling_date is not None:
            return self.first_sampling_date
        c = self.churn
        return horizon - c.label_delay - (c.sampling_count - 1) * c.sampling_spacing_days

    @classmethod
    def from_dict(cls, d: Mapping) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        seed = d.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        kw = {k: v for k, v in d.items() if k not in ("synth", "churn", "train", "forest")}
        if "architectures" in kw:
            kw["architectures"] = tuple(kw["architectures"])
        return cls(
            synth=_sub(SynthConfig, d.get("synth"), "synth"),
            churn=_sub(ChurnConfig, d.get("churn"), "churn"),
            train=_sub(TrainConfig, d.get("train"), "train"),
            forest=_sub(ForestConfig, d.get("forest"), "forest"),
            **kw,
        )

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        strip = lambda d: {k: v for k, v in d.items() if k != "seed"}  # noqa: E731
        return {
            "seed": self.seed,
            "synth": strip(self.synth.to_dict()),
            "events": self.events,
            "profiles": self.profiles,
            "churn": self.churn.to_dict(),
            "first_sampling_date": self.first_sampling_date,
            "lookback_days": self.lookback_days,
            "train": strip(self.train.to_dict()),
            "forest": strip(self.forest.to_dict()),
            "architectures": list(self.architectures),
            "folds": self.folds,
            "cohort": self.cohort,
            "uncertainty": self.uncertainty,
        }

    def with_overrides(self, **kw) -> "ExperimentConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return ExperimentConfig.from_dict({**self.to_dict(), **kw}) if kw else self

    # stage hashes -----------------------------------------------------

    def stage_hashes(self, events_digest: str | None = None) -> dict[str, str]:
        """``events_digest`` identifies an external event log (its file
        hash); generated data is identified by the generator settings."""
        if self.events is None:
            source = {"synth": self.synth.to_dict()}
        else:
            source = {"events": events_digest, "profiles_path": Path(self.profiles).name}
        h = {"synth": digest(source)}
        h["label"] = digest({"up": h["synth"], "churn": self.churn.to_dict(), "first": self.first_sampling_date})
        h["featurize"] = digest({"up": h["label"], "lookback": self.lookback_days})
        h["train"] = digest({"up": h["featurize"], "train": self.train.to_dict(), "forest": self.forest.to_dict()})
        h["eval"] = digest({"up": h["train"], "folds": self.folds, "cohort": self.cohort, "uncertainty": self.uncertainty})
        return h


def architectures_of(names: Sequence[str]) -> list[ArchitectureId]:
    return [ArchitectureId(n) for n in names]
