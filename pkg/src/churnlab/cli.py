"""``churnlab`` command line: synth -> label -> featurize -> train/eval/importance -> report.

All commands share one experiment config and one output directory. Every
artifact gets a ``<name>.meta.json`` sidecar naming the stage and config
hash it was produced under; a command refuses inputs whose hash does not
match what the current config expects.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .architectures import ArchitectureId, TrainedModel, train_architecture
from .config import ExperimentConfig, file_digest
from .evaluation import MetricSummary, dump_json, format_table, read_roc_csv, roc_curve, write_roc_csv
from .eventlog import EventLog, ingest
from .features import Dataset, featurize, flat_feature_names, flatten
from .forest import feature_importance, fit_forest, write_importance
from .labeling import ConfigError, build_samples, read_manifest, sampling_dates, write_manifest
from .nn import NumericalError
from .persist import ModelFormatError, save_model
from .pipeline import cross_validate
from .plot import roc_svg
from .synth import export, generate, read_profiles

log = logging.getLogger("churnlab")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class DataError(Exception):
    """Missing, malformed or stale input artifact."""


class UsageError(Exception):
    pass


# artifact bookkeeping ----------------------------------------------------

def _meta_path(path: Path) -> Path:
    return path.with_name(path.name + ".meta.json")


def stamp(path: Path, stage: str, config_hash: str, **extra) -> None:
    meta = {"stage": stage, "config_hash": config_hash, "churnlab": __version__, **extra}
    _meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def require(path: Path, stage: str, expected: str) -> dict:
    """Check that ``path`` exists and was produced for the expected config."""
    if not path.exists():
        raise DataError(f"missing input {path}; run `churnlab {stage}` first")
    meta_path = _meta_path(path)
    if not meta_path.exists():
        raise DataError(f"{path} has no {meta_path.name} sidecar; regenerate it with `churnlab {stage}`")
    meta = json.loads(meta_path.read_text())
    if meta.get("stage") != stage or meta.get("config_hash") != expected:
        raise DataError(
            f"{path} was produced under config hash {meta.get('config_hash')} but the current config "
            f"expects {expected}; rerun `churnlab {stage}` with this config"
        )
    return meta


class Workspace:
    """Paths and hashes for one (config, output directory) pair."""

    def __init__(self, cfg: ExperimentConfig, out: Path):
        self.cfg = cfg
        self.out = out
        self._hashes: dict[str, str] | None = None

    @property
    def events(self) -> Path:
        return Path(self.cfg.events) if self.cfg.events else self.out / "events.csv"

    @property
    def profiles(self) -> Path:
        return Path(self.cfg.profiles) if self.cfg.profiles else self.out / "profiles.csv"

    samples = property(lambda self: self.out / "samples.csv")
    dataset = property(lambda self: self.out / "dataset.npz")
    importance = property(lambda self: self.out / "importance.csv")

    def model(self, arch: ArchitectureId) -> Path:
        return self.out / "models" / f"{arch.value}.model"

    def metrics(self, arch: ArchitectureId) -> Path:
        return self.out / "metrics" / f"{arch.value}.json"

    def roc(self, arch: ArchitectureId) -> Path:
        return self.out / "roc" / f"{arch.value}.csv"

    @property
    def hashes(self) -> dict[str, str]:
        if self._hashes is None:
            ext = None
            if self.cfg.events is not None:
                if not self.events.exists():
                    raise DataError(f"event log {self.events} not found")
                ext = file_digest(self.events)
            self._hashes = self.cfg.stage_hashes(ext)
        return self._hashes


# pipeline stages ---------------------------------------------------------

def _load_log(ws: Workspace) -> EventLog:
    if ws.cfg.events is None:
        require(ws.events, "synth", ws.hashes["synth"])
    elif not ws.events.exists():
        raise DataError(f"event log {ws.events} not found")
    try:
        res = ingest(ws.events)
    except (OSError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    if res.rejected:
        for lineno, reason in res.rejected[:10]:
            log.warning("%s:%d rejected: %s", ws.events, lineno, reason)
        log.warning("%d malformed row(s) skipped", len(res.rejected))
    return res.log


def _horizon(ws: Workspace, log_: EventLog) -> int:
    if ws.cfg.events is None:
        return ws.cfg.synth.day_span
    return int(log_.day.max()) + 1 if log_.day.size else 0


def cmd_synth(ws: Workspace) -> None:
    if ws.cfg.events is not None:
        raise UsageError("config names an external event log; there is nothing to generate")
    log_, profiles = generate(ws.cfg.synth)
    events, prof = export(log_, profiles, ws.out)
    h = ws.hashes["synth"]
    stamp(events, "synth", h)
    stamp(prof, "synth", h)
    print(f"wrote {len(log_)} events for {len(log_.player_ids)} players to {events}")


def cmd_label(ws: Workspace) -> None:
    log_ = _load_log(ws)
    cfg = ws.cfg
    horizon = _horizon(ws, log_)
    dates = sampling_dates(cfg.sampling_start(horizon), cfg.churn)
    samples = build_samples(log_, dates, cfg.churn, horizon)
    write_manifest(samples, ws.samples)
    stamp(ws.samples, "label", ws.hashes["label"], sampling_dates=dates, horizon=horizon)
    churners = sum(s.label.value == "churner" for s in samples)
    rate = churners / len(samples) if samples else 0.0
    print(f"wrote {len(samples)} samples ({rate:.1%} churners) to {ws.samples}")


def cmd_featurize(ws: Workspace) -> None:
    require(ws.samples, "label", ws.hashes["label"])
    log_ = _load_log(ws)
    if ws.cfg.events is None:
        require(ws.profiles, "synth", ws.hashes["synth"])
    try:
        profiles = read_profiles(ws.profiles)
        samples = read_manifest(ws.samples)
        data = featurize(log_, profiles, samples, ws.cfg.churn, ws.cfg.lookback_days)
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    h = ws.hashes["featurize"]
    data.save(ws.dataset, {"config_hash": h})
    stamp(ws.dataset, "featurize", h)
    print(f"wrote {len(data)} x ({data.temporal.shape[1]}x{data.temporal.shape[2]} + {data.aggregate.shape[1]}) features to {ws.dataset}")


def _load_dataset(ws: Workspace) -> Dataset:
    require(ws.dataset, "featurize", ws.hashes["featurize"])
    try:
        return Dataset.load(ws.dataset)
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(str(exc)) from exc


def cmd_train(ws: Workspace, archs: Sequence[ArchitectureId]) -> None:
    data = _load_dataset(ws)
    h = ws.hashes["train"]
    (ws.out / "models").mkdir(parents=True, exist_ok=True)
    trained: dict[ArchitectureId, TrainedModel] = {}
    for arch in archs:
        stage1 = trained.get(ArchitectureId.BASELINE_LSTM) if arch is ArchitectureId.LSTM_PREDICT_AGGREGATED else None
        model = train_architecture(arch, data, ws.cfg.train, ws.cfg.forest, stage1=stage1)
        trained[arch] = model
        path = save_model(model, ws.model(arch), h)
        stamp(path, "train", h)
        print(f"wrote {path}")


def cmd_eval(ws: Workspace, archs: Sequence[ArchitectureId]) -> bool:
    """Returns False when some fold failed numerically."""
    data = _load_dataset(ws)
    cfg = ws.cfg
    h = ws.hashes["eval"]
    for sub in ("metrics", "roc"):
        (ws.out / sub).mkdir(parents=True, exist_ok=True)
    summaries: dict[ArchitectureId, MetricSummary] = {}
    ok = True
    for arch, res in cross_validate(data, cfg, archs).items():
        summaries[arch] = res.summary
        ok &= res.summary.complete
        doc = {"config_hash": h, "config": cfg.to_dict(), **res.summary.to_dict()}
        dump_json(doc, ws.metrics(arch))
        stamp(ws.metrics(arch), "eval", h)
        scored = ~np.isnan(res.scores)
        if scored.any() and 0 < data.label[scored].sum() < scored.sum():
            write_roc_csv(roc_curve(res.scores[scored], data.label[scored]), ws.roc(arch))
            stamp(ws.roc(arch), "eval", h)
    table = format_table([summaries[a] for a in archs])
    (ws.out / "metrics" / "table.txt").write_text(table)
    print(table, end="")
    return ok


def cmd_importance(ws: Workspace) -> None:
    data = _load_dataset(ws)
    forest = fit_forest(flatten(data.temporal), data.label, ws.cfg.forest)
    ranked = feature_importance(forest, flat_feature_names(data.observation_days))
    write_importance(ranked, ws.importance)
    stamp(ws.importance, "importance", ws.hashes["train"])
    for r, (name, imp) in enumerate(ranked[:10], start=1):
        print(f"{r:3d}  {name:<40s} {imp:.4f}")


def cmd_report(paths: Sequence[Path], out: Path, svg: Path | None, expected: str | None) -> None:
    if not paths:
        order = {a.value: i for i, a in enumerate(ArchitectureId)}
        found = [p for p in (out / "metrics").glob("*.json") if not p.name.endswith(".meta.json")]
        paths = sorted(found, key=lambda p: (order.get(p.stem, len(order)), p.name))
    if not paths:
        raise DataError(f"no metrics files given and none found under {out / 'metrics'}")
    summaries, hashes, curves = [], set(), {}
    for p in paths:
        try:
            doc = json.loads(Path(p).read_text())
            s = MetricSummary.from_dict(doc)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"{p}: not a metrics file ({exc})") from exc
        if expected is not None and doc.get("config_hash") != expected:
            raise DataError(f"{p} was produced under config hash {doc.get('config_hash')}, expected {expected}")
        hashes.add(doc.get("config_hash"))
        summaries.append(s)
        roc = Path(p).parent.parent / "roc" / f"{s.arch}.csv"
        if roc.exists():
            curves[s.arch] = read_roc_csv(roc)
    if len(hashes) > 1:
        raise DataError(f"metrics files come from different configs: {sorted(map(str, hashes))}")
    table = format_table(summaries)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(table)
    print(table, end="")
    if svg is not None:
        if not curves:
            raise DataError("no ROC CSVs found next to the metrics files")
        names = {}
        for arch in curves:
            try:
                names[arch] = ArchitectureId(arch).display_name
            except ValueError:
                names[arch] = arch
        svg.write_text(roc_svg({names[a]: c for a, c in curves.items()}))
        print(f"wrote {svg}")


# argument handling -------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _arch_list(text: str) -> list[ArchitectureId]:
    out = []
    for part in text.split(","):
        try:
            out.append(ArchitectureId(part.strip()))
        except ValueError:
            raise argparse.ArgumentTypeError(
                f"unknown architecture {part!r}; choose from {', '.join(a.value for a in ArchitectureId)}"
            ) from None
    return out


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must lie in [0, 2**64)")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=_u64, help="master seed, overrides the config")
    common.add_argument("--out", type=Path, default=Path("churnlab-out"), help="artifact directory")
    common.add_argument("--arch", type=_arch_list, action="extend",
                        help="architecture id(s), comma separated or repeated; default: all in the config")
    common.add_argument("--folds", type=int, help="cross-validation folds, overrides the config")
    common.add_argument("--cohort", choices=("converted",), help="score only this cohort's test samples")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = _Parser(prog="churnlab", description="Churn prediction experiments on player telemetry.")
    parser.add_argument("--version", action="version", version=f"churnlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("synth", parents=[common], help="generate a synthetic event log and profiles")
    sub.add_parser("label", parents=[common], help="label (player, sampling date) pairs")
    sub.add_parser("featurize", parents=[common], help="build temporal and aggregate features")
    sub.add_parser("train", parents=[common], help="train architectures on the full dataset")
    sub.add_parser("eval", parents=[common], help="cross-validate architectures")
    sub.add_parser("importance", parents=[common], help="random-forest feature importance")
    rep = sub.add_parser("report", parents=[common], help="tabulate metrics files")
    rep.add_argument("metrics", nargs="*", type=Path, help="metrics JSON files (default: <out>/metrics/*.json)")
    rep.add_argument("--svg", type=Path, help="also draw the ROC curves to this SVG file")
    return parser


def _experiment(args) -> ExperimentConfig:
    if args.config is not None and not args.config.is_file():
        raise UsageError(f"config file {args.config} not found")
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    overrides = {"seed": args.seed, "folds": args.folds, "cohort": args.cohort}
    return cfg.with_overrides(**overrides)


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _experiment(args)
        archs = args.arch or [ArchitectureId(a) for a in cfg.architectures]
        archs = list(dict.fromkeys(archs))
        args.out.mkdir(parents=True, exist_ok=True)
        ws = Workspace(cfg, args.out)
        cmd = args.command
        if cmd == "synth":
            cmd_synth(ws)
        elif cmd == "label":
            cmd_label(ws)
        elif cmd == "featurize":
            cmd_featurize(ws)
        elif cmd == "train":
            cmd_train(ws, archs)
        elif cmd == "eval":
            if not cmd_eval(ws, archs):
                print("some folds failed numerically; see the metrics files", file=sys.stderr)
                return EXIT_NUMERIC
        elif cmd == "importance":
            cmd_importance(ws)
        elif cmd == "report":
            expected = ws.hashes["eval"] if args.config else None
            cmd_report(args.metrics, args.out, args.svg, expected)
    except (UsageError, ConfigError) as exc:
        print(f"churnlab: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ModelFormatError, FileNotFoundError) as exc:
        print(f"churnlab: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"churnlab: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"churnlab: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main_entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_entry()
