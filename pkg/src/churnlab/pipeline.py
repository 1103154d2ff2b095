"""In-memory pipeline helpers shared by the CLI and library callers."""

from __future__ import annotations

from typing import Sequence

from .architectures import ArchitectureId
from .config import ExperimentConfig
from .evaluation import CvResult, run_cv, stratified_kfold
from .features import Dataset, featurize
from .labeling import build_samples, sampling_dates
from .synth import generate


def synthetic_dataset(cfg: ExperimentConfig) -> Dataset:
    """Generate, label and featurize the configured synthetic population."""
    log_, profiles = generate(cfg.synth)
    horizon = cfg.synth.day_span
    dates = sampling_dates(cfg.sampling_start(horizon), cfg.churn)
    samples = build_samples(log_, dates, cfg.churn, horizon)
    return featurize(log_, {p.player_id: p for p in profiles}, samples, cfg.churn, cfg.lookback_days)


def cross_validate(data: Dataset, cfg: ExperimentConfig, archs: Sequence[ArchitectureId | str]) -> dict[ArchitectureId, CvResult]:
    """Cross-validate each architecture on one shared fold plan.

    When both ``lstm`` and ``lstm-pred-agg`` are requested, the per-fold
    baseline LSTMs are reused as the frozen first stage of the latter.
    """
    archs = [ArchitectureId(a) for a in archs]
    plan = stratified_kfold(data.label, cfg.folds, cfg.seed)
    order = sorted(archs, key=lambda a: a is ArchitectureId.LSTM_PREDICT_AGGREGATED)
    lstm_folds = None
    results: dict[ArchitectureId, CvResult] = {}
    for arch in order:
        reuse = lstm_folds if arch is ArchitectureId.LSTM_PREDICT_AGGREGATED else None
        res = run_cv(data, arch, cfg.train, plan, cfg.cohort, cfg.forest, cfg.uncertainty,
                     stage1=reuse, keep_models=arch is ArchitectureId.BASELINE_LSTM)
        if arch is ArchitectureId.BASELINE_LSTM and all(m is not None for m in res.models):
            lstm_folds = res.models
        res.models = [] if arch is ArchitectureId.BASELINE_LSTM else res.models
        results[arch] = res
    return {a: results[a] for a in archs}
