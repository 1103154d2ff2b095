"""The seven classifiers compared in the study and their training recipes.

=====================  ======================================================
id                     wiring
=====================  ======================================================
rf                     random forest on the flattened 140-vector
ann                    flattened 140-vector -> Dense(64, relu) -> Dense(1, sigmoid)
lstm                   temporal -> LSTM(16) -> Dense(1, sigmoid)
lstm-agg               [LSTM(16) state, aggregates] -> Dense(1, sigmoid)
lstm-pred-agg          [frozen LSTM probability, aggregates] -> Dense(1, sigmoid)
lstm-hidden            aggregates -> 2 x Dense(16, linear) -> LSTM (h0, c0) -> Dense(1, sigmoid)
static-in-lstm         [temporal row, aggregates] per step -> LSTM(16) -> Dense(1, sigmoid)
=====================  ======================================================
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .features import Dataset, Scaler, apply_scaler, fit_scaler, flatten
from .forest import ForestConfig, RandomForest, fit_forest
from .nn import LSTM, Dense, TrainConfig, train


class ArchitectureId(str, enum.Enum):
    BASELINE_RF = "rf"
    BASELINE_ANN = "ann"
    BASELINE_LSTM = "lstm"
    LSTM_AGGREGATED = "lstm-agg"
    LSTM_PREDICT_AGGREGATED = "lstm-pred-agg"
    LSTM_HIDDEN_STATE = "lstm-hidden"
    STATIC_IN_LSTM = "static-in-lstm"

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self]

    @property
    def is_hybrid(self) -> bool:
        return self in HYBRIDS


DISPLAY_NAMES = {
    ArchitectureId.BASELINE_RF: "Baseline RF",
    ArchitectureId.BASELINE_ANN: "Baseline ANN",
    ArchitectureId.BASELINE_LSTM: "Baseline LSTM",
    ArchitectureId.LSTM_AGGREGATED: "LSTM + Aggregated",
    ArchitectureId.LSTM_PREDICT_AGGREGATED: "LSTM Predict + Aggr.",
    ArchitectureId.LSTM_HIDDEN_STATE: "LSTM Hidden State",
    ArchitectureId.STATIC_IN_LSTM: "Static in LSTM",
}
HYBRIDS = (
    ArchitectureId.LSTM_AGGREGATED,
    ArchitectureId.LSTM_PREDICT_AGGREGATED,
    ArchitectureId.LSTM_HIDDEN_STATE,
    ArchitectureId.STATIC_IN_LSTM,
)


@dataclass(frozen=True)
class Dims:
    n_t: int = 14
    n_f: int = 10
    n_agg: int = 36
    units: int = 16
    ann_hidden: int = 64


@dataclass
class Batch:
    """Row-indexable pair of model inputs."""

    temporal: np.ndarray
    aggregate: np.ndarray

    def __len__(self) -> int:
        return len(self.temporal)

    def __getitem__(self, idx) -> "Batch":
        return Batch(self.temporal[idx], self.aggregate[idx])

    @classmethod
    def of(cls, data: Dataset) -> "Batch":
        return cls(data.temporal, data.aggregate)


class NeuralModel:
    """Base class: owns named layers and exposes a flat parameter dict."""

    arch: ArchitectureId

    def __init__(self, dims: Dims):
        self.dims = dims
        self.layers: dict[str, Dense | LSTM] = {}

    def params(self) -> dict[str, np.ndarray]:
        return {f"{name}.{k}": v for name, layer in self.layers.items() for k, v in layer.params.items()}

    def trainable_params(self) -> dict[str, np.ndarray]:
        return self.params()

    def parameter_count(self) -> int:
        return sum(v.size for v in self.params().values())

    def load_params(self, values: Mapping[str, np.ndarray]) -> None:
        own = self.params()
        if set(own) != set(values):
            raise ValueError(f"parameter names differ: {sorted(set(own) ^ set(values))}")
        for k, v in own.items():
            if v.shape != np.shape(values[k]):
                raise ValueError(f"{k}: expected shape {v.shape}, got {np.shape(values[k])}")
            np.copyto(v, values[k])

    def _check(self, batch: Batch) -> None:
        d = self.dims
        if batch.temporal.ndim != 3 or batch.temporal.shape[1:] != (d.n_t, d.n_f):
            raise ValueError(f"{self.arch.value}: temporal input must be (N, {d.n_t}, {d.n_f}), got {batch.temporal.shape}")
        if batch.aggregate.ndim != 2 or batch.aggregate.shape != (len(batch.temporal), d.n_agg):
            raise ValueError(f"{self.arch.value}: aggregate input must be (N, {d.n_agg}), got {batch.aggregate.shape}")

    def forward(self, batch: Batch, train: bool = False):
        raise NotImplementedError

    def backward(self, cache, dp: np.ndarray) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def predict_proba(self, batch: Batch, chunk: int = 4096) -> np.ndarray:
        self._check(batch)
        out = [self.forward(batch[i:i + chunk])[0] for i in range(0, len(batch), chunk)]
        return np.concatenate(out) if out else np.zeros(0)

    @staticmethod
    def _grads(prefix: str, grads: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
        return {f"{prefix}.{k}": v for k, v in grads.items()}


class BaselineANN(NeuralModel):
    arch = ArchitectureId.BASELINE_ANN

    def __init__(self, dims: Dims, rng: np.random.Generator):
        super().__init__(dims)
        self.layers["hidden"] = Dense(dims.n_t * dims.n_f, dims.ann_hidden, "relu", rng)
        self.layers["out"] = Dense(dims.ann_hidden, 1, "sigmoid", rng)

    def forward(self, batch, train=False):
        self._check(batch)
        a, c1 = self.layers["hidden"].forward(flatten(batch.temporal))
        p, c2 = self.layers["out"].forward(a)
        return p[:, 0], (c1, c2)

    def backward(self, cache, dp):
        c1, c2 = cache
        g2, da = self.layers["out"].backward(c2, dp[:, None])
        g1, _ = self.layers["hidden"].backward(c1, da)
        return {**self._grads("hidden", g1), **self._grads("out", g2)}


class BaselineLSTM(NeuralModel):
    arch = ArchitectureId.BASELINE_LSTM

    def __init__(self, dims: Dims, rng: np.random.Generator):
        super().__init__(dims)
        self.layers["lstm"] = LSTM(dims.n_f, dims.units, rng)
        self.layers["out"] = Dense(dims.units, 1, "sigmoid", rng)

    def forward(self, batch, train=False):
        self._check(batch)
        h, c1 = self.layers["lstm"].forward(batch.temporal)
        p, c2 = self.layers["out"].forward(h)
        return p[:, 0], (c1, c2)

    def backward(self, cache, dp):
        c1, c2 = cache
        g2, dh = self.layers["out"].backward(c2, dp[:, None])
        g1, _, _, _ = self.layers["lstm"].backward(c1, dh, need_dx=False)
        return {**self._grads("lstm", g1), **self._grads("out", g2)}


class LstmPlusAggregated(NeuralModel):
    """LSTM state concatenated with the aggregates.

    With ``joint=False`` only the output layer trains (LSTM features frozen).
    """

    arch = ArchitectureId.LSTM_AGGREGATED

    def __init__(self, dims: Dims, rng: np.random.Generator, joint: bool = True):
        super().__init__(dims)
        self.joint = joint
        self.layers["lstm"] = LSTM(dims.n_f, dims.units, rng)
        self.layers["out"] = Dense(dims.units + dims.n_agg, 1, "sigmoid", rng)

    def trainable_params(self):
        if self.joint:
            return self.params()
        return {k: v for k, v in self.params().items() if k.startswith("out.")}

    def forward(self, batch, train=False):
        self._check(batch)
        h, c1 = self.layers["lstm"].forward(batch.temporal)
        p, c2 = self.layers["out"].forward(np.concatenate([h, batch.aggregate], axis=1))
        return p[:, 0], (c1, c2)

    def backward(self, cache, dp):
        c1, c2 = cache
        g2, dz = self.layers["out"].backward(c2, dp[:, None])
        grads = self._grads("out", g2)
        if self.joint:
            g1, _, _, _ = self.layers["lstm"].backward(c1, dz[:, : self.dims.units], need_dx=False)
            grads.update(self._grads("lstm", g1))
        return grads


class LstmPredictPlusAggregated(NeuralModel):
    """Combiner over a separately trained baseline LSTM's probability.

    ``stage`` selects what trains: 1 = the inner baseline LSTM alone,
    2 = the combiner with the LSTM frozen, ``"joint"`` = everything
    (used only for gradient checks).
    """

    arch = ArchitectureId.LSTM_PREDICT_AGGREGATED

    def __init__(self, dims: Dims, rng: np.random.Generator):
        super().__init__(dims)
        self.base = BaselineLSTM(dims, rng)
        self.layers["combiner"] = Dense(1 + dims.n_agg, 1, "sigmoid", rng)
        self.stage: int | str = 2

    def params(self):
        return {**{f"base.{k}": v for k, v in self.base.params().items()}, **self._grads("combiner", self.layers["combiner"].params)}

    def trainable_params(self):
        if self.stage == 1:
            return {f"base.{k}": v for k, v in self.base.params().items()}
        if self.stage == 2:
            return self._grads("combiner", self.layers["combiner"].params)
        return self.params()

    def combiner_inputs(self, batch: Batch) -> np.ndarray:
        """``[LSTM probability, aggregates]`` rows fed to the combiner."""
        return np.concatenate([self.base.predict_proba(batch)[:, None], batch.aggregate], axis=1)

    def forward(self, batch, train=False):
        if self.stage == 1:
            p, cache = self.base.forward(batch, train)
            return p, (cache, None)
        self._check(batch)
        p_lstm, c1 = self.base.forward(batch, train)
        p, c2 = self.layers["combiner"].forward(np.concatenate([p_lstm[:, None], batch.aggregate], axis=1))
        return p[:, 0], (c1, c2)

    def backward(self, cache, dp):
        c1, c2 = cache
        if self.stage == 1:
            return {f"base.{k}": v for k, v in self.base.backward(c1, dp).items()}
        g2, dz = self.layers["combiner"].backward(c2, dp[:, None])
        grads = self._grads("combiner", g2)
        if self.stage == "joint":
            grads.update({f"base.{k}": v for k, v in self.base.backward(c1, dz[:, 0]).items()})
        return grads


class _CombinerView:
    """Stage-2 trainer for ``LstmPredictPlusAggregated``. The frozen LSTM's
    outputs are computed once up front instead of once per batch and epoch."""

    def __init__(self, model: LstmPredictPlusAggregated):
        self.model = model
        self.dense = model.layers["combiner"]

    def trainable_params(self):
        return self.model._grads("combiner", self.dense.params)

    def forward(self, inputs, train=False):
        p, cache = self.dense.forward(inputs)
        return p[:, 0], cache

    def backward(self, cache, dp):
        grads, _ = self.dense.backward(cache, dp[:, None])
        return self.model._grads("combiner", grads)


class LstmHiddenState(NeuralModel):
    arch = ArchitectureId.LSTM_HIDDEN_STATE

    def __init__(self, dims: Dims, rng: np.random.Generator):
        super().__init__(dims)
        self.layers["init_h"] = Dense(dims.n_agg, dims.units, "linear", rng)
        self.layers["init_c"] = Dense(dims.n_agg, dims.units, "linear", rng)
        self.layers["lstm"] = LSTM(dims.n_f, dims.units, rng)
        self.layers["out"] = Dense(dims.units, 1, "sigmoid", rng)

    def forward(self, batch, train=False):
        self._check(batch)
        h0, ch = self.layers["init_h"].forward(batch.aggregate)
        c0, cc = self.layers["init_c"].forward(batch.aggregate)
        h, cl = self.layers["lstm"].forward(batch.temporal, h0, c0)
        p, co = self.layers["out"].forward(h)
        return p[:, 0], (ch, cc, cl, co)

    def backward(self, cache, dp):
        ch, cc, cl, co = cache
        go, dh = self.layers["out"].backward(co, dp[:, None])
        gl, _, dh0, dc0 = self.layers["lstm"].backward(cl, dh, need_dx=False)
        gh, _ = self.layers["init_h"].backward(ch, dh0)
        gc, _ = self.layers["init_c"].backward(cc, dc0)
        return {
            **self._grads("init_h", gh),
            **self._grads("init_c", gc),
            **self._grads("lstm", gl),
            **self._grads("out", go),
        }


class StaticInLstm(NeuralModel):
    arch = ArchitectureId.STATIC_IN_LSTM

    def __init__(self, dims: Dims, rng: np.random.Generator):
        super().__init__(dims)
        self.layers["lstm"] = LSTM(dims.n_f + dims.n_agg, dims.units, rng)
        self.layers["out"] = Dense(dims.units, 1, "sigmoid", rng)

    def forward(self, batch, train=False):
        self._check(batch)
        n, T, _ = batch.temporal.shape
        static = np.broadcast_to(batch.aggregate[:, None, :], (n, T, self.dims.n_agg))
        h, c1 = self.layers["lstm"].forward(np.concatenate([batch.temporal, static], axis=2))
        p, c2 = self.layers["out"].forward(h)
        return p[:, 0], (c1, c2)

    def backward(self, cache, dp):
        c1, c2 = cache
        g2, dh = self.layers["out"].backward(c2, dp[:, None])
        g1, _, _, _ = self.layers["lstm"].backward(c1, dh, need_dx=False)
        return {**self._grads("lstm", g1), **self._grads("out", g2)}


NEURAL_CLASSES: dict[ArchitectureId, type[NeuralModel]] = {
    cls.arch: cls
    for cls in (BaselineANN, BaselineLSTM, LstmPlusAggregated, LstmPredictPlusAggregated, LstmHiddenState, StaticInLstm)
}


def build(arch: ArchitectureId | str, dims: Dims = Dims(), seed: int = 0, **options) -> NeuralModel:
    """Freshly initialised neural model. The random forest has no untrained
    form; use ``train_architecture`` for it."""
    arch = ArchitectureId(arch)
    if arch is ArchitectureId.BASELINE_RF:
        raise ValueError("the random forest is built by fitting; see train_architecture")
    return NEURAL_CLASSES[arch](dims, np.random.default_rng(seed), **options)


@dataclass
class TrainedModel:
    """A fitted classifier plus the preprocessing it expects.

    ``predict_proba`` takes raw (unscaled) datasets; neural models apply
    their stored scaler first.
    """

    arch: ArchitectureId
    model: NeuralModel | RandomForest
    scaler: Scaler | None = None
    history: dict = field(default_factory=dict)

    def predict_proba(self, data: Dataset) -> np.ndarray:
        if isinstance(self.model, RandomForest):
            return self.model.predict_proba(flatten(data.temporal))
        scaled = apply_scaler(self.scaler, data) if self.scaler is not None else data
        return self.model.predict_proba(Batch.of(scaled))


def train_architecture(
    arch: ArchitectureId | str,
    data: Dataset,
    cfg: TrainConfig = TrainConfig(),
    forest_cfg: ForestConfig | None = None,
    dims: Dims | None = None,
    stage1: TrainedModel | None = None,
    lstm_agg_joint: bool = True,
) -> TrainedModel:
    """Fit one architecture on raw training data.

    Neural models get a z-score scaler fitted on ``data`` only. For
    ``lstm-pred-agg`` a trained baseline LSTM may be passed as ``stage1``
    (it must have been trained on the same rows with the same config);
    otherwise one is trained here.
    """
    arch = ArchitectureId(arch)
    if arch is ArchitectureId.BASELINE_RF:
        fcfg = forest_cfg or ForestConfig(seed=cfg.seed)
        forest = fit_forest(flatten(data.temporal), data.label, fcfg)
        return TrainedModel(arch, forest)
    dims = dims or Dims(n_t=data.observation_days)
    scaler = fit_scaler(data)
    scaled = apply_scaler(scaler, data)
    batch, y = Batch.of(scaled), scaled.label
    if arch is ArchitectureId.LSTM_PREDICT_AGGREGATED:
        model = build(arch, dims, cfg.seed)
        if stage1 is None:
            stage1 = train_architecture(ArchitectureId.BASELINE_LSTM, data, cfg, dims=dims)
        elif stage1.arch is not ArchitectureId.BASELINE_LSTM:
            raise ValueError("stage1 must be a trained baseline LSTM")
        model.base.load_params(stage1.model.params())
        model.stage = 2
        hist = train(_CombinerView(model), model.combiner_inputs(batch), y, cfg)
        return TrainedModel(arch, model, scaler, {"stage1": stage1.history, "stage2": hist.to_dict()})
    options = {"joint": lstm_agg_joint} if arch is ArchitectureId.LSTM_AGGREGATED else {}
    model = build(arch, dims, cfg.seed, **options)
    if arch is ArchitectureId.LSTM_AGGREGATED and not lstm_agg_joint:
        # frozen-feature variant: reuse a trained baseline LSTM as the extractor
        if stage1 is None:
            stage1 = train_architecture(ArchitectureId.BASELINE_LSTM, data, cfg, dims=dims)
        model.layers["lstm"].W[...] = stage1.model.layers["lstm"].W
        model.layers["lstm"].U[...] = stage1.model.layers["lstm"].U
        model.layers["lstm"].b[...] = stage1.model.layers["lstm"].b
    hist = train(model, batch, y, cfg)
    return TrainedModel(arch, model, scaler, hist.to_dict())
