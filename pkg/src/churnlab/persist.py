"""Binary model files.

Layout: the 8-byte magic ``CLMODEL1``, a little-endian uint64 header length,
a UTF-8 JSON header, then the raw little-endian arrays back to back in the
order the header lists them. Loading reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .architectures import ArchitectureId, Dims, LstmPlusAggregated, TrainedModel, build
from .features import Scaler
from .forest import DecisionTree, RandomForest

MAGIC = b"CLMODEL1"
_TREE_FIELDS = ("feature", "threshold", "left", "right", "value", "n_samples")


class ModelFormatError(ValueError):
    """File is not a readable model of this version."""


def _arrays_of(model: TrainedModel) -> tuple[dict, list[tuple[str, np.ndarray]]]:
    if isinstance(model.model, RandomForest):
        forest = model.model
        arrays = [("importances", forest.importances)]
        for t, tree in enumerate(forest.trees):
            arrays += [(f"tree{t}.{f}", getattr(tree, f)) for f in _TREE_FIELDS]
        return {"kind": "forest", "n_features": forest.n_features, "n_trees": len(forest.trees)}, arrays
    net = model.model
    d = net.dims
    info = {
        "kind": "neural",
        "dims": {"n_t": d.n_t, "n_f": d.n_f, "n_agg": d.n_agg, "units": d.units, "ann_hidden": d.ann_hidden},
        "options": {"joint": net.joint} if isinstance(net, LstmPlusAggregated) else {},
    }
    arrays = sorted(net.params().items())
    if model.scaler is not None:
        arrays += [(f"scaler.{k}", getattr(model.scaler, k)) for k in
                   ("temporal_mean", "temporal_std", "aggregate_mean", "aggregate_std")]
    return info, arrays


def save_model(model: TrainedModel, path: str | Path, config_hash: str | None = None) -> Path:
    info, arrays = _arrays_of(model)
    header = {
        "format": 1,
        "arch": model.arch.value,
        "config_hash": config_hash,
        "history": model.history,
        **info,
        "arrays": [],
    }
    blobs = []
    for name, arr in arrays:
        dtype = "<i8" if np.issubdtype(arr.dtype, np.integer) else "<f8"
        data = np.ascontiguousarray(arr, dtype=dtype)
        header["arrays"].append({"name": name, "dtype": dtype, "shape": list(data.shape)})
        blobs.append(data.tobytes())
    raw = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(raw)))
        fh.write(raw)
        for b in blobs:
            fh.write(b)
    return path


def read_header(path: str | Path) -> tuple[dict, bytes]:
    buf = Path(path).read_bytes()
    if buf[:8] != MAGIC:
        raise ModelFormatError(f"{path}: not a churnlab model file")
    (n,) = struct.unpack("<Q", buf[8:16])
    try:
        header = json.loads(buf[16:16 + n])
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: corrupt header") from exc
    if header.get("format") != 1:
        raise ModelFormatError(f"{path}: unsupported model format {header.get('format')!r}")
    return header, buf[16 + n:]


def load_model(path: str | Path) -> tuple[TrainedModel, dict]:
    """Returns the model and its header."""
    header, body = read_header(path)
    arrays: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        count = int(np.prod(entry["shape"], dtype=np.int64))
        end = offset + count * dtype.itemsize
        if end > len(body):
            raise ModelFormatError(f"{path}: truncated array data")
        arrays[entry["name"]] = np.frombuffer(body, dtype, count, offset).reshape(entry["shape"]).astype(dtype.newbyteorder("="))
        offset = end
    if offset != len(body):
        raise ModelFormatError(f"{path}: trailing bytes after array data")
    arch = ArchitectureId(header["arch"])
    if header["kind"] == "forest":
        trees = [DecisionTree(*(arrays[f"tree{t}.{f}"] for f in _TREE_FIELDS)) for t in range(header["n_trees"])]
        model = TrainedModel(arch, RandomForest(trees, header["n_features"], arrays["importances"]), None, header["history"])
        return model, header
    net = build(arch, Dims(**header["dims"]), 0, **header["options"])
    net.load_params({k: v for k, v in arrays.items() if not k.startswith("scaler.")})
    scaler = None
    if "scaler.temporal_mean" in arrays:
        scaler = Scaler(*(arrays[f"scaler.{k}"] for k in ("temporal_mean", "temporal_std", "aggregate_mean", "aggregate_std")))
    return TrainedModel(arch, net, scaler, header["history"]), header
