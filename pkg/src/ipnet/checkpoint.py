"""JSON checkpoints with exact float round-trip.

Arrays are stored as flat lists with explicit shapes; floats are written with
17 significant digits so every 64-bit value reloads bit-for-bit.
"""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .data import ChannelStats
from .model import Model, ModelConfig
from .training import Checkpoint, TrainConfig

SCHEMA_VERSION = 1


class CheckpointError(ValueError):
    pass


def _encode(obj) -> str:
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            raise CheckpointError(f"cannot serialize non-finite value {v}")
        return format(v, ".17g")
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode({"shape": list(obj.shape), "data": [float(v) for v in obj.reshape(-1)]})
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise CheckpointError(f"cannot serialize {type(obj).__name__}")


def _array(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=np.float64).reshape(d["shape"])


def dumps(ckpt: Checkpoint) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "model_config": ckpt.model.config.to_dict(),
        "train_config": ckpt.config.to_dict(),
        "channel_names": list(ckpt.channel_names),
        "channel_stats": {"mean": ckpt.stats.mean, "std": ckpt.stats.std,
                          "degenerate": [bool(v) for v in ckpt.stats.degenerate]},
        "best_val": ckpt.best_val,
        "best_epoch": ckpt.best_epoch,
        "history": ckpt.history,
        "params": dict(ckpt.model.params),
    }
    return _encode(doc) + "\n"


def loads(text: str) -> Checkpoint:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc.msg}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise CheckpointError(f"unsupported checkpoint schema {doc.get('schema_version')!r}")
    try:
        mcfg = ModelConfig.from_dict(doc["model_config"])
        tcfg = TrainConfig.from_dict(doc["train_config"])
        params = {k: _array(v) for k, v in doc["params"].items()}
        st = doc["channel_stats"]
        stats = ChannelStats(_array(st["mean"]), _array(st["std"]),
                             np.asarray(st["degenerate"], dtype=bool))
        return Checkpoint(Model(mcfg, params), stats, tcfg, tuple(doc["channel_names"]),
                          float(doc["best_val"]), int(doc["best_epoch"]), doc.get("history", []))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"malformed checkpoint: {exc}") from None


def save(ckpt: Checkpoint, path: str | Path) -> None:
    Path(path).write_text(dumps(ckpt), encoding="utf-8")


def load(path: str | Path) -> Checkpoint:
    return loads(Path(path).read_text(encoding="utf-8"))
