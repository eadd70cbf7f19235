"""Dataset representation, ingestion, masking, fold splitting and discretized features.

Times are stored normalized to ``[0, 1]`` over the dataset window; values are
stored raw until :func:`standardize` applies training-split channel statistics.
"""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SCHEMA_VERSION = 1
TASKS = ("classification", "regression")


class DatasetError(ValueError):
    """Raised for malformed dataset files or invalid samples."""


@dataclass(frozen=True)
class TimeChannel:
    index: int
    t: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64).reshape(-1)
        x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        if t.shape != x.shape:
            raise DatasetError(f"channel {self.index}: mismatched lengths {t.size} != {x.size}")
        if t.size and (np.any(np.diff(t) <= 0)):
            raise DatasetError(f"channel {self.index}: non-monotone times")
        if t.size and (t[0] < 0.0 or t[-1] > 1.0):
            raise DatasetError(f"channel {self.index}: times outside [0, 1]")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x))):
            raise DatasetError(f"channel {self.index}: non-finite entries")
        t.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)

    def __len__(self):
        return self.t.size


@dataclass(frozen=True)
class Sample:
    id: str
    channels: tuple[TimeChannel, ...]
    y: float

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        for d, ch in enumerate(self.channels):
            if ch.index != d:
                raise DatasetError(f"sample {self.id}: channel {d} carries index {ch.index}")
        if not any(len(ch) for ch in self.channels):
            raise DatasetError(f"sample {self.id}: all channels empty")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def replace_values(self, values: Sequence[np.ndarray]) -> "Sample":
        chans = tuple(TimeChannel(ch.index, ch.t, v) for ch, v in zip(self.channels, values))
        return Sample(self.id, chans, self.y)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    channel_names: tuple[str, ...]
    task: str
    window_hours: float = 48.0

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if self.task not in TASKS:
            raise DatasetError(f"unknown task {self.task!r}")
        D = len(self.channel_names)
        for s in self.samples:
            if s.n_channels != D:
                raise DatasetError(f"sample {s.id}: {s.n_channels} channels, expected {D}")

    def __len__(self):
        return len(self.samples)

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    @property
    def targets(self) -> np.ndarray:
        return np.array([s.y for s in self.samples], dtype=np.float64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.samples[i] for i in indices), self.channel_names,
                       self.task, self.window_hours)

    def with_samples(self, samples: Sequence[Sample]) -> "Dataset":
        return Dataset(tuple(samples), self.channel_names, self.task, self.window_hours)


@dataclass(frozen=True)
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray
    degenerate: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "degenerate": [bool(v) for v in self.degenerate]}

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelStats":
        return cls(np.asarray(d["mean"], dtype=np.float64), np.asarray(d["std"], dtype=np.float64),
                   np.asarray(d["degenerate"], dtype=bool))


@dataclass(frozen=True)
class ReferenceGrid:
    points: np.ndarray

    @classmethod
    def evenly_spaced(cls, T: int) -> "ReferenceGrid":
        if T < 2:
            raise ValueError("reference grid needs T >= 2")
        return cls(np.linspace(0.0, 1.0, T))

    def __len__(self):
        return self.points.size


@dataclass(frozen=True)
class UnionGrid:
    union_times: np.ndarray
    values: np.ndarray  # (D, U), zeros where unobserved
    mask: np.ndarray  # (D, U), 1 where observed


@dataclass(frozen=True)
class MaskAssignment:
    held_out: tuple[np.ndarray, ...]
    fraction: float
    seed: int

    @property
    def n_held_out(self) -> int:
        return sum(h.size for h in self.held_out)

    @classmethod
    def empty(cls, s: Sample) -> "MaskAssignment":
        return cls(tuple(np.zeros(0, dtype=np.int64) for _ in s.channels), 0.0, 0)


@dataclass(frozen=True)
class Fold:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


@dataclass(frozen=True)
class DiscretizedFeatures:
    values: np.ndarray  # (D, B)
    mask: np.ndarray  # (D, B)
    intervals: np.ndarray  # (D, B), bin-width units


# ----------------------------------------------------------------------------
# I/O
# ----------------------------------------------------------------------------

def _require(obj: dict, key: str, lineno: int):
    if key not in obj:
        raise DatasetError(f"line {lineno}: missing field {key!r}")
    return obj[key]


def load_dataset(path: str | Path) -> Dataset:
    """Read a JSON-Lines dataset file.

    The first line is a header ``{"schema": 1, "channels": [...], "task": ...,
    "window_hours": ...}``; each following line is one sample with times in
    hours. Times are rescaled to ``[0, 1]``; regression targets (days) are
    stored as log-days.
    """
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        lines = [ln for ln in fh.read().splitlines()]
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append((lineno, json.loads(line)))
        except json.JSONDecodeError as exc:
            raise DatasetError(f"line {lineno}: parse error: {exc.msg}") from None
    if not records:
        raise DatasetError("empty dataset")
    lineno, header = records[0]
    if not isinstance(header, dict) or "schema" not in header:
        raise DatasetError(f"line {lineno}: missing dataset header")
    if header["schema"] != SCHEMA_VERSION:
        raise DatasetError(f"line {lineno}: unsupported schema {header['schema']!r}")
    names = [str(c) for c in _require(header, "channels", lineno)]
    task = _require(header, "task", lineno)
    if task not in TASKS:
        raise DatasetError(f"line {lineno}: unknown task {task!r}")
    window = float(header.get("window_hours", 48.0))
    if not window > 0:
        raise DatasetError(f"line {lineno}: window_hours must be positive")
    index = {n: d for d, n in enumerate(names)}

    samples = []
    for lineno, rec in records[1:]:
        if not isinstance(rec, dict):
            raise DatasetError(f"line {lineno}: sample must be an object")
        sid = str(_require(rec, "id", lineno))
        if task == "classification":
            y = float(_require(rec, "label", lineno))
            if y != int(y) or y < 0:
                raise DatasetError(f"line {lineno}: label must be a non-negative integer")
        else:
            days = float(_require(rec, "target", lineno))
            if not days > 0:
                raise DatasetError(f"line {lineno}: target must be positive days")
            y = math.log(days)
        ts: list = [np.zeros(0)] * len(names)
        xs: list = [np.zeros(0)] * len(names)
        for ch in _require(rec, "channels", lineno):
            name = str(_require(ch, "name", lineno))
            if name not in index:
                raise DatasetError(f"line {lineno}: unknown channel {name!r}")
            t = np.asarray(_require(ch, "t", lineno), dtype=np.float64)
            x = np.asarray(_require(ch, "x", lineno), dtype=np.float64)
            if t.shape != x.shape:
                raise DatasetError(f"line {lineno}: channel {name}: mismatched lengths")
            if t.size and np.any(np.diff(t) <= 0):
                raise DatasetError(f"line {lineno}: channel {name}: non-monotone times")
            if t.size and (t[0] < 0 or t[-1] > window):
                raise DatasetError(f"line {lineno}: channel {name}: times outside window")
            ts[index[name]] = t / window
            xs[index[name]] = x
        try:
            chans = tuple(TimeChannel(d, ts[d], xs[d]) for d in range(len(names)))
            samples.append(Sample(sid, chans, y))
        except DatasetError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
    if not samples:
        raise DatasetError("empty dataset")
    return Dataset(tuple(samples), tuple(names), task, window)


def _fmt(v: float) -> str:
    return repr(float(v))


def dump_dataset(ds: Dataset) -> str:
    """Serialize to the JSON-Lines format read by :func:`load_dataset`."""
    header = {"schema": SCHEMA_VERSION, "channels": list(ds.channel_names),
              "task": ds.task, "window_hours": ds.window_hours}
    out = [json.dumps(header)]
    w = ds.window_hours
    for s in ds.samples:
        chans = []
        for name, ch in zip(ds.channel_names, s.channels):
            t = ",".join(_fmt(v * w) for v in ch.t)
            x = ",".join(_fmt(v) for v in ch.x)
            chans.append(f'{{"name": {json.dumps(name)}, "t": [{t}], "x": [{x}]}}')
        if ds.task == "classification":
            target = f'"label": {int(s.y)}'
        else:
            target = f'"target": {_fmt(math.exp(s.y))}'
        out.append(f'{{"id": {json.dumps(s.id)}, {target}, "channels": [{", ".join(chans)}]}}')
    return "\n".join(out) + "\n"


def save_dataset(ds: Dataset, path: str | Path) -> None:
    Path(path).write_text(dump_dataset(ds), encoding="utf-8")


# ----------------------------------------------------------------------------
# Statistics and normalization
# ----------------------------------------------------------------------------

def global_channel_stats(train: Dataset) -> ChannelStats:
    if len(train) == 0:
        raise DatasetError("training split is empty")
    D = train.n_channels
    mean = np.zeros(D)
    std = np.ones(D)
    degenerate = np.zeros(D, dtype=bool)
    for d in range(D):
        vals = np.concatenate([s.channels[d].x for s in train.samples])
        if vals.size == 0:
            degenerate[d] = True
            continue
        mean[d] = vals.mean()
        sd = vals.std()
        if not sd > 0:
            degenerate[d] = True
        else:
            std[d] = sd
    return ChannelStats(mean, std, degenerate)


def standardize(s: Sample, stats: ChannelStats) -> Sample:
    """Z-score every channel with training-split statistics."""
    return s.replace_values([(ch.x - stats.mean[d]) / stats.std[d]
                             for d, ch in enumerate(s.channels)])


def impute_empty_channels(s: Sample, stats: ChannelStats, zscored: bool = True) -> Sample:
    """Give every empty channel a single t=0 observation at the channel's global mean.

    With ``zscored`` the global mean is 0 in standardized units.
    """
    if all(len(ch) for ch in s.channels):
        return s
    chans = []
    for d, ch in enumerate(s.channels):
        if len(ch):
            chans.append(ch)
        else:
            fill = 0.0 if zscored else float(stats.mean[d])
            chans.append(TimeChannel(d, np.array([0.0]), np.array([fill])))
    return Sample(s.id, tuple(chans), s.y)


def prepare(ds: Dataset, stats: ChannelStats) -> Dataset:
    """Standardize and impute every sample: the model-ready view of a dataset."""
    return ds.with_samples([impute_empty_channels(standardize(s, stats), stats) for s in ds.samples])


# ----------------------------------------------------------------------------
# Union representation
# ----------------------------------------------------------------------------

def to_union_grid(s: Sample) -> UnionGrid:
    union = np.unique(np.concatenate([ch.t for ch in s.channels]))
    D, U = s.n_channels, union.size
    values = np.zeros((D, U))
    mask = np.zeros((D, U))
    for d, ch in enumerate(s.channels):
        pos = np.searchsorted(union, ch.t)
        values[d, pos] = ch.x
        mask[d, pos] = 1.0
    return UnionGrid(union, values, mask)


def from_union_grid(g: UnionGrid, sample_id: str = "", y: float = 0.0) -> Sample:
    chans = []
    for d in range(g.mask.shape[0]):
        sel = g.mask[d] > 0
        chans.append(TimeChannel(d, g.union_times[sel], g.values[d, sel]))
    return Sample(sample_id, tuple(chans), y)


# ----------------------------------------------------------------------------
# Randomized operations
# ----------------------------------------------------------------------------

def held_out_count(L: int, fraction: float) -> int:
    if L <= 1:
        return 0
    return min(int(math.floor(fraction * L + 0.5)), L - 1)


def sample_mask(s: Sample, fraction: float, seed: int) -> MaskAssignment:
    """Hold out ``round(fraction * L_d)`` observations per channel, uniformly at random."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"mask fraction must lie in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    held = []
    for ch in s.channels:
        k = held_out_count(len(ch), fraction)
        idx = np.sort(rng.choice(len(ch), size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
        held.append(idx.astype(np.int64))
    return MaskAssignment(tuple(held), fraction, seed)


def visible_part(s: Sample, mask: MaskAssignment) -> Sample:
    """The sample with held-out observations removed."""
    chans = []
    for ch, h in zip(s.channels, mask.held_out):
        keep = np.ones(len(ch), dtype=bool)
        keep[h] = False
        chans.append(TimeChannel(ch.index, ch.t[keep], ch.x[keep]))
    return Sample(s.id, tuple(chans), s.y)


def sparsify(ds: Dataset, keep_fraction: float, seed: int) -> Dataset:
    """Randomly keep ``round(keep_fraction * L_d)`` observations per channel (at least one).

    Turns densely sampled series into sparse irregular ones. Each sample
    draws from its own stream so the result does not depend on dataset order.
    """
    if not 0.0 < keep_fraction <= 1.0:
        raise ValueError("keep_fraction must lie in (0, 1]")
    out = []
    for s in ds.samples:
        rng = np.random.default_rng([seed, zlib.crc32(s.id.encode("utf-8"))])
        chans = []
        for ch in s.channels:
            L = len(ch)
            k = max(1, int(math.floor(keep_fraction * L + 0.5))) if L else 0
            idx = np.sort(rng.choice(L, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
            chans.append(TimeChannel(ch.index, ch.t[idx], ch.x[idx]))
        out.append(Sample(s.id, tuple(chans), s.y))
    return ds.with_samples(out)


def _stratified_take(idx: np.ndarray, labels: np.ndarray | None, fraction: float,
                     rng: np.random.Generator) -> np.ndarray:
    if labels is None:
        groups = [idx]
    else:
        groups = [idx[labels[idx] == c] for c in np.unique(labels[idx])]
    taken = []
    for g in groups:
        if g.size < 2:
            continue
        k = max(1, int(math.floor(fraction * g.size + 0.5)))
        taken.append(rng.permutation(g)[:k])
    return np.sort(np.concatenate(taken)) if taken else np.zeros(0, dtype=np.int64)


def split_kfold(ds: Dataset, k: int, seed: int, val_fraction: float = 0.15) -> list[Fold]:
    """k-fold partition with a validation subset carved from the training folds.

    Classification folds are stratified: samples are ordered class by class
    (shuffled within class) and dealt round-robin, so per-fold class counts
    and fold sizes each differ by at most one.
    """
    N = len(ds)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > N:
        raise ValueError(f"k={k} exceeds dataset size {N}")
    rng = np.random.default_rng(seed)
    labels = ds.targets if ds.task == "classification" else None
    if labels is None:
        order = rng.permutation(N)
    else:
        order = np.concatenate([rng.permutation(np.flatnonzero(labels == c))
                                for c in np.unique(labels)])
    assign = np.empty(N, dtype=np.int64)
    assign[order] = np.arange(N) % k
    folds = []
    for i in range(k):
        test = np.flatnonzero(assign == i)
        rest = np.flatnonzero(assign != i)
        val = _stratified_take(rest, labels, val_fraction, rng)
        train = np.setdiff1d(rest, val)
        folds.append(Fold(train, val, test))
    return folds


def train_val_split(ds: Dataset, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Single stratified hold-out split used when no test fold is needed."""
    rng = np.random.default_rng(seed)
    labels = ds.targets if ds.task == "classification" else None
    idx = np.arange(len(ds))
    val = _stratified_take(idx, labels, val_fraction, rng)
    return np.setdiff1d(idx, val), val


# ----------------------------------------------------------------------------
# Discretized baseline features
# ----------------------------------------------------------------------------

def discretize_forward_fill(s: Sample, bins: int, stats: ChannelStats | None = None,
                            fill: str = "forward") -> DiscretizedFeatures:
    """Bin a standardized sample onto ``bins`` equal intervals of [0, 1].

    Occupied bins hold the mean of their observations. Empty bins are filled
    with the last observed value (``fill="forward"``) or with the channel
    global mean (``fill="mean"``); bins before the first observation always
    take the global mean, which is 0 after standardization. ``stats`` is only
    consulted for channel count consistency and may be omitted.
    """
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if fill not in ("forward", "mean"):
        raise ValueError(f"unknown fill {fill!r}")
    D = s.n_channels
    if stats is not None and stats.mean.size != D:
        raise ValueError("channel statistics do not match the sample")
    values = np.zeros((D, bins))
    mask = np.zeros((D, bins))
    intervals = np.zeros((D, bins))
    for d, ch in enumerate(s.channels):
        if len(ch):
            b = np.minimum((ch.t * bins).astype(np.int64), bins - 1)
            sums = np.bincount(b, weights=ch.x, minlength=bins)
            counts = np.bincount(b, minlength=bins)
            hit = counts > 0
            values[d, hit] = sums[hit] / counts[hit]
            mask[d, hit] = 1.0
        last = 0.0
        for j in range(bins):
            if mask[d, j]:
                last = values[d, j]
            elif fill == "forward":
                values[d, j] = last
            if j > 0:
                intervals[d, j] = 1.0 if mask[d, j - 1] else 1.0 + intervals[d, j - 1]
    return DiscretizedFeatures(values, mask, intervals)
