"""Synthetic sparse, irregularly sampled datasets with controllable label signal."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import Dataset, Sample, TimeChannel

LABEL_MODES = ("intensity", "transient", "trend", "subsample")


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``rates`` are expected observation counts per channel over the unit
    window for class 0 and class 1. In ``intensity`` mode they differ by
    class; every other mode samples both classes at ``rates[0]``.
    """

    n_samples: int = 1000
    n_channels: int = 3
    label_mode: str = "intensity"
    task: str = "classification"
    positive_fraction: float = 0.5
    rates: tuple[float, float] = (30.0, 10.0)
    noise: float = 0.1
    signal_amplitude: float = 0.3
    offset_scale: float = 1.0
    bump_amplitude: float = 3.0
    bump_width: float = 0.02
    drift: float = 1.0
    keep_fraction: float = 0.1
    dense_points: int = 945
    window_hours: float = 48.0
    channel_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if self.label_mode not in LABEL_MODES:
            raise SynthConfigError(f"unknown label_mode {self.label_mode!r}; expected one of {LABEL_MODES}")
        if self.n_channels < 1:
            raise SynthConfigError("n_channels must be >= 1")
        if self.n_samples < 1:
            raise SynthConfigError("n_samples must be >= 1")
        if len(self.rates) != 2 or min(self.rates) <= 0:
            raise SynthConfigError("rates must be two positive numbers")
        if self.task not in ("classification", "regression"):
            raise SynthConfigError(f"unknown task {self.task!r}")
        if self.task == "regression" and self.label_mode != "trend":
            raise SynthConfigError("regression targets are only defined for label_mode 'trend'")
        if not 0.0 < self.positive_fraction < 1.0:
            raise SynthConfigError("positive_fraction must lie in (0, 1)")
        if not 0.0 < self.keep_fraction <= 1.0:
            raise SynthConfigError("keep_fraction must lie in (0, 1]")
        if self.noise < 0 or self.offset_scale < 0 or self.bump_width <= 0 or self.dense_points < 2:
            raise SynthConfigError("noise must be >= 0, bump_width > 0, dense_points >= 2")
        if self.channel_names and len(self.channel_names) != self.n_channels:
            raise SynthConfigError("channel_names length must equal n_channels")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise SynthConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SynthConfigError(f"config is not valid JSON: {exc.msg}") from None
        if not isinstance(raw, dict):
            raise SynthConfigError("config must be a JSON object")
        return cls.from_dict(raw)

    def to_dict(self) -> dict:
        return asdict(self)


def _poisson_times(rng: np.random.Generator, rate: float) -> np.ndarray:
    n = rng.poisson(rate)
    return np.unique(rng.random(n))


def _background(rng: np.random.Generator, t: np.ndarray, amplitude: float,
                offset_scale: float) -> np.ndarray:
    """Random slow signal: an offset plus one low-frequency sinusoid."""
    offset = offset_scale * rng.normal()
    freq = rng.uniform(0.5, 1.5)
    phase = rng.uniform(0, 2 * np.pi)
    return offset + amplitude * np.sin(2 * np.pi * freq * t + phase)


def _template(label: int, t: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    shift = rng.uniform(-0.05, 0.05)
    scale = rng.uniform(0.8, 1.2)
    base = np.sin(2 * np.pi * (t + shift))
    if label:
        base = base + 0.8 * np.sin(6 * np.pi * (t + shift))
    return scale * base


def synthesize(config: SynthConfig, seed: int) -> Dataset:
    """Generate a dataset whose label signal lives where ``label_mode`` says.

    * ``intensity``: values are label-independent; observation rates differ by class.
    * ``transient``: class 1 adds a Gaussian bump of random location to channel 0.
    * ``trend``: the sign (classification) or size (regression) of a linear drift.
    * ``subsample``: dense class templates thinned to ``keep_fraction`` of their points.
    """
    rng = np.random.default_rng(seed)
    cfg = config
    D = cfg.n_channels
    names = cfg.channel_names or tuple(f"c{d}" for d in range(D))
    samples = []
    width = max(6, len(str(cfg.n_samples - 1)))
    for n in range(cfg.n_samples):
        label = int(rng.random() < cfg.positive_fraction)
        slope = 0.0
        if cfg.label_mode == "trend":
            if cfg.task == "regression":
                slope = rng.uniform(-cfg.drift, cfg.drift)
            else:
                slope = cfg.drift if label else -cfg.drift
        bump_at = rng.uniform(0.1, 0.9)
        chans = []
        for d in range(D):
            if cfg.label_mode == "subsample":
                dense = np.linspace(0.0, 1.0, cfg.dense_points)
                k = max(1, int(round(cfg.keep_fraction * cfg.dense_points)))
                t = np.sort(rng.choice(dense, size=k, replace=False))
                x = _template(label, t, rng) + cfg.noise * rng.normal(size=t.size)
            else:
                rate = cfg.rates[label] if cfg.label_mode == "intensity" else cfg.rates[0]
                t = _poisson_times(rng, rate)
                x = _background(rng, t, cfg.signal_amplitude, cfg.offset_scale)
                x = x + cfg.noise * rng.normal(size=t.size)
                if cfg.label_mode == "trend":
                    x = x + slope * (t - 0.5)
                if cfg.label_mode == "transient" and label and d == 0:
                    amp = cfg.bump_amplitude * cfg.noise
                    x = x + amp * np.exp(-0.5 * ((t - bump_at) / cfg.bump_width) ** 2)
            chans.append(TimeChannel(d, t, x))
        if not any(len(c) for c in chans):
            t0 = np.array([rng.random()])
            chans[0] = TimeChannel(0, t0, np.array([rng.normal()]))
        y = float(label) if cfg.task == "classification" else 1.0 + slope
        samples.append(Sample(f"s{n:0{width}d}", tuple(chans), y))
    return Dataset(tuple(samples), names, cfg.task, cfg.window_hours)
