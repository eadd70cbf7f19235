"""Optimization: composite loss, Adam, per-batch mask resampling, early stopping
and finite-difference gradient verification."""
from __future__ import annotations

import logging
import math
import zlib
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Sequence

import numpy as np

from .data import (ChannelStats, Dataset, MaskAssignment, Sample, global_channel_stats,
                   prepare, sample_mask, visible_part)
from .interp import OUTPUTS, parse_channels, reconstruct_at
from .model import LossWeights, Model, ModelConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    mask_fraction: float = 0.2
    patience: int = 10
    seed: int = 0
    delta_I: float = 1e-5
    delta_P: float = 1e-5
    delta_R: float = 1.0
    clip_norm: float | None = 100.0
    val_fraction: float = 0.15
    channels: tuple[str, ...] = OUTPUTS
    refs: int = 64
    hidden: int = 64
    kappa: float = 10.0
    baseline: str = "none"
    bins: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "channels", parse_channels(self.channels))
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 0:
            raise ValueError("epochs and batch_size must be >= 1, patience >= 0")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if not 0.0 < self.mask_fraction < 1.0:
            raise ValueError("mask fraction must lie in (0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0 and self.adam_eps > 0):
            raise ValueError("invalid Adam hyper-parameters")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.delta_I, self.delta_P, self.delta_R)

    def model_config(self, task: str, n_channels: int) -> ModelConfig:
        return ModelConfig(task, n_channels, self.refs, self.hidden, self.kappa, self.channels,
                           self.baseline, self.bins)

    def replace(self, **changes) -> "TrainConfig":
        d = self.to_dict()
        d.update(changes)
        return TrainConfig.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: (tuple(v) if k == "channels" else v) for k, v in d.items() if k in known})


# ----------------------------------------------------------------------------
# Loss pieces
# ----------------------------------------------------------------------------

def prediction_loss(y_hat: float, y: float, task: str) -> float:
    if task == "classification":
        return -(y * math.log(y_hat) + (1.0 - y) * math.log(1.0 - y_hat))
    return (y_hat - y) ** 2


def interpolation_loss(s: Sample, mask: MaskAssignment, model_or_params) -> float:
    """Mean squared reconstruction error over the held-out points of ``s``."""
    params = model_or_params.interp_params if isinstance(model_or_params, Model) else model_or_params
    if mask.n_held_out == 0:
        return 0.0
    queries, targets = [], []
    for d, (ch, h) in enumerate(zip(s.channels, mask.held_out)):
        for j in h:
            queries.append((float(ch.t[j]), d))
            targets.append(ch.x[j])
    visible = visible_part(s, mask)
    xhat = reconstruct_at(params, queries, visible)
    return float(np.mean((xhat - np.asarray(targets)) ** 2))


def composite_loss(model: Model, batch: Sequence[Sample], masks, weights: LossWeights) -> float:
    if len(batch) == 0:
        raise ValueError("batch must be non-empty")
    return model.loss(batch, masks, weights)


# ----------------------------------------------------------------------------
# Adam
# ----------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(state: AdamState, params: dict, grads: dict, lr: float, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.step += 1
    c1 = 1.0 - beta1 ** state.step
    c2 = 1.0 - beta2 ** state.step
    for k, p in params.items():
        g = grads[k]
        state.m[k] = beta1 * state.m[k] + (1.0 - beta1) * g
        state.v[k] = beta2 * state.v[k] + (1.0 - beta2) * g * g
        p -= lr * (state.m[k] / c1) / (np.sqrt(state.v[k] / c2) + eps)


# ----------------------------------------------------------------------------
# Training loop
# ----------------------------------------------------------------------------

def mask_seed(epoch_seed: int, batch_index: int, sample_id: str) -> int:
    ss = np.random.SeedSequence([epoch_seed, batch_index, zlib.crc32(sample_id.encode("utf-8"))])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass
class TrainState:
    model: Model
    adam: AdamState
    clip_events: int = 0


def train_step(state: TrainState, batch: Sequence[Sample], config: TrainConfig,
               epoch_seed: int, batch_index: int = 0) -> float:
    """One doubly stochastic step: fresh masks, composite loss, reverse pass, Adam."""
    model = state.model
    masks = None
    if model.config.baseline == "none":
        masks = [sample_mask(s, config.mask_fraction, mask_seed(epoch_seed, batch_index, s.id))
                 for s in batch]
    res = model.loss_and_grad(batch, masks, config.weights)
    grads = res.grads
    if config.clip_norm is not None:
        norm = math.sqrt(sum(float((g ** 2).sum()) for g in grads.values()))
        if norm > config.clip_norm:
            state.clip_events += 1
            grads = {k: g * (config.clip_norm / norm) for k, g in grads.items()}
    adam_step(state.adam, model.params, grads, config.lr, config.beta1, config.beta2,
              config.adam_eps)
    return res.loss


def validation_loss(model: Model, samples: Sequence[Sample], chunk: int = 256) -> float:
    """Mean prediction loss without masks or regularizers."""
    zero = LossWeights(0.0, 0.0, 0.0)
    losses = [model.loss_and_grad(samples[i:i + chunk], None, zero, compute_grad=False).pred_losses
              for i in range(0, len(samples), chunk)]
    return float(np.concatenate(losses).mean())


@dataclass
class Checkpoint:
    model: Model
    stats: ChannelStats
    config: TrainConfig
    channel_names: tuple[str, ...]
    best_val: float
    best_epoch: int
    history: list = field(default_factory=list)

    def predict(self, ds: Dataset) -> np.ndarray:
        return self.model.predict(prepare(ds, self.stats).samples)


def fit(train: Dataset, val: Dataset, config: TrainConfig,
        on_epoch: Callable[[int, float, float], None] | None = None) -> Checkpoint:
    """Train with early stopping on validation prediction loss; return the best checkpoint."""
    if len(train) == 0 or len(val) == 0:
        raise ValueError("training and validation splits must be non-empty")
    if train.task == "classification":
        labels = np.concatenate([train.targets, val.targets])
        if not np.all((labels == 0) | (labels == 1)):
            raise ValueError("the logistic head needs 0/1 labels; use fit_one_vs_rest for more classes")
    stats = global_channel_stats(train)
    tr = prepare(train, stats).samples
    va = prepare(val, stats).samples
    model = Model.init(config.model_config(train.task, train.n_channels), config.seed)
    state = TrainState(model, AdamState.zeros_like(model.params))
    best = model.copy()
    best_val, best_epoch, wait = math.inf, 0, 0
    history = []
    for epoch in range(1, config.epochs + 1):
        epoch_seed = int(np.random.SeedSequence([config.seed, epoch]).generate_state(1)[0])
        order = np.random.default_rng(epoch_seed).permutation(len(tr))
        losses = []
        for b, start in enumerate(range(0, len(tr), config.batch_size)):
            batch = [tr[i] for i in order[start:start + config.batch_size]]
            losses.append(train_step(state, batch, config, epoch_seed, b))
        train_loss = float(np.mean(losses))
        val_loss = validation_loss(model, va)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        if on_epoch is not None:
            on_epoch(epoch, train_loss, val_loss)
        log.debug("epoch %d train %.5f val %.5f", epoch, train_loss, val_loss)
        if val_loss < best_val:
            best_val, best_epoch, wait = val_loss, epoch, 0
            best = model.copy()
        else:
            wait += 1
            if wait > config.patience:
                break
    if state.clip_events:
        history.append({"clip_events": state.clip_events})
    return Checkpoint(best, stats, config, train.channel_names, best_val, best_epoch, history)


# ----------------------------------------------------------------------------
# Gradient verification
# ----------------------------------------------------------------------------

def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    return np.abs(analytic - numeric) / np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))


def finite_difference_check(loss_fn: Callable[[], float], params: dict, grads: dict,
                            eps: float = 1e-5) -> dict:
    """Max relative error per parameter array, perturbing ``params`` in place."""
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError("eps must lie in [1e-7, 1e-3]")
    report = {}
    for k, p in params.items():
        worst = 0.0
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + eps
            fp = loss_fn()
            p[i] = old - eps
            fm = loss_fn()
            p[i] = old
            num = (fp - fm) / (2.0 * eps)
            worst = max(worst, float(relative_error(np.asarray(grads[k][i]), np.asarray(num))))
        report[k] = worst
    return report


def grad_check(model: Model, samples: Sequence[Sample], masks: Sequence[MaskAssignment] | None,
               weights: LossWeights = LossWeights(), eps: float = 1e-5) -> dict:
    """Compare the analytic composite-loss gradient with central differences.

    Masks are held fixed. Returns ``{param name: max relative error}``.
    """
    analytic = model.loss_and_grad(samples, masks, weights).grads
    return finite_difference_check(lambda: model.loss(samples, masks, weights), model.params,
                                   analytic, eps)


def gradcheck_instance(seed: int = 0, task: str = "classification", n_channels: int = 3,
                       refs: int = 10, hidden: int = 8, n_samples: int = 2, rate: float = 8.0):
    """Random model, samples and fixed masks for gradient verification.

    Parameters are jittered away from their initialization so that biases and
    off-diagonal correlations are non-zero.
    """
    from .synth import SynthConfig, synthesize

    mode = "trend" if task == "regression" else "intensity"
    ds = synthesize(SynthConfig(n_samples=n_samples, n_channels=n_channels, label_mode=mode,
                                task=task, rates=(rate, rate)), seed)
    ds = prepare(ds, global_channel_stats(ds))
    model = Model.init(ModelConfig(task, n_channels, refs=refs, hidden=hidden), seed)
    rng = np.random.default_rng(seed + 1)
    for p in model.params.values():
        p += 0.1 * rng.normal(size=p.shape)
    masks = [sample_mask(s, 0.2, seed + i) for i, s in enumerate(ds.samples)]
    return model, list(ds.samples), masks, LossWeights(1e-3, 1e-3, 1.0)
