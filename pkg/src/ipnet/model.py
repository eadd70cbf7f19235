"""End-to-end models: interpolation network (or a discretized baseline front-end),
GRU and a task head, with the composite loss and its exact gradient."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import gru as G
from . import interp as I
from .data import MaskAssignment, ReferenceGrid, Sample


@dataclass(frozen=True)
class ModelConfig:
    task: str
    n_channels: int
    refs: int = 64
    hidden: int = 64
    kappa: float = 10.0
    channels: tuple[str, ...] = I.OUTPUTS
    baseline: str = "none"
    bins: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "channels", I.parse_channels(self.channels))
        if self.task not in ("classification", "regression"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.baseline not in ("none",) + G.BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if self.refs < 2 or self.hidden < 1 or self.n_channels < 1:
            raise ValueError("refs must be >= 2, hidden and n_channels >= 1")
        if self.kappa < 1.0:
            raise ValueError("kappa must be >= 1")

    @property
    def n_bins(self) -> int:
        return self.bins or self.refs

    @property
    def input_size(self) -> int:
        D = self.n_channels
        if self.baseline == "none":
            return D * len(self.channels)
        return 3 * D if self.baseline == "s" else D

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["channels"] = tuple(d["channels"])
        return cls(**d)


@dataclass(frozen=True)
class LossWeights:
    delta_I: float = 1e-5
    delta_P: float = 1e-5
    delta_R: float = 1.0

    def __post_init__(self):
        if min(self.delta_I, self.delta_P, self.delta_R) < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossResult:
    loss: float
    pred_losses: np.ndarray
    recon_losses: np.ndarray
    preds: np.ndarray
    grads: dict = field(default_factory=dict)


def is_interp_key(name: str) -> bool:
    return name.startswith("interp.")


class Model:
    """Parameters plus configuration. ``params`` maps names to float64 arrays."""

    def __init__(self, config: ModelConfig, params: dict):
        self.config = config
        self.params = params
        self.grid = ReferenceGrid.evenly_spaced(config.refs)

    @classmethod
    def init(cls, config: ModelConfig, seed: int) -> "Model":
        rng = np.random.default_rng(seed)
        params = {}
        if config.baseline == "none":
            ip = I.InterpParams.init(config.n_channels, config.refs, config.kappa)
            params["interp.log_alpha"] = ip.log_alpha
            params["interp.rho"] = ip.rho
        params.update(G.init_gru(config.input_size, config.hidden, rng))
        params.update(G.init_head(config.task, config.hidden, rng))
        return cls(config, params)

    def copy(self) -> "Model":
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})

    @property
    def interp_params(self) -> I.InterpParams:
        return I.InterpParams(self.params["interp.log_alpha"], self.params["interp.rho"],
                              self.config.kappa)

    # ------------------------------------------------------------------
    def _inputs(self, samples: Sequence[Sample], masks):
        cfg = self.config
        if cfg.baseline != "none":
            seq = np.stack([G.baseline_inputs(s, cfg.baseline, cfg.n_bins) for s in samples])
            return seq, None, None
        batch = I.pack(samples, masks)
        stack, cache = I.interp_forward(self.interp_params, batch, self.grid, cfg.channels)
        return np.ascontiguousarray(stack.transpose(0, 2, 1)), batch, cache

    def stack(self, samples: Sequence[Sample], masks=None) -> np.ndarray:
        """GRU input sequences ``(N, T, input_size)``."""
        return self._inputs(samples, masks)[0]

    def predict(self, samples: Sequence[Sample], batch_size: int = 256) -> np.ndarray:
        out = []
        for i in range(0, len(samples), batch_size):
            chunk = samples[i:i + batch_size]
            seq = self._inputs(chunk, None)[0]
            hs, _ = G.gru_forward(self.params, seq)
            h_T = hs[:, -1]
            if self.config.task == "classification":
                out.append(G.classify(self.params, h_T))
            else:
                out.append(G.regress(self.params, h_T))
        return np.concatenate(out) if out else np.zeros(0)

    def loss(self, samples, masks=None, weights: LossWeights = LossWeights()) -> float:
        return self.loss_and_grad(samples, masks, weights, compute_grad=False).loss

    def loss_and_grad(self, samples: Sequence[Sample], masks: Sequence[MaskAssignment] | None,
                      weights: LossWeights, compute_grad: bool = True) -> LossResult:
        """Composite objective on one batch and, optionally, its full gradient.

        ``mean prediction loss + dI*|theta|^2 + dP*|phi|^2 + dR*mean reconstruction loss``,
        where each sample's reconstruction loss is the mean squared error over
        its held-out points (0 when nothing is held out).
        """
        cfg, p = self.config, self.params
        N = len(samples)
        y = np.array([s.y for s in samples], dtype=np.float64)
        seq, batch, cache = self._inputs(samples, masks)
        hs, gcache = G.gru_forward(p, seq)
        pred_losses, preds, head_grads, g_hT = G.head_loss_and_grad(p, cfg.task, hs[:, -1], y, 1.0 / N)

        recon_losses = np.zeros(N)
        rcache = None
        use_recon = (cfg.baseline == "none" and weights.delta_R > 0 and batch is not None
                     and batch.held_out.any())
        if use_recon:
            xhat, rcache = I.reconstruct(self.interp_params, batch)
            held = batch.held_out
            counts = held.sum(axis=(1, 2))
            resid = (xhat - batch.values) * held
            per = np.where(counts > 0, (resid ** 2).sum(axis=(1, 2)) / np.maximum(counts, 1), 0.0)
            recon_losses = per

        theta = [k for k in p if is_interp_key(k)]
        phi = [k for k in p if not is_interp_key(k)]
        reg_I = sum(float((p[k] ** 2).sum()) for k in theta)
        reg_P = sum(float((p[k] ** 2).sum()) for k in phi)
        loss = (pred_losses.mean() + weights.delta_I * reg_I + weights.delta_P * reg_P
                + weights.delta_R * recon_losses.mean())
        res = LossResult(float(loss), pred_losses, recon_losses, preds)
        if not compute_grad:
            return res

        g_hs = np.zeros_like(hs)
        g_hs[:, -1] = g_hT
        grads, g_seq = G.gru_backward(p, gcache, g_hs)
        grads.update(head_grads)
        if cache is not None:
            ig = I.interp_backward(self.interp_params, cache, g_seq.transpose(0, 2, 1))
            grads["interp.log_alpha"] = ig["log_alpha"]
            grads["interp.rho"] = ig["rho"]
            if rcache is not None:
                scale = weights.delta_R / N * 2.0 / np.maximum(counts, 1)
                g_chi = scale[:, None, None] * resid
                rg = I.reconstruct_backward(self.interp_params, rcache, g_chi)
                grads["interp.log_alpha"] = grads["interp.log_alpha"] + rg["log_alpha"]
                grads["interp.rho"] = grads["interp.rho"] + rg["rho"]
        for k in theta:
            grads[k] = grads[k] + 2.0 * weights.delta_I * p[k]
        for k in phi:
            grads[k] = grads[k] + 2.0 * weights.delta_P * p[k]
        res.grads = {k: grads[k] for k in p}
        return res
