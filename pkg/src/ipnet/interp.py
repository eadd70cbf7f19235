"""Two-layer RBF interpolation network.

The first layer turns each channel into an intensity ``lam``, a smooth
interpolant ``sig`` (bandwidth ``alpha_d``) and a non-smooth interpolant
``gam`` (bandwidth ``kappa * alpha_d``). The second layer mixes channels into
``chi`` with learnable correlations ``rho`` and forms the transient
``tau = gam - chi``. Everything here is batched over samples packed onto a
padded union-of-timestamps representation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .data import MaskAssignment, ReferenceGrid, Sample, TimeChannel

EPS = 1e-8
OUTPUTS = ("SI", "T", "I")  # chi, tau, lam block order in the stack
TABLE_ORDER = (("SI", "T", "I"), ("SI", "I"), ("SI", "T"), ("SI",), ("I",), ("I", "T"), ("T",))


def parse_channels(spec: str | Sequence[str]) -> tuple[str, ...]:
    """Normalize a selection such as ``"si,t,i"`` to canonical block order."""
    items = spec.split(",") if isinstance(spec, str) else list(spec)
    chosen = set()
    for item in items:
        key = item.strip().upper()
        if key not in OUTPUTS:
            raise ValueError(f"unknown interpolation output {item!r}; expected SI, T or I")
        chosen.add(key)
    if not chosen:
        raise ValueError("channel selection must be non-empty")
    return tuple(o for o in OUTPUTS if o in chosen)


@dataclass
class InterpParams:
    log_alpha: np.ndarray
    rho: np.ndarray
    kappa: float = 10.0

    def __post_init__(self):
        if self.kappa < 1.0:
            raise ValueError("kappa must be >= 1")

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.log_alpha)

    @classmethod
    def init(cls, n_channels: int, T: int, kappa: float = 10.0) -> "InterpParams":
        """Bandwidth spanning about three grid steps; ``rho`` starts at identity."""
        step = 1.0 / (T - 1)
        a0 = 1.0 / (2.0 * (3.0 * step) ** 2)
        return cls(np.full(n_channels, math.log(a0)), np.eye(n_channels), kappa)


# ----------------------------------------------------------------------------
# Scalar reference forms
# ----------------------------------------------------------------------------

def kernel_weight(r: float, t: float, alpha: float) -> float:
    return math.exp(-alpha * (r - t) ** 2)


def _visible(channel: TimeChannel, held_out=None):
    if held_out is None or len(held_out) == 0:
        return channel.t, channel.x
    keep = np.ones(len(channel), dtype=bool)
    keep[np.asarray(held_out, dtype=np.int64)] = False
    return channel.t[keep], channel.x[keep]


def intensity(r: float, channel: TimeChannel, alpha: float, held_out=None) -> float:
    t, _ = _visible(channel, held_out)
    return float(np.exp(-alpha * (r - t) ** 2).sum())


def smooth_interp(r: float, channel: TimeChannel, alpha: float, held_out=None) -> float:
    t, x = _visible(channel, held_out)
    if t.size == 0:
        raise ValueError("no support for interpolation")
    logits = -alpha * (r - t) ** 2
    e = np.exp(logits - logits.max())
    return float((e * x).sum() / e.sum())


def nonsmooth_interp(r: float, channel: TimeChannel, alpha: float, kappa: float,
                     held_out=None) -> float:
    return smooth_interp(r, channel, kappa * alpha, held_out)


def cross_channel(d: int, lam: np.ndarray, sig: np.ndarray, gam: np.ndarray,
                  rho: np.ndarray) -> tuple[float, float]:
    """``(chi, tau)`` for channel ``d`` at one reference point."""
    chi = float((rho[d] * lam * sig).sum() / (lam.sum() + EPS))
    return chi, float(gam[d] - chi)


# ----------------------------------------------------------------------------
# Batched representation
# ----------------------------------------------------------------------------

@dataclass
class PackedBatch:
    times: np.ndarray  # (N, U)
    values: np.ndarray  # (N, D, U)
    observed: np.ndarray  # (N, D, U)
    held_out: np.ndarray  # (N, D, U)

    @property
    def visible(self) -> np.ndarray:
        return self.observed * (1.0 - self.held_out)

    @property
    def n_samples(self) -> int:
        return self.times.shape[0]


def pack(samples: Sequence[Sample], masks: Sequence[MaskAssignment] | None = None) -> PackedBatch:
    """Pad samples onto a shared union-of-timestamps layout."""
    unions = [np.unique(np.concatenate([ch.t for ch in s.channels])) for s in samples]
    N, D = len(samples), samples[0].n_channels
    U = max(u.size for u in unions)
    times = np.zeros((N, U))
    values = np.zeros((N, D, U))
    observed = np.zeros((N, D, U))
    held = np.zeros((N, D, U))
    for n, (s, union) in enumerate(zip(samples, unions)):
        times[n, :union.size] = union
        for d, ch in enumerate(s.channels):
            pos = np.searchsorted(union, ch.t)
            values[n, d, pos] = ch.x
            observed[n, d, pos] = 1.0
            if masks is not None and masks[n].held_out[d].size:
                held[n, d, pos[masks[n].held_out[d]]] = 1.0
    return PackedBatch(times, values, observed, held)


def _check_support(visible: np.ndarray) -> None:
    if np.any(visible.sum(axis=2) == 0):
        raise ValueError("no support for interpolation: a channel has no visible observations")


def _second_layer(lam, sig, rho):
    S = lam.sum(axis=1) + EPS  # (N, R)
    P = lam * sig
    chi = np.einsum("de,ner->ndr", rho, P) / S[:, None, :]
    return chi, S


def _second_layer_backward(g_chi, lam, sig, rho, chi, S):
    Sx = S[:, None, :]
    gP = np.einsum("de,ndr->ner", rho, g_chi) / Sx
    g_rho = np.einsum("ndr,ner->de", g_chi, lam * sig / Sx)
    gS = -(g_chi * chi).sum(axis=1) / S
    g_lam = gP * sig + gS[:, None, :]
    g_sig = gP * lam
    return g_rho, g_lam, g_sig


@dataclass
class InterpCache:
    refs: np.ndarray
    visible: np.ndarray
    batch: PackedBatch
    alpha: np.ndarray
    lam: np.ndarray
    sig: np.ndarray
    gam: np.ndarray | None
    chi: np.ndarray
    S: np.ndarray
    selection: tuple[str, ...]


def interp_forward(params: InterpParams, batch: PackedBatch, grid: ReferenceGrid,
                   selection: Sequence[str] = OUTPUTS) -> tuple[np.ndarray, InterpCache]:
    """Stack of shape ``(N, D*C, T)`` in ``[chi | tau | lam]`` block order."""
    sel = parse_channels(selection)
    vis = batch.visible
    _check_support(vis)
    alpha = params.alpha
    refs = np.broadcast_to(grid.points, (batch.n_samples, len(grid)))
    lam, sig = kernels.rbf_forward(refs, batch.times, batch.values, vis, alpha)
    gam = None
    if "T" in sel:
        _, gam = kernels.rbf_forward(refs, batch.times, batch.values, vis, params.kappa * alpha)
    chi, S = _second_layer(lam, sig, params.rho)
    blocks = {"SI": chi, "I": lam}
    if gam is not None:
        blocks["T"] = gam - chi
    stack = np.concatenate([blocks[o] for o in sel], axis=1)
    return stack, InterpCache(refs, vis, batch, alpha, lam, sig, gam, chi, S, sel)


def interp_backward(params: InterpParams, cache: InterpCache, g_stack: np.ndarray) -> dict:
    """Gradients for ``log_alpha`` and ``rho`` given the adjoint of the stack."""
    D = cache.lam.shape[1]
    g = {o: g_stack[:, i * D:(i + 1) * D] for i, o in enumerate(cache.selection)}
    zero = np.zeros_like(cache.lam)
    g_tau = g.get("T", zero)
    g_chi = g.get("SI", zero) - g_tau
    g_rho, g_lam, g_sig = _second_layer_backward(g_chi, cache.lam, cache.sig, params.rho,
                                                 cache.chi, cache.S)
    g_lam = g_lam + g.get("I", zero)
    b = cache.batch
    g_alpha = kernels.rbf_backward(cache.refs, b.times, b.values, cache.visible, cache.alpha,
                                   g_lam, g_sig)
    if cache.gam is not None:
        g_alpha = g_alpha + params.kappa * kernels.rbf_backward(
            cache.refs, b.times, b.values, cache.visible, params.kappa * cache.alpha, zero, g_tau)
    return {"log_alpha": g_alpha * cache.alpha, "rho": g_rho}


def reconstruct(params: InterpParams, batch: PackedBatch, refs: np.ndarray | None = None
                ) -> tuple[np.ndarray, InterpCache]:
    """Cross-channel interpolant ``chi`` evaluated at ``refs`` from visible points only.

    ``refs`` defaults to each sample's own union timestamps, giving ``(N, D, U)``
    predictions aligned with ``batch.values``.
    """
    vis = batch.visible
    _check_support(vis)
    alpha = params.alpha
    refs = batch.times if refs is None else refs
    lam, sig = kernels.rbf_forward(refs, batch.times, batch.values, vis, alpha)
    chi, S = _second_layer(lam, sig, params.rho)
    return chi, InterpCache(refs, vis, batch, alpha, lam, sig, None, chi, S, ("SI",))


def reconstruct_backward(params: InterpParams, cache: InterpCache, g_chi: np.ndarray) -> dict:
    g_rho, g_lam, g_sig = _second_layer_backward(g_chi, cache.lam, cache.sig, params.rho,
                                                 cache.chi, cache.S)
    b = cache.batch
    g_alpha = kernels.rbf_backward(cache.refs, b.times, b.values, cache.visible, cache.alpha,
                                   g_lam, g_sig)
    return {"log_alpha": g_alpha * cache.alpha, "rho": g_rho}


# ----------------------------------------------------------------------------
# Single-sample conveniences
# ----------------------------------------------------------------------------

def forward(params: InterpParams, s: Sample, grid: ReferenceGrid,
            selection: Sequence[str] = OUTPUTS, mask: MaskAssignment | None = None) -> np.ndarray:
    """Interpolant stack ``(D*C, T)`` for one sample."""
    stack, _ = interp_forward(params, pack([s], None if mask is None else [mask]), grid, selection)
    return stack[0]


def reconstruct_at(params: InterpParams, queries: Sequence[tuple[float, int]],
                   visible: Sample) -> np.ndarray:
    """Predict values at ``(time, channel)`` queries from the observations in ``visible``."""
    if len(queries) == 0:
        return np.zeros(0)
    qt = np.array([[q[0] for q in queries]], dtype=np.float64)
    qd = np.array([q[1] for q in queries], dtype=np.int64)
    chi, _ = reconstruct(params, pack([visible]), refs=qt)
    return chi[0, qd, np.arange(qd.size)]


def interp_gradients(params: InterpParams, s: Sample, grid: ReferenceGrid, g_stack: np.ndarray,
                     selection: Sequence[str] = OUTPUTS, mask: MaskAssignment | None = None,
                     g_recon: np.ndarray | None = None) -> dict:
    """Gradients of ``<g_stack, stack> + <g_recon, x_hat>`` for one sample.

    ``g_recon`` is the adjoint on reconstructions at the held-out points of
    ``mask``, ordered channel by channel and by observation index.
    """
    batch = pack([s], None if mask is None else [mask])
    _, cache = interp_forward(params, batch, grid, selection)
    grads = interp_backward(params, cache, np.asarray(g_stack, dtype=np.float64)[None])
    if mask is not None and g_recon is not None and mask.n_held_out:
        _, rcache = reconstruct(params, batch)
        g_chi = np.zeros_like(batch.values)
        union = batch.times[0]
        i = 0
        for d, (ch, h) in enumerate(zip(s.channels, mask.held_out)):
            for j in h:
                g_chi[0, d, np.searchsorted(union, ch.t[j])] += g_recon[i]
                i += 1
        rg = reconstruct_backward(params, rcache, g_chi)
        grads = {k: grads[k] + rg[k] for k in grads}
    return grads
