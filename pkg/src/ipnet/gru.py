"""GRU prediction network with classification and regression heads.

Gate convention::

    z  = sigmoid(W_z u + U_z h + b_z)
    r  = sigmoid(W_r u + U_r h + b_r)
    hc = tanh(W_h u + U_h (r * h) + b_h)
    h' = (1 - z) * h + z * hc

Parameters live in flat ``dict[str, ndarray]`` maps so the optimizer,
checkpointing and gradient checking treat every model uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from .data import ChannelStats, Sample, discretize_forward_fill

REG_HIDDEN = 50
GRU_KEYS = ("gru.W_z", "gru.W_r", "gru.W_h", "gru.U_z", "gru.U_r", "gru.U_h",
            "gru.b_z", "gru.b_r", "gru.b_h")
CLASS_KEYS = ("head.w", "head.b")
REG_KEYS = ("head.W1", "head.b1", "head.w2", "head.b2")


def init_gru(input_size: int, hidden: int, rng: np.random.Generator) -> dict:
    """Uniform(+-1/sqrt(fan_in)) gate weights, zero biases."""
    p = {}
    for g in "zrh":
        p[f"gru.W_{g}"] = rng.uniform(-1, 1, (hidden, input_size)) / np.sqrt(input_size)
    for g in "zrh":
        p[f"gru.U_{g}"] = rng.uniform(-1, 1, (hidden, hidden)) / np.sqrt(hidden)
    for g in "zrh":
        p[f"gru.b_{g}"] = np.zeros(hidden)
    return p


def init_head(task: str, hidden: int, rng: np.random.Generator) -> dict:
    if task == "classification":
        return {"head.w": rng.uniform(-1, 1, hidden) / np.sqrt(hidden), "head.b": np.zeros(1)}
    return {
        "head.W1": rng.uniform(-1, 1, (REG_HIDDEN, hidden)) / np.sqrt(hidden),
        "head.b1": np.zeros(REG_HIDDEN),
        "head.w2": rng.uniform(-1, 1, REG_HIDDEN) / np.sqrt(REG_HIDDEN),
        "head.b2": np.zeros(1),
    }


def gru_step(p: dict, u: np.ndarray, h_prev: np.ndarray) -> np.ndarray:
    z = expit(p["gru.W_z"] @ u + p["gru.U_z"] @ h_prev + p["gru.b_z"])
    r = expit(p["gru.W_r"] @ u + p["gru.U_r"] @ h_prev + p["gru.b_r"])
    hc = np.tanh(p["gru.W_h"] @ u + p["gru.U_h"] @ (r * h_prev) + p["gru.b_h"])
    return (1.0 - z) * h_prev + z * hc


@dataclass
class GRUCache:
    u: np.ndarray
    hs: np.ndarray  # (N, T+1, H), hs[:, 0] = 0
    z: np.ndarray
    r: np.ndarray
    hc: np.ndarray


def gru_forward(p: dict, u: np.ndarray) -> tuple[np.ndarray, GRUCache]:
    """Run the GRU over ``u`` of shape ``(N, T, I)`` from a zero state.

    Returns all hidden states ``(N, T, H)`` and the cache for BPTT.
    """
    N, T, _ = u.shape
    H = p["gru.b_z"].size
    W = np.concatenate([p["gru.W_z"], p["gru.W_r"], p["gru.W_h"]])
    b = np.concatenate([p["gru.b_z"], p["gru.b_r"], p["gru.b_h"]])
    Uzr = np.concatenate([p["gru.U_z"], p["gru.U_r"]])
    Uh = p["gru.U_h"]
    xw = u @ W.T + b
    hs = np.zeros((N, T + 1, H))
    z = np.empty((N, T, H))
    r = np.empty((N, T, H))
    hc = np.empty((N, T, H))
    h = hs[:, 0]
    for k in range(T):
        zr = expit(xw[:, k, :2 * H] + h @ Uzr.T)
        z[:, k], r[:, k] = zr[:, :H], zr[:, H:]
        hc[:, k] = np.tanh(xw[:, k, 2 * H:] + (r[:, k] * h) @ Uh.T)
        h = (1.0 - z[:, k]) * h + z[:, k] * hc[:, k]
        hs[:, k + 1] = h
    return hs[:, 1:], GRUCache(u, hs, z, r, hc)


def gru_backward(p: dict, cache: GRUCache, g_hs: np.ndarray) -> tuple[dict, np.ndarray]:
    """Backpropagation through time.

    ``g_hs`` is the adjoint on every hidden state ``(N, T, H)``; returns
    parameter gradients and the input adjoint ``(N, T, I)``.
    """
    u, hs, z, r, hc = cache.u, cache.hs, cache.z, cache.r, cache.hc
    N, T, _ = u.shape
    H = z.shape[2]
    W = np.concatenate([p["gru.W_z"], p["gru.W_r"], p["gru.W_h"]])
    Uzr = np.concatenate([p["gru.U_z"], p["gru.U_r"]])
    Uh = p["gru.U_h"]
    g_a = np.zeros((N, T, 3 * H))  # adjoints on gate pre-activations
    gUzr = np.zeros_like(Uzr)
    gUh = np.zeros_like(Uh)
    gh = np.zeros((N, H))
    for k in range(T - 1, -1, -1):
        gh = gh + g_hs[:, k]
        h = hs[:, k]
        zk, rk, hck = z[:, k], r[:, k], hc[:, k]
        g_hc = gh * zk
        g_z = gh * (hck - h)
        gh_next = gh * (1.0 - zk)
        a_h = g_hc * (1.0 - hck ** 2)
        g_rh = a_h @ Uh
        gUh += a_h.T @ (rk * h)
        a_z = g_z * zk * (1.0 - zk)
        a_r = g_rh * h * rk * (1.0 - rk)
        a_zr = np.concatenate([a_z, a_r], axis=1)
        gUzr += a_zr.T @ h
        gh = gh_next + g_rh * rk + a_zr @ Uzr
        g_a[:, k, :H], g_a[:, k, H:2 * H], g_a[:, k, 2 * H:] = a_z, a_r, a_h
    gW = np.einsum("ntj,nti->ji", g_a, u)
    gb = g_a.sum(axis=(0, 1))
    g_u = g_a @ W
    grads = {}
    for i, g in enumerate("zrh"):
        grads[f"gru.W_{g}"] = gW[i * H:(i + 1) * H]
        grads[f"gru.b_{g}"] = gb[i * H:(i + 1) * H]
    grads["gru.U_z"], grads["gru.U_r"] = gUzr[:H], gUzr[H:]
    grads["gru.U_h"] = gUh
    return grads, g_u


# ----------------------------------------------------------------------------
# Heads
# ----------------------------------------------------------------------------

def classify(p: dict, h_T: np.ndarray) -> np.ndarray:
    return expit(h_T @ p["head.w"] + p["head.b"][0])


def regress(p: dict, h_T: np.ndarray) -> np.ndarray:
    a = np.maximum(h_T @ p["head.W1"].T + p["head.b1"], 0.0)
    return a @ p["head.w2"] + p["head.b2"][0]


def head_loss_and_grad(p: dict, task: str, h_T: np.ndarray, y: np.ndarray,
                       weight: float) -> tuple[np.ndarray, np.ndarray, dict, np.ndarray]:
    """Per-sample prediction losses, predictions, head gradients and ``dL/dh_T``.

    Gradients are of ``weight * sum(per-sample losses)``. The classification
    loss is evaluated from the logit so it stays finite for saturated outputs.
    """
    if task == "classification":
        logit = h_T @ p["head.w"] + p["head.b"][0]
        losses = -(y * log_expit(logit) + (1.0 - y) * log_expit(-logit))
        pred = expit(logit)
        g_logit = weight * (pred - y)
        grads = {"head.w": g_logit @ h_T, "head.b": np.array([g_logit.sum()])}
        return losses, pred, grads, np.outer(g_logit, p["head.w"])
    pre = h_T @ p["head.W1"].T + p["head.b1"]
    a = np.maximum(pre, 0.0)
    pred = a @ p["head.w2"] + p["head.b2"][0]
    losses = (pred - y) ** 2
    g_out = weight * 2.0 * (pred - y)
    g_a = np.outer(g_out, p["head.w2"])
    g_pre = g_a * (pre > 0)
    grads = {"head.W1": g_pre.T @ h_T, "head.b1": g_pre.sum(axis=0),
             "head.w2": g_out @ a, "head.b2": np.array([g_out.sum()])}
    return losses, pred, grads, g_pre @ p["head.W1"]


# ----------------------------------------------------------------------------
# Baseline front-ends
# ----------------------------------------------------------------------------

BASELINES = ("m", "f", "s")


def baseline_inputs(s: Sample, mode: str, bins: int, stats: ChannelStats | None = None) -> np.ndarray:
    """Dense ``(bins, width)`` input sequence for the GRU-M/F/S baselines.

    ``s`` must already be standardized. Mode ``m`` fills empty bins with the
    global mean, ``f`` forward-fills, ``s`` concatenates mean-filled values,
    the observation mask and the time-since-last-observation intervals.
    """
    mode = mode.lower()
    if mode not in BASELINES:
        raise ValueError(f"unknown baseline mode {mode!r}")
    if mode == "f":
        return discretize_forward_fill(s, bins, stats, fill="forward").values.T.copy()
    feats = discretize_forward_fill(s, bins, stats, fill="mean")
    if mode == "m":
        return feats.values.T.copy()
    return np.concatenate([feats.values, feats.mask, feats.intervals]).T.copy()
