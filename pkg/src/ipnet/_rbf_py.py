"""Pure numpy RBF layer kernels; reference fallback for the compiled extension.

Shapes: ``refs (N, R)``, ``times (N, U)``, ``values (N, D, U)``,
``mask (N, D, U)`` with 1 for observations that participate, ``alpha (D,)``.
"""
import numpy as np


def _channel_terms(refs, times, values, mask, a):
    d2 = (refs[:, :, None] - times[:, None, :]) ** 2  # (N, R, U)
    logits = -a * d2
    on = mask[:, None, :] != 0
    logits = np.where(on, logits, -np.inf)
    top = logits.max(axis=2, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(on, np.exp(logits - top), 0.0)
    s0 = e.sum(axis=2)
    return d2, e, s0, top[:, :, 0]


def rbf_forward(refs, times, values, mask, alpha):
    """Return ``(lam, sig)``, each ``(N, D, R)``: kernel mass and normalized average."""
    N, R = refs.shape
    D = values.shape[1]
    lam = np.zeros((N, D, R))
    sig = np.zeros((N, D, R))
    for d in range(D):
        _, e, s0, top = _channel_terms(refs, times, values[:, d], mask[:, d], alpha[d])
        s1 = np.einsum("nru,nu->nr", e, values[:, d])
        lam[:, d] = np.exp(top) * s0
        ok = s0 > 0
        sig[:, d] = np.where(ok, s1 / np.where(ok, s0, 1.0), 0.0)
    return lam, sig


def rbf_backward(refs, times, values, mask, alpha, g_lam, g_sig):
    """Gradient with respect to ``alpha`` given adjoints on ``lam`` and ``sig``."""
    D = values.shape[1]
    g_alpha = np.zeros(D)
    for d in range(D):
        d2, e, s0, top = _channel_terms(refs, times, values[:, d], mask[:, d], alpha[d])
        x = values[:, d]
        s_d2 = (e * d2).sum(axis=2)
        s_xd2 = np.einsum("nru,nu->nr", e * d2, x)
        s1 = np.einsum("nru,nu->nr", e, x)
        ok = s0 > 0
        safe = np.where(ok, s0, 1.0)
        dlam = -np.exp(top) * s_d2
        dsig = np.where(ok, -(s_xd2 / safe - (s1 / safe) * (s_d2 / safe)), 0.0)
        g_alpha[d] = (g_lam[:, d] * dlam).sum() + (g_sig[:, d] * dsig).sum()
    return g_alpha
