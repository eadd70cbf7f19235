"""Backend selection for the RBF layer kernels.

The compiled extension is used when it was built; set ``IPNET_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

import numpy as np

from . import _rbf_py

if os.environ.get("IPNET_PURE_PYTHON"):
    _impl = _rbf_py
else:
    try:
        from . import _rbf_ext as _impl
    except ImportError:
        _impl = _rbf_py

BACKEND = "cython" if _impl is not _rbf_py else "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def rbf_forward(refs, times, values, mask, alpha, impl=None):
    impl = impl or _impl
    return impl.rbf_forward(_c(refs), _c(times), _c(values), _c(mask), _c(alpha))


def rbf_backward(refs, times, values, mask, alpha, g_lam, g_sig, impl=None):
    impl = impl or _impl
    return impl.rbf_backward(_c(refs), _c(times), _c(values), _c(mask), _c(alpha),
                             _c(g_lam), _c(g_sig))
