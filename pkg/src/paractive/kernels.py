"""RBF kernel evaluation with a compiled core and a numpy fallback.

The backend is chosen once at import. Set ``PARACTIVE_PURE=1`` to force the
numpy implementation even when the extension is built.
"""
import os

import numpy as np

from paractive import _pykernels

BACKEND = "python"
_impl = _pykernels
if not os.environ.get("PARACTIVE_PURE"):
    try:
        from paractive import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels


def rbf_kernel(x, y, gamma):
    """exp(-gamma * ||x - y||^2) for two vectors."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    d = x - y
    return float(np.exp(-gamma * float(d @ d)))


def rbf_row(x, X, gamma):
    return _impl.rbf_row(
        np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(X, dtype=float), float(gamma)
    )


def rbf_scores(Q, X, beta, gamma, bias=0.0):
    return _impl.rbf_scores(
        np.ascontiguousarray(Q, dtype=float),
        np.ascontiguousarray(X, dtype=float),
        np.ascontiguousarray(beta, dtype=float),
        float(gamma),
        float(bias),
    )
