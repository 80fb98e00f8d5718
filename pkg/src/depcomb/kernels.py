"""Hot loops, dispatched to the compiled extension when it is importable.

Set ``DEPCOMB_PURE_PYTHON=1`` before import to force the numpy fallback.
``BACKEND`` reports which implementation is active.
"""
import ctypes
import os

import numpy as np
from scipy import LowLevelCallable

from . import _kernels_py

_impl = _kernels_py
if not os.environ.get("DEPCOMB_PURE_PYTHON"):
    try:
        from . import _kernels as _impl
    except ImportError:  # extension not built
        _impl = _kernels_py

BACKEND = _impl.BACKEND


def _as_sorted_matrix(sorted_p):
    a = np.ascontiguousarray(sorted_p, dtype=float)
    return a.reshape(1, -1) if a.ndim == 1 else a


def bray_curtis(rows):
    """Pairwise Bray-Curtis dissimilarity between the rows of a nonnegative matrix."""
    return _impl.bray_curtis(np.ascontiguousarray(rows, dtype=float))


def hc_prefix_max(sorted_p, hs):
    """Higher-criticism maxima over the first ``h`` order statistics, row-wise.

    ``sorted_p`` holds ascending p-values in each row; ``hs`` is an increasing
    sequence of cut-offs. Returns an array of shape (rows, len(hs)).
    """
    hs = np.ascontiguousarray(hs, dtype=np.intp)
    return _impl.hc_prefix_max(_as_sorted_matrix(sorted_p), hs)


def simes_min(sorted_p):
    """Row-wise Simes combination ``min_j p_(j) m / j`` of ascending rows."""
    return _impl.simes_min(_as_sorted_matrix(sorted_p))


def imhof_integrands(data, backend=None):
    """Return the three Imhof integrands bound to ``data``.

    The caller must keep ``data`` (a contiguous float64 array) alive while
    the integrands are in use.
    """
    impl = _impl if backend is None else _backend_module(backend)
    names = ("imhof_head", "imhof_tail_cos", "imhof_tail_sin")
    if impl is _kernels_py:
        return tuple(
            (lambda u, f=getattr(_kernels_py, name): f(u, data)) for name in names
        )
    ptr = ctypes.cast(data.ctypes.data, ctypes.c_void_p)
    return tuple(LowLevelCallable.from_cython(impl, name, ptr) for name in names)


def _backend_module(name):
    if name == "python":
        return _kernels_py
    from . import _kernels
    return _kernels
