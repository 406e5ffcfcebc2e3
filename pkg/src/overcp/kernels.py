"""Backend selection for the hot tensor kernels.

The compiled extension (``overcp._cykernels``) is used when it was built;
otherwise the numpy reference implementation takes over.  Both share the
flat row-major layout documented in ``_kernels_numpy``.  Set the environment
variable ``OVERCP_FORCE_NUMPY=1`` before import to ignore the extension
(used by the benchmark and the backend-agreement tests).
"""
import os

import numpy as np

from . import _kernels_numpy

if os.environ.get("OVERCP_FORCE_NUMPY", "") == "1":
    _compiled = None
else:
    try:
        from . import _cykernels as _compiled
    except ImportError:
        _compiled = None

BACKEND = "compiled" if _compiled is not None else "numpy"


def _as_matrix(U):
    U = np.ascontiguousarray(U, dtype=np.float64)
    if U.ndim != 2:
        raise ValueError("U must be a d x m matrix")
    return U


def weighted_outer_sum(U, w, l):
    """``sum_i w[i] * u_i^{outer l}`` as a flat ``d**l`` float64 array."""
    U = _as_matrix(U)
    w = np.ascontiguousarray(w, dtype=np.float64)
    d, m = U.shape
    if w.shape != (m,):
        raise ValueError("weight count must match column count")
    if l < 1:
        raise ValueError("order must be >= 1")
    if _compiled is None or m == 0 or l == 1:
        return _kernels_numpy.weighted_outer_sum(U, w, l)
    out = np.empty(d**l)
    scratch = np.empty((d ** (l - 1), m))
    ut = np.empty((m, d))
    _compiled.weighted_outer_sum(U, w, l, out, scratch, ut)
    return out


def contract_leave_one_batch(T_flat, U, l):
    """d x m matrix; column i is ``T(u_i^{l-1}, I)``. Requires l >= 2."""
    U = _as_matrix(U)
    T_flat = np.ascontiguousarray(T_flat, dtype=np.float64)
    d, m = U.shape
    if l < 2:
        raise ValueError("order must be >= 2")
    if T_flat.shape != (d**l,):
        raise ValueError("tensor length does not match d**l")
    if _compiled is None or m == 0:
        return _kernels_numpy.contract_leave_one_batch(T_flat, U, l)
    out = np.empty((d, m))
    scratch = np.empty((d ** (l - 1), m))
    _compiled.contract_leave_one_batch(T_flat, U, l, out, scratch)
    return out


def contract_full_batch(T_flat, U, l):
    """m-vector; entry i is ``T(u_i^{l})``."""
    U = _as_matrix(U)
    T_flat = np.ascontiguousarray(T_flat, dtype=np.float64)
    d, m = U.shape
    if l < 1:
        raise ValueError("order must be >= 1")
    if T_flat.shape != (d**l,):
        raise ValueError("tensor length does not match d**l")
    if _compiled is None or m == 0:
        return _kernels_numpy.contract_full_batch(T_flat, U, l)
    out = np.empty(m)
    scratch = np.empty((max(d ** (l - 1), 1), m))
    _compiled.contract_full_batch(T_flat, U, l, out, scratch)
    return out


def outer_power_flat(v, l):
    """``v^{outer l}`` as a flat array (single-column convenience)."""
    v = np.ascontiguousarray(v, dtype=np.float64)
    return weighted_outer_sum(v[:, None], np.ones(1), l)
