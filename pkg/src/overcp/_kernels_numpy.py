"""Reference implementations of the hot tensor kernels (numpy path).

Layout contract shared with the compiled backend: an order-``l`` tensor on
R^d is a C-contiguous float64 array of length ``d**l``; the entry at
(1-based) multi-index (i1, ..., il) sits at flat offset
``(i1-1)*d**(l-1) + ... + (il-1)`` — i.e. plain row-major order, so
``flat.reshape((d,)*l)`` recovers the tensor.
"""
import numpy as np


def weighted_outer_sum(U, w, l):
    """``sum_i w[i] * u_i^{outer l}`` as a flat ``d**l`` array.

    ``U`` is d x m with components as columns.
    """
    d, m = U.shape
    if m == 0:
        return np.zeros(d**l)
    if l == 1:
        return U @ w
    kr = U
    for _ in range(l - 2):
        kr = (kr[:, None, :] * U[None, :, :]).reshape(-1, m)
    return ((kr * w) @ U.T).ravel()


def contract_leave_one_batch(T_flat, U, l):
    """d x m matrix whose column i is T(u_i, ..., u_i, I) (l-1 copies).

    The first l-1 modes are contracted; the identity occupies the last
    slot.  For symmetric T the slot choice is immaterial.
    """
    d, m = U.shape
    cur = T_flat.reshape(d, -1).T @ U  # (d**(l-1), m)
    for _ in range(l - 2):
        cur = np.einsum("arm,am->rm", cur.reshape(d, -1, m), U)
    return np.ascontiguousarray(cur)


def contract_full_batch(T_flat, U, l):
    """m-vector of scalars T(u_i, ..., u_i) (l copies)."""
    if l == 1:
        return U.T @ T_flat
    leave = contract_leave_one_batch(T_flat, U, l)
    return np.einsum("am,am->m", leave, U)
