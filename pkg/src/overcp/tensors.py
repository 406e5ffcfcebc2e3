"""Dense symmetric-tensor arithmetic.

Order-l tensors on R^d are stored densely as flat float64 arrays of length
d**l in row-major order: the (1-based) multi-index (i1, ..., il) maps to
offset (i1-1)*d**(l-1) + ... + (il-1).  Desk scale is d <= ~16 and
l in {3, 4}, so the dense layout (<= 65 536 entries) keeps every index map
bit-exact with no compression bookkeeping.

All operations are pure functions; tensors may be shared read-only.
"""
import itertools
from dataclasses import dataclass, field

import numpy as np

from . import kernels

GRAM_SCHMIDT_DROP_TOL = 1e-10


@dataclass
class SymTensor:
    """Dense order-``order`` tensor on R^``dim`` with flat ``entries``.

    ``symmetric`` is a tag, set by constructors that guarantee permutation
    symmetry; it is not re-verified on every operation.
    """

    order: int
    dim: int
    entries: np.ndarray
    symmetric: bool = False

    def __post_init__(self):
        self.entries = np.ascontiguousarray(self.entries, dtype=np.float64)
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.entries.shape != (self.dim**self.order,):
            raise ValueError(
                f"entries length {self.entries.shape} != dim**order "
                f"= {self.dim ** self.order}"
            )

    def as_ndarray(self):
        """View of the entries with shape (dim,) * order."""
        return self.entries.reshape((self.dim,) * self.order)

    def copy(self):
        return SymTensor(self.order, self.dim, self.entries.copy(), self.symmetric)


@dataclass
class SubspaceBasis:
    """Orthonormal basis of a k-dimensional subspace of R^d (columns)."""

    dim: int
    rank: int
    basis: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.basis = np.ascontiguousarray(self.basis, dtype=np.float64)
        if self.basis.shape != (self.dim, self.rank):
            raise ValueError("basis must be dim x rank")

    def project(self, vectors):
        """Project columns (or a single vector) onto the subspace."""
        return self.basis @ (self.basis.T @ vectors)

    def project_out(self, vectors):
        """Component of the input orthogonal to the subspace."""
        return vectors - self.project(vectors)


def from_ndarray(arr, symmetric=False):
    """Wrap a (d,)*l ndarray as a SymTensor."""
    arr = np.asarray(arr, dtype=np.float64)
    d = arr.shape[0]
    if any(s != d for s in arr.shape):
        raise ValueError("all axes must have equal length")
    return SymTensor(arr.ndim, d, arr.ravel().copy(), symmetric)


def zero_tensor(d, l):
    return SymTensor(l, d, np.zeros(d**l), symmetric=True)


def outer_power(v, l):
    """The rank-one symmetric tensor v^{outer l}."""
    v = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector must be finite")
    return SymTensor(l, v.shape[0], kernels.outer_power_flat(v, l), symmetric=True)


def weighted_sum(weights, tensors):
    """Entrywise linear combination sum_i w_i T_i."""
    if len(weights) != len(tensors):
        raise ValueError("weights and tensors must have equal length")
    if not tensors:
        raise ValueError("need at least one tensor")
    l, d = tensors[0].order, tensors[0].dim
    out = np.zeros(d**l)
    for w, t in zip(weights, tensors):
        if (t.order, t.dim) != (l, d):
            raise ValueError("tensors must share order and dimension")
        out += w * t.entries
    return SymTensor(l, d, out, symmetric=all(t.symmetric for t in tensors))


def contract_full(T, vs):
    """Scalar T(v1, ..., vl): contract every mode."""
    if len(vs) != T.order:
        raise ValueError(f"need {T.order} vectors, got {len(vs)}")
    d = T.dim
    cur = T.entries
    for v in vs:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (d,):
            raise ValueError("vector length must equal tensor dimension")
        cur = v @ cur.reshape(d, -1)
    return float(cur.reshape(()))


def contract_leave_one(T, vs):
    """Vector T(v1, ..., v_{l-1}, I): contract all but the last mode."""
    if T.order < 2:
        raise ValueError("order must be >= 2")
    if len(vs) != T.order - 1:
        raise ValueError(f"need {T.order - 1} vectors, got {len(vs)}")
    d = T.dim
    cur = T.entries
    for v in vs:
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (d,):
            raise ValueError("vector length must equal tensor dimension")
        cur = v @ cur.reshape(d, -1)
    return cur


def frobenius_inner(T, T2):
    """Entrywise inner product <T, T2>."""
    if (T.order, T.dim) != (T2.order, T2.dim):
        raise ValueError("tensors must share order and dimension")
    return float(np.dot(T.entries, T2.entries))


def frobenius_norm(T):
    return float(np.linalg.norm(T.entries))


def vectorize(T):
    """Flat d**l vector in the documented index order (a copy)."""
    return T.entries.copy()


def matricize(T):
    """d x d**(l-1) unfolding: rows indexed by the first mode."""
    return T.entries.reshape(T.dim, -1).copy()


def project_all_modes(T, B):
    """Apply the projector P = B B^T on every mode of T."""
    if B.dim != T.dim:
        raise ValueError("basis dimension must match tensor dimension")
    P = B.basis @ B.basis.T
    cur = T.as_ndarray()
    for mode in range(T.order):
        cur = np.moveaxis(np.tensordot(P, cur, axes=(1, mode)), 0, mode)
    return SymTensor(T.order, T.dim, cur.ravel(), symmetric=T.symmetric)


def symmetrize(T):
    """Average of T over all l! index permutations."""
    arr = T.as_ndarray()
    acc = np.zeros_like(arr)
    count = 0
    for perm in itertools.permutations(range(T.order)):
        acc += np.transpose(arr, perm)
        count += 1
    return SymTensor(T.order, T.dim, (acc / count).ravel(), symmetric=True)


def orthonormalize(vectors):
    """Modified Gram-Schmidt with a drop tolerance.

    Vectors are processed in input order; a vector whose residual after
    projection falls below ``GRAM_SCHMIDT_DROP_TOL`` times the largest input
    norm is dropped (dependent direction).  Raises if every input is
    numerically zero.
    """
    vectors = [np.asarray(v, dtype=np.float64) for v in vectors]
    if not vectors:
        raise ValueError("need at least one vector")
    d = vectors[0].shape[0]
    max_norm = max(float(np.linalg.norm(v)) for v in vectors)
    if max_norm <= 0.0:
        raise ValueError("all input vectors are numerically zero")
    tol = GRAM_SCHMIDT_DROP_TOL * max_norm
    cols = []
    for v in vectors:
        if v.shape != (d,):
            raise ValueError("all vectors must share the same length")
        w = v.copy()
        for q in cols:
            w -= np.dot(q, w) * q
        # second pass keeps B^T B at working precision
        for q in cols:
            w -= np.dot(q, w) * q
        n = float(np.linalg.norm(w))
        if n > tol:
            cols.append(w / n)
    if not cols:
        raise ValueError("all input vectors are numerically zero")
    return SubspaceBasis(d, len(cols), np.stack(cols, axis=1))
