"""Lower bounds for linearized (lazy) training of the tensor model.

A model linearized at a small random init only ever moves inside the
tangent subspace spanned by the per-component directions
sym(u_i^{outer(l-1)} ⊗ e_j); its dimension is at most d·m.  The analytic
bound below quantifies how much of a random unit target must fall outside
that subspace, and the Monte-Carlo estimator measures the same quantity
directly.
"""
import math
from dataclasses import dataclass

import numpy as np

from . import tensors
from .randomness import unit_sphere

DENSE_GUARD = 2_000_000


def analytic_lower_bound(d, l, m):
    """max(0, (C(d+l-1, l) - d·m)) · Γ(d/2) / (2^l Γ(l + d/2)) · l!.

    The Gamma ratio is evaluated as the exact finite product
    Γ(d/2)/Γ(l + d/2) = 1 / prod_{k=0}^{l-1} (d/2 + k), which is
    overflow-free for the whole supported range (d up to 10³ and far
    beyond) and exact at small integer arguments, e.g. 0.5 for
    (d, l, m) = (2, 3, 0) and 0.25 for m = 1.
    """
    if d < 1 or l < 1 or m < 0:
        raise ValueError("need d >= 1, l >= 1, m >= 0")
    count = math.comb(d + l - 1, l) - d * m
    if count <= 0:
        return 0.0
    denom = 2.0**l
    for k in range(l):
        denom *= d / 2.0 + k
    return count * math.factorial(l) / denom


def _sym_tangent_direction(power_arr, j, d, l):
    """sym(u^{outer(l-1)} ⊗ e_j) exploiting that only the slot of e_j
    matters when the power factor is already symmetric."""
    e = np.zeros(d)
    e[j] = 1.0
    full = np.multiply.outer(power_arr, e)  # e_j in the last slot
    acc = np.zeros_like(full)
    for slot in range(l):
        acc += np.moveaxis(full, l - 1, slot)
    return (acc / l).ravel()


def tangent_subspace_basis(U, l):
    """Orthonormal basis (in dimension d^l) of the tangent subspace
    span{sym(u_i^{outer(l-1)} ⊗ e_j)}; rank <= d·m."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    d, m = U.shape
    if d**l > DENSE_GUARD:
        raise ValueError(f"d**l = {d ** l} exceeds the dense guard {DENSE_GUARD}")
    vecs = []
    for i in range(m):
        power = tensors.outer_power(U[:, i], l - 1).as_ndarray()
        for j in range(d):
            vecs.append(_sym_tangent_direction(power, j, d, l))
    if not vecs:
        return tensors.SubspaceBasis(d**l, 0, np.zeros((d**l, 0)))
    return tensors.orthonormalize(vecs)


def _outer_power_rows(V, l):
    """Row i of the result is vec(V[i]^{outer l}); V is (n, d)."""
    W = V
    for _ in range(l - 1):
        W = (W[:, :, None] * V[:, None, :]).reshape(V.shape[0], -1)
    return W


def mc_orthogonal_projection(d, l, m, n_samples, rng, chunk=512):
    """Monte-Carlo estimate of E ||v - B Bᵀ v||² for v = vec(u^{outer l}).

    Draws one init U (m uniform sphere columns), builds the tangent basis
    once, then averages the squared orthogonal residual over fresh sphere
    draws u.  Returns (estimate, stderr).
    """
    if d**l > DENSE_GUARD:
        raise ValueError(f"d**l = {d ** l} exceeds the dense guard {DENSE_GUARD}")
    if n_samples < 2:
        raise ValueError("need at least 2 samples for a standard error")
    if m > 0:
        U = np.stack([unit_sphere(rng, d) for _ in range(m)], axis=1)
        B = tangent_subspace_basis(U, l).basis
    else:
        B = np.zeros((d**l, 0))
    sq = np.empty(n_samples)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        V = rng.standard_normal((n, d))
        V /= np.linalg.norm(V, axis=1, keepdims=True)
        W = _outer_power_rows(V, l)
        resid = W - (W @ B) @ B.T
        sq[done : done + n] = np.einsum("ij,ij->i", resid, resid)
        done += n
    estimate = float(sq.mean())
    stderr = float(sq.std(ddof=1) / math.sqrt(n_samples))
    return estimate, stderr


@dataclass
class BoundPoint:
    """One grid point of the bound curve (x = requested log_d m exponent)."""

    d: int
    l: int
    m: int
    analytic_bound: float
    x: float = None
    mc_estimate: float = None
    mc_stderr: float = None
    mc_samples: int = 0


def figure_curve(d_values, l, m_exponents):
    """Analytic bound over a grid of m = round(d^x); CSV-ready rows."""
    points = []
    for d in d_values:
        for x in m_exponents:
            m = int(round(d**x))
            points.append(
                BoundPoint(d=d, l=l, m=m, analytic_bound=analytic_lower_bound(d, l, m), x=x)
            )
    return points


def half_drop_threshold(points):
    """Smallest x at which the bound first falls below half its m=1 value.

    ``points`` are BoundPoints for a single d, ordered by x, containing an
    m=1 entry (x=0 in the usual grids).
    """
    base = next(p.analytic_bound for p in points if p.m == 1)
    for p in points:
        if p.analytic_bound < 0.5 * base:
            return p.x
    return None


@dataclass
class WickFloorReport:
    """Per-direction estimates of bᵀ E[vec(u^{outer l}) vec(u^{outer l})ᵀ] b
    for Gaussian u and random symmetric unit b; the minimum should stay
    above l! up to sampling error."""

    estimates: np.ndarray
    stderrs: np.ndarray
    min_estimate: float
    min_stderr: float


def empirical_wick_floor(d, l, n_samples, rng, directions=20, chunk=2048):
    """Monte-Carlo floor of the quadratic form over random symmetric b."""
    if d**l > DENSE_GUARD:
        raise ValueError(f"d**l = {d ** l} exceeds the dense guard {DENSE_GUARD}")
    if n_samples < 2 or directions < 1:
        raise ValueError("need n_samples >= 2 and directions >= 1")
    bs = []
    while len(bs) < directions:
        raw = tensors.from_ndarray(rng.standard_normal((d,) * l))
        b = tensors.symmetrize(raw).entries
        norm = float(np.linalg.norm(b))
        if norm > 1e-12:
            bs.append(b / norm)
    bmat = np.stack(bs, axis=1)  # (d**l, directions)
    acc = np.zeros(directions)
    acc_sq = np.zeros(directions)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        V = rng.standard_normal((n, d))
        s = (_outer_power_rows(V, l) @ bmat) ** 2  # (n, directions)
        acc += s.sum(axis=0)
        acc_sq += (s**2).sum(axis=0)
        done += n
    mean = acc / n_samples
    var = (acc_sq - n_samples * mean**2) / (n_samples - 1)
    stderr = np.sqrt(np.maximum(var, 0.0) / n_samples)
    k = int(np.argmin(mean))
    return WickFloorReport(
        estimates=mean,
        stderrs=stderr,
        min_estimate=float(mean[k]),
        min_stderr=float(stderr[k]),
    )
