"""Exact counterexample machinery.

Closed-form targets for which plain gradient descent provably stalls:
structured residual tensors, the stuck points for both parameterizations,
an explicit zero-loss decomposition obtained from a Vandermonde system, and
a numeric stationarity certifier (analytic/finite-difference gradient plus
sampled second-order quotients).
"""
import itertools
from dataclasses import dataclass

import numpy as np

from . import kernels, model, tensors
from .randomness import substream, unit_sphere


def _basis_vec(d, idx):
    e = np.zeros(d)
    e[idx] = 1.0
    return e


def residual_one_sided(d, r, l, base_idx=0):
    """Sum over j of all index patterns with two j's and l-2 base indices.

    Entries are 1 exactly where the multi-index holds two copies of some
    j in {2..r+1} (0-based: 1..r) and l-2 copies of ``base_idx``; 0
    elsewhere.  Patterns are enumerated directly, so no permutation is
    counted twice.
    """
    if l < 3:
        raise ValueError("order must be >= 3")
    if not (1 <= r < d):
        raise ValueError("need d > r >= 1")
    if not (0 <= base_idx < d) or 1 <= base_idx <= r:
        raise ValueError("base index collides with the j range")
    arr = np.zeros((d,) * l)
    for j in range(1, r + 1):
        for p, q in itertools.combinations(range(l), 2):
            idx = [base_idx] * l
            idx[p] = j
            idx[q] = j
            arr[tuple(idx)] = 1.0
    return tensors.from_ndarray(arr, symmetric=True)


def residual_R(d, r, l):
    """The one-sided residual based at e1; ||R||² = r · C(l,2)."""
    return residual_one_sided(d, r, l, base_idx=0)


def residual_two_sided(d, r, l):
    """One-sided residual at e1 minus its mirror at e_d."""
    if d < 3:
        raise ValueError("need d >= 3 to separate the two base directions")
    plus = residual_one_sided(d, r, l, base_idx=0)
    minus = residual_one_sided(d, r, l, base_idx=d - 1)
    return tensors.weighted_sum([1.0, -1.0], [plus, minus])


def default_nodes(l):
    """(1, -1, 2, -2, 3, -3, ...) truncated to l+1 values."""
    nodes = []
    k = 1
    while len(nodes) < l + 1:
        nodes.append(float(k))
        if len(nodes) < l + 1:
            nodes.append(float(-k))
        k += 1
    return tuple(nodes)


def vandermonde_rank_one_split(l, nodes=None):
    """Weights w solving sum_i w_i (e1 + b_i e_j)^{outer l} = R_j.

    Solves the (l+1)x(l+1) Vandermonde system sum_i w_i b_i^k = [k == 2]
    for k = 0..l (LU with partial pivoting).  Any set of l+1 pairwise
    distinct nodes works; symmetric small integers keep it well
    conditioned.
    """
    nodes = default_nodes(l) if nodes is None else tuple(float(b) for b in nodes)
    if len(nodes) != l + 1:
        raise ValueError(f"need exactly {l + 1} nodes")
    if len(set(nodes)) != len(nodes):
        raise ValueError("nodes must be pairwise distinct (singular system)")
    M = np.vander(np.asarray(nodes), N=l + 1, increasing=True).T  # M[k, i] = b_i^k
    rhs = np.zeros(l + 1)
    rhs[2] = 1.0
    return np.linalg.solve(M, rhs)


def rank_one_split_terms(d, j, l, base_idx=0, nodes=None):
    """R_j(base) as l+1 weighted unit rank-one terms.

    Returns [(weight, unit vector)] with
    sum_i weight_i · vector_i^{outer l} = the j-summand of
    :func:`residual_one_sided`.
    """
    nodes = default_nodes(l) if nodes is None else tuple(float(b) for b in nodes)
    w = vandermonde_rank_one_split(l, nodes)
    terms = []
    for b, wi in zip(nodes, w):
        v = _basis_vec(d, base_idx) + b * _basis_vec(d, j)
        n = float(np.linalg.norm(v))
        terms.append((float(wi) * n**l, v / n))
    return terms


def bad_local_min_vanilla(d, r, l, m):
    """The stuck point of the vanilla loss: all mass piled on e1.

    u_i = e1 / m^{1/l}, c_i = 1, so T = e1^{outer l}; the target is
    T* = T - R with R the one-sided residual.  Loss there is l(l-1)r/4,
    the gradient vanishes, yet zero loss is attainable with
    m >= r(l+1)+1 components.  The returned gt tensor is exact (integer
    entries) and not unit-norm.
    """
    if l < 3 or not (1 <= r < d):
        raise ValueError("need l >= 3 and d > r >= 1")
    if m < r * (l + 1) + 1:
        raise ValueError(f"need m >= r(l+1)+1 = {r * (l + 1) + 1}")
    U = np.tile(_basis_vec(d, 0)[:, None] / m ** (1.0 / l), (1, m))
    cvec = np.ones(m)
    e1_pow = tensors.outer_power(_basis_vec(d, 0), l)
    target = tensors.weighted_sum([1.0, -1.0], [e1_pow, residual_R(d, r, l)])
    gt = _decomposed_ground_truth(global_min_decomposition(d, r, l), target)
    return U, cvec, gt


def global_min_decomposition(d, r, l, nodes=None):
    """Zero-loss vanilla decomposition of the stuck-point target.

    The target is e1^{outer l} - sum_j R_j, so the split of each R_j
    enters with weight -1; the r(l+1)+1 returned (weight, unit vector)
    terms assemble to the exact target.
    """
    if l < 3 or not (1 <= r < d):
        raise ValueError("need l >= 3 and d > r >= 1")
    terms = [(1.0, _basis_vec(d, 0))]
    for j in range(1, r + 1):
        for w, v in rank_one_split_terms(d, j, l, base_idx=0, nodes=nodes):
            terms.append((-w, v))
    return terms


def _decomposed_ground_truth(terms, exact_tensor):
    """GroundTruth from (weight, vector) terms with a separately supplied
    exact tensor (avoids accumulating float fuzz into the target)."""
    weights = np.array([w for w, _ in terms])
    components = np.stack([v for _, v in terms], axis=1)
    basis = tensors.orthonormalize([v for _, v in terms])
    return model.GroundTruth(
        r=len(terms),
        weights=weights,
        components=components,
        basis_S=basis,
        tensor=exact_tensor,
    )


def bad_local_min_2homo(d, r, l, m):
    """The stuck point of the coupled parameterization.

    Half the components carry +1 on e1 at radius sqrt(1/m'), the rest -1
    on e_d, all post-switch (c_i = 1/||u_i||), so T = e1^l - e_d^l; the
    target is T - R₂ with R₂ the two-sided residual.  Loss (λ=0) is
    l(l-1)r/2 and the gradient vanishes in every u_i and every c_i even
    with the c_i treated as free variables.
    """
    if l < 3 or not (1 <= r <= d - 2):
        raise ValueError("need l >= 3 and d - 2 >= r >= 1")
    if m < 4 * r * (l + 1) + 2:
        raise ValueError(f"need m >= 4r(l+1)+2 = {4 * r * (l + 1) + 2}")
    mprime = m // 2
    U = np.zeros((d, m))
    a = np.empty(m)
    U[0, :mprime] = np.sqrt(1.0 / mprime)
    a[:mprime] = 1.0
    U[d - 1, mprime:] = np.sqrt(1.0 / (m - mprime))
    a[mprime:] = -1.0
    norms = np.linalg.norm(U, axis=0)
    params = model.ModelParams(
        d=d,
        l=l,
        U=U,
        c=1.0 / norms,
        chat=1.0 / norms,
        a=a,
        switched=np.ones(m, dtype=bool),
    )

    e1_pow = tensors.outer_power(_basis_vec(d, 0), l)
    ed_pow = tensors.outer_power(_basis_vec(d, d - 1), l)
    target = tensors.weighted_sum(
        [1.0, -1.0, -1.0],
        [e1_pow, ed_pow, residual_two_sided(d, r, l)],
    )
    terms = [(1.0, _basis_vec(d, 0)), (-1.0, _basis_vec(d, d - 1))]
    for j in range(1, r + 1):
        for w, v in rank_one_split_terms(d, j, l, base_idx=0):
            terms.append((-w, v))
        for w, v in rank_one_split_terms(d, j, l, base_idx=d - 1):
            terms.append((w, v))
    gt = _decomposed_ground_truth(terms, target)
    return params, gt


def loss_2homo_free(U, cvec, a, gt):
    """½||sum_i a_i c_i^{l-2} u_i^{outer l} - T*||² with c free (no
    coupling, no regularizer) — the certification objective."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    cvec = np.asarray(cvec, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    l = gt.tensor.order
    res = kernels.weighted_outer_sum(U, a * cvec ** (l - 2), l) - gt.tensor.entries
    return 0.5 * float(np.dot(res, res))


def grad_2homo_free(U, cvec, a, gt):
    """(d x m, m) gradients of :func:`loss_2homo_free` in (U, c)."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    cvec = np.asarray(cvec, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    l = gt.tensor.order
    res = kernels.weighted_outer_sum(U, a * cvec ** (l - 2), l) - gt.tensor.entries
    contr = kernels.contract_leave_one_batch(res, U, l)
    gU = l * (a * cvec ** (l - 2))[None, :] * contr
    gc = (l - 2) * a * cvec ** (l - 3) * kernels.contract_full_batch(res, U, l)
    return gU, gc


@dataclass
class StationarityReport:
    """Numeric stationarity evidence at a point.

    ``gradient_norm`` uses the analytic gradient when one was supplied and
    the central finite-difference gradient otherwise (the latter is always
    reported separately).  ``quotients`` are (f(x + tΔ) - f(x)) / t² for
    random unit directions Δ — nonnegative up to tolerance at a local
    minimum, exactly 0 along flat directions.
    """

    gradient_norm: float
    fd_gradient_norm: float
    quotients: np.ndarray
    min_quotient: float
    loss_value: float


def certify_stationary(loss_fn, point, probes=200, t=1e-4, grad_fn=None,
                       fd_step=1e-6, seed=0):
    """Probe first- and second-order behavior of ``loss_fn`` at ``point``."""
    if t <= 0 or probes < 1:
        raise ValueError("need t > 0 and probes >= 1")
    x = np.asarray(point, dtype=np.float64)
    f0 = float(loss_fn(x))
    if not np.isfinite(f0):
        raise ValueError("loss is not finite at the given point")
    fd = np.empty(x.size)
    for jj in range(x.size):
        step = np.zeros(x.size)
        step[jj] = fd_step
        fd[jj] = (float(loss_fn(x + step)) - float(loss_fn(x - step))) / (2 * fd_step)
    fd_norm = float(np.linalg.norm(fd))
    if grad_fn is not None:
        gradient_norm = float(np.linalg.norm(np.asarray(grad_fn(x))))
    else:
        gradient_norm = fd_norm
    rng = substream(seed, "stationarity-probes")
    quotients = np.empty(probes)
    for p in range(probes):
        delta = unit_sphere(rng, x.size)
        fp = float(loss_fn(x + t * delta))
        if not np.isfinite(fp):
            raise ValueError("loss is not finite at a probe point")
        quotients[p] = (fp - f0) / t**2
    return StationarityReport(
        gradient_norm=gradient_norm,
        fd_gradient_norm=fd_norm,
        quotients=quotients,
        min_quotient=float(quotients.min()),
        loss_value=f0,
    )


def perturb_coupled(params, magnitude, seed):
    """Jitter U by ``magnitude``-sized Gaussian noise and re-couple c, ĉ so
    each product c_i ||u_i|| (and ĉ_i ||u_i|| = 1) is preserved."""
    rng = substream(seed, "perturb")
    out = params.copy()
    old_norms = out.column_norms()
    out.U = out.U + magnitude * rng.standard_normal(out.U.shape)
    new_norms = out.column_norms()
    if np.any(new_norms <= 0):
        raise ValueError("perturbation collapsed a column")
    out.c = out.c * old_norms / new_norms
    out.chat = out.chat * old_norms / new_norms
    return out
