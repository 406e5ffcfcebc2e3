"""The two parameterizations, their losses, and closed-form gradients.

Vanilla model:      T_v = sum_i c_i u_i^{outer l}, loss ½||T_v - T*||².
Two-homogeneous:    T   = sum_i a_i c_i^{l-2} u_i^{outer l} with the coupling
c_i ~ 1/||u_i||, plus the regularizer λ sum_i ĉ_i^{l-2}||u_i||^l.  Component
magnitude scales as ||u_i||², which removes the order-l flatness at zero.

Gradients are implemented from the closed forms, not autodiff: the descent
algorithm freezes c and ĉ while differentiating in U, which autodiff over
the coupled parameterization would get wrong.  The residual tensor is
materialized once and shared across all gradient columns.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, tensors
from .randomness import substream, unit_sphere

COUPLING_RTOL = 1e-9


@dataclass
class Hyperparams:
    """Inputs of the descent algorithm plus problem shape.

    ``scale`` = sqrt(d(m+K)) is the pre-switch magnitude of c_i ||u_i||;
    ``switch_threshold`` = 2 sqrt(m+K) δ is the norm at which a component
    leaves the small-scale regime.
    """

    d: int
    l: int
    r: int
    m: int
    lam: float
    delta: float
    eta: float
    H: int
    K: int
    epsilon: float
    seed: int

    def __post_init__(self):
        if min(self.d, self.l, self.r, self.m, self.H, self.K) < 1:
            raise ValueError("d, l, r, m, H, K must all be >= 1")
        if self.delta <= 0 or self.eta <= 0 or self.epsilon <= 0:
            raise ValueError("delta, eta, epsilon must be positive")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    @property
    def scale(self):
        return math.sqrt(self.d * (self.m + self.K))

    @property
    def switch_threshold(self):
        return 2.0 * math.sqrt(self.m + self.K) * self.delta


def desk_hyperparams(d, l, r, m, epsilon, seed, **overrides):
    """Desk-scale defaults, every one of them overridable.

    δ = 1e-3, η = 1e-2 / d^{(l-2)/2}, λ = 0.1 ε, H = 2000, K = 8.  Small
    enough that the per-iteration descent and orthogonal-subspace bounds
    hold empirically, large enough to finish in seconds.
    """
    values = dict(
        d=d,
        l=l,
        r=r,
        m=m,
        lam=0.1 * epsilon,
        delta=1e-3,
        eta=1e-2 / d ** ((l - 2) / 2),
        H=2000,
        K=8,
        epsilon=epsilon,
        seed=seed,
    )
    values.update(overrides)
    return Hyperparams(**values)


@dataclass
class ModelParams:
    """Learner state: columns U, scalars c, ĉ, signs a, switch flags."""

    d: int
    l: int
    U: np.ndarray
    c: np.ndarray
    chat: np.ndarray
    a: np.ndarray
    switched: np.ndarray

    def __post_init__(self):
        self.U = np.ascontiguousarray(self.U, dtype=np.float64)
        self.c = np.asarray(self.c, dtype=np.float64)
        self.chat = np.asarray(self.chat, dtype=np.float64)
        self.a = np.asarray(self.a, dtype=np.float64)
        self.switched = np.asarray(self.switched, dtype=bool)
        m = self.U.shape[1]
        if self.U.shape[0] != self.d:
            raise ValueError("U must be d x m")
        for name, arr in (("c", self.c), ("chat", self.chat),
                          ("a", self.a), ("switched", self.switched)):
            if arr.shape != (m,):
                raise ValueError(f"{name} must have one entry per column")

    @property
    def m(self):
        return self.U.shape[1]

    def column_norms(self):
        return np.linalg.norm(self.U, axis=0)

    def copy(self):
        return ModelParams(self.d, self.l, self.U.copy(), self.c.copy(),
                           self.chat.copy(), self.a.copy(), self.switched.copy())

    def validate(self, scale=None, rtol=COUPLING_RTOL):
        """Check the coupling invariants; ``scale`` enables the c-check."""
        norms = self.column_norms()
        if np.any(norms <= 0):
            raise ValueError("every column must have positive norm")
        if not np.allclose(self.chat * norms, 1.0, rtol=rtol, atol=0):
            raise ValueError("chat coupling violated: chat_i ||u_i|| != 1")
        if not np.all(np.abs(self.a**2 - 1.0) < 1e-12):
            raise ValueError("signs must be ±1")
        if scale is not None:
            expected = np.where(self.switched, 1.0, scale)
            if not np.allclose(self.c * norms, expected, rtol=rtol, atol=0):
                raise ValueError("c coupling violated for the switch state")


@dataclass
class GroundTruth:
    """Target tensor with a known rank-one decomposition.

    ``weights``/``components`` give T* = sum_i weights[i] components[i]^{outer l};
    ``basis_S`` spans the components, ``tensor`` caches T*.
    """

    r: int
    weights: np.ndarray
    components: np.ndarray = field(repr=False)
    basis_S: tensors.SubspaceBasis = field(repr=False)
    tensor: tensors.SymTensor = field(repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.components = np.ascontiguousarray(self.components, dtype=np.float64)
        if self.weights.shape != (self.r,) or self.components.shape[1] != self.r:
            raise ValueError("weights/components must match r")

    @property
    def d(self):
        return self.components.shape[0]

    @property
    def l(self):
        return self.tensor.order

    def components_in_span(self, tol=1e-10):
        resid = self.basis_S.project_out(self.components)
        return float(np.abs(resid).max(initial=0.0)) <= tol


def assemble(params):
    """Model tensor T = sum_i a_i c_i^{l-2} u_i^{outer l}."""
    w = params.a * params.c ** (params.l - 2)
    flat = kernels.weighted_outer_sum(params.U, w, params.l)
    return tensors.SymTensor(params.l, params.d, flat, symmetric=True)


def residual_flat(params, gt):
    """Flat residual T - T*; the hot loop shares this across gradients."""
    w = params.a * params.c ** (params.l - 2)
    return kernels.weighted_outer_sum(params.U, w, params.l) - gt.tensor.entries


def regularizer(params):
    """sum_i ĉ_i^{l-2} ||u_i||^l (explicit form; equals sum ||u_i||² under
    the coupling, but the shortcut is never taken)."""
    norms = params.column_norms()
    return float(np.sum(params.chat ** (params.l - 2) * norms**params.l))


def loss(params, gt, lam, _residual=None):
    """½||T - T*||² + λ sum_i ĉ_i^{l-2}||u_i||^l."""
    res = residual_flat(params, gt) if _residual is None else _residual
    return 0.5 * float(np.dot(res, res)) + lam * regularizer(params)


def grad_U(params, gt, lam, _residual=None):
    """Gradient in U with c, ĉ treated as constants.

    Column i: l a_i c_i^{l-2} (T - T*)(u_i^{l-1}, I)
              + λ l ĉ_i^{l-2} ||u_i||^{l-2} u_i.
    The second term reduces to λ l u_i whenever the ĉ coupling holds, but is
    computed explicitly so the gradient stays exact at uncoupled points
    (finite-difference probes move U with ĉ frozen).
    """
    l = params.l
    res = residual_flat(params, gt) if _residual is None else _residual
    contr = kernels.contract_leave_one_batch(res, params.U, l)
    data_coef = l * params.a * params.c ** (l - 2)
    norms = params.column_norms()
    reg_coef = lam * l * params.chat ** (l - 2) * norms ** (l - 2)
    return contr * data_coef[None, :] + params.U * reg_coef[None, :]


def vanilla_loss(U, cvec, gt):
    """½|| sum_i c_i u_i^{outer l} - T* ||²."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    cvec = np.asarray(cvec, dtype=np.float64)
    l = gt.tensor.order
    res = kernels.weighted_outer_sum(U, cvec, l) - gt.tensor.entries
    return 0.5 * float(np.dot(res, res))


def vanilla_grad(U, cvec, gt):
    """(d x m, m) gradients of the vanilla loss in (U, c)."""
    U = np.ascontiguousarray(U, dtype=np.float64)
    cvec = np.asarray(cvec, dtype=np.float64)
    l = gt.tensor.order
    res = kernels.weighted_outer_sum(U, cvec, l) - gt.tensor.entries
    gU = l * cvec[None, :] * kernels.contract_leave_one_batch(res, U, l)
    gc = kernels.contract_full_batch(res, U, l)
    return gU, gc


def ground_truth_from_decomposition(weights, components, l):
    """GroundTruth with the given exact rank-one decomposition (no
    normalization applied)."""
    components = np.ascontiguousarray(components, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    d, r = components.shape
    flat = kernels.weighted_outer_sum(components, weights, l)
    basis = tensors.orthonormalize([components[:, i] for i in range(r)])
    return GroundTruth(
        r=r,
        weights=weights,
        components=components,
        basis_S=basis,
        tensor=tensors.SymTensor(l, d, flat, symmetric=True),
    )


def generate_ground_truth(d, r, l, seed):
    """Random unit-norm rank-r target.

    Components are uniform on the sphere (possibly nearly collinear — no
    conditioning is enforced), weights standard normal, then rescaled so
    ||T*|| = 1.
    """
    rng = substream(seed, "ground-truth")
    while True:
        components = np.stack([unit_sphere(rng, d) for _ in range(r)], axis=1)
        weights = rng.standard_normal(r)
        flat = kernels.weighted_outer_sum(components, weights, l)
        norm = float(np.linalg.norm(flat))
        if norm > 1e-12:
            break
    weights = weights / norm
    basis = tensors.orthonormalize([components[:, i] for i in range(r)])
    return GroundTruth(
        r=r,
        weights=weights,
        components=components,
        basis_S=basis,
        tensor=tensors.SymTensor(l, d, flat / norm, symmetric=True),
    )
