"""The re-initialized descent algorithm, its metrics, and a vanilla baseline.

One run executes K epochs; each epoch redraws the smallest-norm component at
a tiny radius δ and then takes H gradient steps in U with the scalars c, ĉ
held constant inside each step and rescaled afterwards so the couplings
c_i ||u_i|| and ĉ_i ||u_i|| are preserved.  A component whose norm first
climbs past 2 sqrt(m+K) δ has its c rescaled once by 1/sqrt(d(m+K)) (the
"switch"), taking it from the amplified small-norm regime to the plain
1/||u|| coupling.

A single run is sequential and deterministic given (hyper, gt, seed); seed
sweeps parallelize across runs with no shared mutable state.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import model, tensors
from .randomness import rademacher, substream, unit_sphere

logger = logging.getLogger(__name__)

MIN_PROJECTION_NORM = 1e-12


class DivergenceError(RuntimeError):
    """Loss became non-finite or exceeded the divergence guard."""


class ColumnCollapseError(RuntimeError):
    """A gradient step drove a column to exactly zero norm."""


@dataclass
class StepEvents:
    """Per-step events: indices of components whose switch fired."""

    switches: list = field(default_factory=list)


@dataclass
class RunMetrics:
    """Per-iteration and per-epoch time series of one run.

    Iteration arrays all share one length (iteration 0 is the initial
    state).  ``tracked_*`` follow the component re-initialized in the
    current epoch (NaN before the first epoch).  ``path_len`` accumulates
    sum_tau ||T_tau - T_{tau-1}|| within the current epoch.
    """

    iteration: np.ndarray
    epoch: np.ndarray
    loss: np.ndarray
    residual: np.ndarray
    pbu_sq: np.ndarray
    path_len: np.ndarray
    tracked_norm: np.ndarray
    tracked_corr: np.ndarray
    reinit_index: list
    reinit_correlation: list
    epoch_start_iter: list
    switch_events: list  # (component, iteration)


@dataclass
class RunOutcome:
    success: bool
    final_residual: float
    iterations: int
    epochs_used: int


def init_params(hyper, seed=None):
    """Fresh parameters: u_i = δ · (uniform sphere), a_i = ±1,
    c_i = sqrt(d(m+K))/||u_i||, ĉ_i = 1/||u_i||, switch flags clear."""
    seed = hyper.seed if seed is None else seed
    d, m = hyper.d, hyper.m
    U = np.empty((d, m))
    a = np.empty(m)
    for i in range(m):
        rng = substream(seed, "init", i)
        U[:, i] = hyper.delta * unit_sphere(rng, d)
        a[i] = rademacher(rng)
    norms = np.linalg.norm(U, axis=0)
    return model.ModelParams(
        d=d,
        l=hyper.l,
        U=U,
        c=hyper.scale / norms,
        chat=1.0 / norms,
        a=a,
        switched=np.zeros(m, dtype=bool),
    )


def reinit_smallest(params, hyper, rng):
    """Redraw the minimum-norm column (ties -> lowest index) at radius δ.

    Returns the updated params and the re-initialized index.  The new
    column gets a fresh sign, pre-switch scalars, and a cleared flag.
    """
    norms = params.column_norms()
    idx = int(np.argmin(norms))  # argmin takes the first minimum
    out = params.copy()
    out.U[:, idx] = hyper.delta * unit_sphere(rng, params.d)
    new_norm = float(np.linalg.norm(out.U[:, idx]))
    out.a[idx] = rademacher(rng)
    out.c[idx] = hyper.scale / new_norm
    out.chat[idx] = 1.0 / new_norm
    out.switched[idx] = False
    return out, idx


def gd_step(params, gt, hyper, _residual=None):
    """One descent iteration: U-step, scalar rescale, switch check.

    (1) U' = U - η ∇_U (c, ĉ constant);
    (2) c_i' = c_i ||u_i|| / ||u_i'||, likewise ĉ_i';
    (3) for each unswitched i with ||u_i|| <= 2 sqrt(m+K) δ < ||u_i'||:
        c_i' /= sqrt(d(m+K)) and the flag is set, once per (re)init.
    """
    g = model.grad_U(params, gt, hyper.lam, _residual=_residual)
    U2 = params.U - hyper.eta * g
    n1 = params.column_norms()
    n2 = np.linalg.norm(U2, axis=0)
    if np.any(n2 == 0.0):
        dead = np.nonzero(n2 == 0.0)[0]
        raise ColumnCollapseError(
            f"column(s) {dead.tolist()} hit exactly zero norm; "
            "the step size is too large"
        )
    ratio = n1 / n2
    c2 = params.c * ratio
    chat2 = params.chat * ratio
    thr = hyper.switch_threshold
    firing = (~params.switched) & (n1 <= thr) & (thr < n2)
    c2[firing] /= hyper.scale
    events = StepEvents(switches=np.nonzero(firing)[0].tolist())
    out = model.ModelParams(
        d=params.d,
        l=params.l,
        U=U2,
        c=c2,
        chat=chat2,
        a=params.a.copy(),
        switched=params.switched | firing,
    )
    return out, events


def correlation(params, component_idx, gt):
    """<P_{S⊗l} T - T*, a · (P_S u / ||P_S u||)^{outer l}> for one component.

    The quantity whose sign decides whether a freshly drawn component grows:
    negative values feed exponential norm growth.
    """
    u = params.U[:, component_idx]
    pu = gt.basis_S.project(u)
    n = float(np.linalg.norm(pu))
    if n < MIN_PROJECTION_NORM:
        raise ValueError("component is numerically orthogonal to the target span")
    v = pu / n
    projected = tensors.project_all_modes(model.assemble(params), gt.basis_S)
    shifted = tensors.weighted_sum([1.0, -1.0], [projected, gt.tensor])
    return float(params.a[component_idx]) * tensors.contract_full(
        shifted, [v] * params.l
    )


def _correlation_from_residual(res_flat, params, component_idx, gt):
    """Fast in-run form of :func:`correlation`.

    Because the normalized P_S u lies in S and T* lives in S^{outer l},
    projecting T mode-wise is equivalent to contracting the plain residual —
    one rank-one contraction instead of l dense projections.
    """
    from . import kernels

    u = params.U[:, component_idx]
    pu = gt.basis_S.project(u)
    n = float(np.linalg.norm(pu))
    if n < MIN_PROJECTION_NORM:
        raise ValueError("component is numerically orthogonal to the target span")
    v = pu / n
    q = kernels.outer_power_flat(v, params.l)
    return float(params.a[component_idx]) * float(np.dot(res_flat, q))


def run(hyper, gt, seed=None, params0=None, on_iteration=None):
    """Execute the full algorithm; returns (params, RunMetrics, RunOutcome).

    Stops as soon as ||T - T*|| <= ε (checked every iteration, including the
    initial state).  Raises DivergenceError on non-finite loss.
    ``on_iteration``, if given, receives a dict with keys iter, epoch, loss,
    residual, pbu_sq, path_len immediately after each row is recorded.
    """
    seed = hyper.seed if seed is None else seed
    params = init_params(hyper, seed=seed) if params0 is None else params0.copy()

    it_l, ep_l, loss_l, res_l, pbu_l, path_l = [], [], [], [], [], []
    tnorm_l, tcorr_l = [], []
    reinit_index, reinit_corr, epoch_start = [], [], []
    switch_events = []

    target = gt.tensor.entries

    def record(iteration, epoch, res_flat, path, tracked):
        loss_val = model.loss(params, gt, hyper.lam, _residual=res_flat)
        if not np.isfinite(loss_val):
            raise DivergenceError(
                f"non-finite loss at epoch {epoch}, iteration {iteration}: "
                f"{loss_val!r} (eta too large?)"
            )
        it_l.append(iteration)
        ep_l.append(epoch)
        loss_l.append(loss_val)
        res_l.append(float(np.linalg.norm(res_flat)))
        pbu_l.append(float(np.sum(gt.basis_S.project_out(params.U) ** 2)))
        path_l.append(path)
        if tracked is None:
            tnorm_l.append(np.nan)
            tcorr_l.append(np.nan)
        else:
            pu = gt.basis_S.project(params.U[:, tracked])
            tnorm_l.append(float(np.linalg.norm(pu)))
            tcorr_l.append(_correlation_from_residual(res_flat, params, tracked, gt))
        if on_iteration is not None:
            on_iteration(
                {
                    "iter": iteration,
                    "epoch": epoch,
                    "loss": loss_val,
                    "residual": res_l[-1],
                    "pbu_sq": pbu_l[-1],
                    "path_len": path,
                }
            )
        return res_l[-1]

    iteration = 0
    res = model.residual_flat(params, gt)
    resid_norm = record(0, 0, res, 0.0, None)
    success = resid_norm <= hyper.epsilon
    epochs_used = 0

    if not success:
        for epoch in range(1, hyper.K + 1):
            rng = substream(seed, "reinit", epoch)
            params, idx = reinit_smallest(params, hyper, rng)
            res = model.residual_flat(params, gt)
            reinit_index.append(idx)
            reinit_corr.append(_correlation_from_residual(res, params, idx, gt))
            epoch_start.append(iteration + 1)
            epochs_used = epoch
            prev_model = res + target
            path = 0.0
            stop = False
            for _ in range(hyper.H):
                params, events = gd_step(params, gt, hyper, _residual=res)
                cur_model = model.residual_flat(params, gt) + target
                res = cur_model - target
                iteration += 1
                path += float(np.linalg.norm(cur_model - prev_model))
                prev_model = cur_model
                for comp in events.switches:
                    switch_events.append((comp, iteration))
                resid_norm = record(iteration, epoch, res, path, idx)
                if resid_norm <= hyper.epsilon:
                    success = True
                    stop = True
                    break
            if stop:
                break
        logger.debug(
            "run seed=%s finished: success=%s residual=%.3e iterations=%d",
            seed, success, resid_norm, iteration,
        )

    metrics = RunMetrics(
        iteration=np.array(it_l, dtype=np.int64),
        epoch=np.array(ep_l, dtype=np.int64),
        loss=np.array(loss_l),
        residual=np.array(res_l),
        pbu_sq=np.array(pbu_l),
        path_len=np.array(path_l),
        tracked_norm=np.array(tnorm_l),
        tracked_corr=np.array(tcorr_l),
        reinit_index=reinit_index,
        reinit_correlation=reinit_corr,
        epoch_start_iter=epoch_start,
        switch_events=switch_events,
    )
    outcome = RunOutcome(
        success=bool(success),
        final_residual=float(resid_norm),
        iterations=iteration,
        epochs_used=epochs_used,
    )
    return params, metrics, outcome


@dataclass
class VanillaRun:
    U: np.ndarray
    c: np.ndarray
    losses: np.ndarray


def vanilla_run(U0, c0, gt, eta, steps, divergence_guard=1e6, on_step=None):
    """Plain simultaneous gradient descent on the vanilla loss.

    Returns the final (U, c) and the loss series (length steps + 1,
    including the starting value).  Raises DivergenceError past the guard.
    ``on_step``, if given, receives (step, loss) for every recorded value.
    """
    U = np.array(U0, dtype=np.float64)
    c = np.array(c0, dtype=np.float64)
    losses = [model.vanilla_loss(U, c, gt)]
    if on_step is not None:
        on_step(0, losses[0])
    for t in range(steps):
        gU, gc = model.vanilla_grad(U, c, gt)
        U = U - eta * gU
        c = c - eta * gc
        val = model.vanilla_loss(U, c, gt)
        if not np.isfinite(val) or val > divergence_guard:
            raise DivergenceError(f"vanilla descent diverged at step {t + 1}: {val!r}")
        losses.append(val)
        if on_step is not None:
            on_step(t + 1, val)
    return VanillaRun(U=U, c=c, losses=np.array(losses))


@dataclass
class GrowthWindow:
    """One maximal stretch of iterations with correlation below threshold."""

    epoch: int
    start: int
    end: int  # inclusive iteration indices into the metric arrays
    strictly_increasing: bool
    gamma: float  # min per-step relative growth of ||P_S u||², divided by η


def growth_windows(metrics, threshold, eta, min_length=2):
    """Diagnostic for the norm-blow-up mechanism.

    For every maximal window where the tracked correlation stays below
    ``threshold`` (a negative number), report whether the tracked norm rose
    strictly throughout and the measured growth exponent γ such that
    ||P_S u||² grew at least like (1 + γη) per step inside the window.
    """
    windows = []
    n = len(metrics.iteration)
    t = 0
    while t < n:
        c = metrics.tracked_corr[t]
        if np.isfinite(c) and c < threshold:
            start = t
            epoch = metrics.epoch[t]
            while (
                t + 1 < n
                and metrics.epoch[t + 1] == epoch
                and np.isfinite(metrics.tracked_corr[t + 1])
                and metrics.tracked_corr[t + 1] < threshold
            ):
                t += 1
            if t - start + 1 >= min_length:
                norms = metrics.tracked_norm[start : t + 1]
                ratios = (norms[1:] / norms[:-1]) ** 2 - 1.0
                windows.append(
                    GrowthWindow(
                        epoch=int(epoch),
                        start=start,
                        end=t,
                        strictly_increasing=bool(np.all(np.diff(norms) > 0)),
                        gamma=float(ratios.min() / eta),
                    )
                )
        t += 1
    return windows
