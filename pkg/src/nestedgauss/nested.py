"""Nested Gaussian filter: a sigma-point layer over the static parameters
driving a bank of extended Kalman filters over the state.

Each outer reference point theta^i owns one inner EKF.  At every
observation the inner filters produce predictive likelihoods that reweight
the points; the reweighted first two moments define the new parameter
belief, from which a fresh point set is generated.  In recursive mode an
inner filter is only replayed from scratch when its point moved by more
than ``lam`` times its own magnitude (in the configured p-norm) since the
previous step; otherwise its stored belief is reused.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _fastpath
from .ekf import FilterDivergedError, InnerFilterState, ekf_run_from_scratch, ekf_step
from .gaussian import (
    GaussianBelief,
    SigmaPointSet,
    cubature_points,
    moments_from_points,
    psd_repair,
    unscented_points,
)
from .models import ModelSpec, Trajectory

P_NORMS = (1, 2, math.inf)


class LikelihoodUnderflowError(RuntimeError):
    """Every reference point's likelihood underflowed to zero."""


@dataclass(frozen=True)
class NestedFilterConfig:
    """Tuning knobs of the outer layer.

    ``lam`` is the relative recursion threshold, ``norm`` the p-norm used by
    the threshold test (1, 2 or math.inf), ``point_rule`` selects the
    unscented (2d+1 points) or cubature (2d points) rule, and ``micro_steps``
    is the number of prediction micro-steps between observations.  With
    ``recursive=False`` every inner filter is replayed from scratch at every
    observation (the non-recursive variant of the method).
    """

    lam: float = 1e-3
    norm: float = 2
    point_rule: str = "unscented"
    kappa: float | None = None
    micro_steps: int = 5
    recursive: bool = True
    # "spread" uses only the between-filter spread for the state covariance;
    # "mixture" additionally mixes in the within-filter covariances.
    state_cov_mode: str = "spread"

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.norm not in P_NORMS:
            raise ValueError("norm must be one of 1, 2, inf")
        if self.point_rule not in ("unscented", "cubature"):
            raise ValueError("point_rule must be 'unscented' or 'cubature'")
        if self.state_cov_mode not in ("spread", "mixture"):
            raise ValueError("state_cov_mode must be 'spread' or 'mixture'")

    def generate_points(self, belief: GaussianBelief) -> SigmaPointSet:
        if self.point_rule == "cubature":
            return cubature_points(belief)
        return unscented_points(belief, self.kappa)


@dataclass(frozen=True)
class NestedFilterState:
    """Everything carried between observations.

    ``points`` are the reference points for the *next* observation,
    ``prev_points`` the ones they will be compared against by the threshold
    test, and ``bank[i]`` the inner posterior conditioned on
    ``prev_points[i]``'s parameter value.
    """

    param_belief: GaussianBelief
    points: SigmaPointSet
    prev_points: SigmaPointSet
    bank: tuple[InnerFilterState, ...]
    state_belief: GaussianBelief
    log_normalizer: float = float("nan")
    last_restart_count: int = 0
    obs_index: int = 0


def initialize(
    prior_theta: GaussianBelief,
    prior_x: GaussianBelief,
    config: NestedFilterConfig,
) -> NestedFilterState:
    """Draw the reference points from the parameter prior and point every
    inner filter at the state prior."""
    points = config.generate_points(prior_theta)
    bank = tuple(
        InnerFilterState(prior_x, theta.copy(), 0) for theta in points.points
    )
    return NestedFilterState(
        param_belief=prior_theta,
        points=points,
        prev_points=points,
        bank=bank,
        state_belief=prior_x,
    )


def norm_test(theta_new, theta_old, lam: float, norm: float = 2) -> bool:
    """True iff ||theta_new - theta_old||_p < lam * ||theta_old||_p.

    True means the recursive branch (reuse the stored inner belief) is
    taken.  A zero-norm theta_old makes the relative test ill-defined, so
    the test conservatively fails and forces a from-scratch replay.
    """
    if norm not in P_NORMS:
        raise ValueError("norm must be one of 1, 2, inf")
    theta_new = np.asarray(theta_new, dtype=float)
    theta_old = np.asarray(theta_old, dtype=float)
    if theta_new.shape != theta_old.shape:
        raise ValueError("dimension mismatch")
    scale = np.linalg.norm(theta_old, ord=norm)
    if scale == 0.0:
        return False
    return bool(np.linalg.norm(theta_new - theta_old, ord=norm) < lam * scale)


def posterior_weights(
    log_likelihoods: Sequence[float],
    prior_weights: Sequence[float],
) -> tuple[np.ndarray, float]:
    """Normalize likelihood-times-weight products in the log domain.

    Returns the posterior weights (summing to 1 exactly) and the log of the
    normalizer, which approximates log p(y_t | y_{1:t-1}).
    """
    ll = np.asarray(log_likelihoods, dtype=float)
    w = np.asarray(prior_weights, dtype=float)
    if ll.shape != w.shape:
        raise ValueError("length mismatch")
    with np.errstate(divide="ignore"):
        logw = ll + np.log(w)
    m = np.max(logw)
    if not np.isfinite(m):
        raise LikelihoodUnderflowError("total likelihood underflow")
    shifted = np.exp(logw - m)
    total = shifted.sum()
    return shifted / total, float(m + np.log(total))


def estimate_parameters(points: SigmaPointSet, weights) -> GaussianBelief:
    """Posterior-weighted mean and spread of the reference points."""
    w = np.asarray(weights, dtype=float)
    pts = points.points
    if w.size != pts.shape[0]:
        raise ValueError("length mismatch")
    mean = w @ pts
    centered = pts - mean
    cov = (centered * w[:, None]).T @ centered
    return GaussianBelief(mean, psd_repair(cov))


def estimate_state(
    bank: Sequence[InnerFilterState],
    weights,
    mode: str = "spread",
) -> GaussianBelief:
    """Mixture estimate over the inner filters.

    The default "spread" covariance uses only the dispersion of the bank
    means; "mixture" adds the weighted within-filter covariances (the full
    Gaussian-mixture covariance).
    """
    w = np.asarray(weights, dtype=float)
    if w.size != len(bank):
        raise ValueError("length mismatch")
    means = np.stack([s.belief.mean for s in bank])
    mean = w @ means
    centered = means - mean
    cov = (centered * w[:, None]).T @ centered
    if mode == "mixture":
        cov = cov + sum(wi * s.belief.cov for wi, s in zip(w, bank))
    return GaussianBelief(mean, psd_repair(cov))


def _history_array(history, dy: int) -> np.ndarray:
    if isinstance(history, Trajectory):
        return history.observations
    return np.atleast_2d(np.asarray(history, dtype=float)).reshape(-1, dy)


def outer_step(
    state: NestedFilterState,
    y: np.ndarray,
    obs_index: int,
    model: ModelSpec,
    prior_x: GaussianBelief,
    history,
    config: NestedFilterConfig,
) -> NestedFilterState:
    """Advance the nested filter by one observation.

    ``history`` must contain all observations up to and including
    ``obs_index`` (1-based); it is only consulted for from-scratch replays.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    ys = _history_array(history, model.dy)
    if ys.shape[0] < obs_index:
        raise ValueError("history is shorter than obs_index")
    pts = state.points.points
    prev = state.prev_points.points
    n_pts = pts.shape[0]

    reuse = np.zeros(n_pts, dtype=bool)
    if config.recursive:
        for i in range(n_pts):
            reuse[i] = norm_test(pts[i], prev[i], config.lam, config.norm)

    if model.lorenz is not None:
        bank, lls = _advance_bank_lorenz(state, pts, reuse, y, obs_index, ys, model, prior_x, config)
    else:
        bank, lls = _advance_bank_generic(state, pts, reuse, y, obs_index, ys, model, prior_x, config)

    weights, log_norm = posterior_weights(lls, state.points.weights)
    param_belief = estimate_parameters(state.points, weights)
    state_belief = estimate_state(bank, weights, config.state_cov_mode)
    new_points = config.generate_points(param_belief)
    return NestedFilterState(
        param_belief=param_belief,
        points=new_points,
        prev_points=state.points,
        bank=tuple(bank),
        state_belief=state_belief,
        log_normalizer=log_norm,
        last_restart_count=int(n_pts - reuse.sum()),
        obs_index=obs_index,
    )


def _advance_bank_generic(state, pts, reuse, y, obs_index, ys, model, prior_x, config):
    bank = []
    lls = np.empty(pts.shape[0])
    for i, theta in enumerate(pts):
        if reuse[i]:
            inner, ll = ekf_step(state.bank[i], y, theta, model, config.micro_steps, obs_index)
        else:
            inner, ll = ekf_run_from_scratch(
                theta, model, prior_x, ys[:obs_index], config.micro_steps
            )
            inner = replace(inner, last_obs_index=obs_index)
        bank.append(inner)
        lls[i] = ll
    return bank, lls


def _advance_bank_lorenz(state, pts, reuse, y, obs_index, ys, model, prior_x, config):
    """Compiled fast path for the Lorenz 63 model; same contract as the
    generic version."""
    cfg = model.lorenz
    q = cfg.sigma2 * cfg.delta
    G = cfg.obs_matrix
    bank = []
    lls = np.empty(pts.shape[0])
    for i, theta in enumerate(pts):
        if reuse[i]:
            m, C, ll, ok = _fastpath.ekf_step_kernel(
                state.bank[i].belief.mean,
                state.bank[i].belief.cov,
                theta,
                cfg.delta,
                q,
                G,
                cfg.sigma_y2,
                y,
                config.micro_steps,
            )
        else:
            m, C, ll, ok = _fastpath.ekf_replay_kernel(
                theta,
                prior_x.mean,
                prior_x.cov,
                ys[:obs_index],
                cfg.delta,
                q,
                G,
                cfg.sigma_y2,
                config.micro_steps,
            )
        if not ok:
            raise FilterDivergedError("filter diverged")
        bank.append(InnerFilterState(GaussianBelief(m, C), theta.copy(), obs_index))
        lls[i] = ll
    return bank, lls
