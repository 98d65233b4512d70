"""Extended Kalman filter conditional on a fixed parameter vector.

This is the inner layer of the nested filter: for each outer reference
point theta it predicts the state over the inter-observation micro-steps,
assimilates the observation, and reports the predictive log-likelihood
log p(y_t | y_{1:t-1}, theta) used to reweight the outer layer.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg

from .gaussian import DegenerateCovarianceError, GaussianBelief, psd_repair
from .models import ModelSpec, Trajectory


class FilterDivergedError(RuntimeError):
    """The filter produced non-finite estimates."""


@dataclass(frozen=True)
class InnerFilterState:
    """Posterior belief over the state, conditioned on one parameter vector."""

    belief: GaussianBelief
    last_theta: np.ndarray
    last_obs_index: int = 0


def ekf_predict(
    state: InnerFilterState | GaussianBelief,
    theta: np.ndarray,
    model: ModelSpec,
    micro_steps: int = 1,
) -> GaussianBelief:
    """Iterate the EKF prediction (mean through the drift, covariance through
    the Jacobian sandwich plus the state noise) ``micro_steps`` times."""
    if micro_steps < 1:
        raise ValueError("micro_steps must be >= 1")
    belief = state.belief if isinstance(state, InnerFilterState) else state
    theta = np.asarray(theta, dtype=float)
    m = belief.mean
    C = belief.cov
    V = model.state_noise_cov
    for _ in range(micro_steps):
        J = model.drift_jacobian(m, theta)
        m = model.drift(m, theta)
        C = J @ C @ J.T + V
    if not (np.all(np.isfinite(m)) and np.all(np.isfinite(C))):
        raise FilterDivergedError("filter diverged")
    return GaussianBelief(m, psd_repair(C))


def _innovation_factor(predicted: GaussianBelief, theta, model: ModelSpec):
    Jg = np.atleast_2d(model.obs_jacobian(predicted.mean, theta))
    S = Jg @ predicted.cov @ Jg.T + model.obs_noise_cov
    S = 0.5 * (S + S.T)
    try:
        chol = scipy.linalg.cho_factor(S, lower=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateCovarianceError("degenerate innovation") from exc
    return Jg, S, chol


def ekf_update(
    predicted: GaussianBelief,
    y: np.ndarray,
    theta: np.ndarray,
    model: ModelSpec,
) -> GaussianBelief:
    """Standard EKF measurement update with a Cholesky-solved gain."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    theta = np.asarray(theta, dtype=float)
    Jg, S, chol = _innovation_factor(predicted, theta, model)
    innov = y - np.atleast_1d(model.obs(predicted.mean, theta))
    # K = C Jg^T S^-1, computed as solve(S, Jg C)^T
    K = scipy.linalg.cho_solve(chol, Jg @ predicted.cov).T
    mean = predicted.mean + K @ innov
    cov = (np.eye(predicted.dim) - K @ Jg) @ predicted.cov
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
        raise FilterDivergedError("filter diverged")
    return GaussianBelief(mean, psd_repair(cov))


def predictive_log_likelihood(
    predicted: GaussianBelief,
    y: np.ndarray,
    theta: np.ndarray,
    model: ModelSpec,
) -> float:
    """log N(y | g(x_pred), Jg C Jg^T + R): the closed-form marginal
    likelihood of the observation for an affine observation map."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    theta = np.asarray(theta, dtype=float)
    Jg, S, chol = _innovation_factor(predicted, theta, model)
    innov = y - np.atleast_1d(model.obs(predicted.mean, theta))
    maha = innov @ scipy.linalg.cho_solve(chol, innov)
    logdet = 2.0 * np.sum(np.log(np.diag(chol[0])))
    return float(-0.5 * (y.size * np.log(2.0 * np.pi) + logdet + maha))


def ekf_step(
    state: InnerFilterState,
    y: np.ndarray,
    theta: np.ndarray,
    model: ModelSpec,
    micro_steps: int,
    obs_index: int | None = None,
) -> tuple[InnerFilterState, float]:
    """Predict over the observation gap, update, and report the likelihood."""
    theta = np.asarray(theta, dtype=float)
    predicted = ekf_predict(state, theta, model, micro_steps)
    ll = predictive_log_likelihood(predicted, y, theta, model)
    posterior = ekf_update(predicted, y, theta, model)
    next_index = state.last_obs_index + 1 if obs_index is None else obs_index
    return InnerFilterState(posterior, theta, next_index), ll


def ekf_run_from_scratch(
    theta: np.ndarray,
    model: ModelSpec,
    prior: GaussianBelief,
    observations: Trajectory | np.ndarray,
    micro_steps: int,
) -> tuple[InnerFilterState, float | None]:
    """Replay the whole observation history from the state prior.

    Returns the final inner state and the final step's predictive
    log-likelihood (None when there are no observations).
    """
    theta = np.asarray(theta, dtype=float)
    ys = observations.observations if isinstance(observations, Trajectory) else np.atleast_2d(observations)
    state = InnerFilterState(prior, theta, 0)
    if len(ys) == 0:
        return state, None
    ll = None
    for y in ys:
        state, ll = ekf_step(state, y, theta, model, micro_steps)
    return state, ll
