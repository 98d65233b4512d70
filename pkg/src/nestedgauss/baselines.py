"""Comparison algorithms: state-augmented UKF, state-augmented EnKF, and
the SMC-EKF nested hybrid filter.

The two augmented filters fold the parameters into an extended state
(x; theta) with identity parameter dynamics plus a small artificial
jitter.  The SMC-EKF keeps the two-layer structure but replaces the
deterministic outer point set with a jittered, resampled particle cloud.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _fastpath
from .ekf import FilterDivergedError, InnerFilterState, ekf_step
from .gaussian import (
    GaussianBelief,
    moments_from_points,
    psd_repair,
    unscented_points,
)
from .models import ModelSpec
from .nested import LikelihoodUnderflowError


@dataclass(frozen=True)
class AugmentedState:
    """Gaussian belief over the augmented vector (x; theta)."""

    belief: GaussianBelief
    dx: int

    @property
    def state_mean(self) -> np.ndarray:
        return self.belief.mean[: self.dx]

    @property
    def param_mean(self) -> np.ndarray:
        return self.belief.mean[self.dx :]


@dataclass(frozen=True)
class AugmentedConfig:
    """Shared knobs of the augmented filters.

    ``param_jitter_std`` is the per-observation artificial dynamics noise on
    the parameter block (scale-aware: a fraction of the prior standard
    deviation works well); ``ensemble_size`` only applies to the EnKF.
    """

    micro_steps: int = 5
    kappa: float | None = None
    param_jitter_std: float = 1e-4
    ensemble_size: int = 100


@dataclass
class ParticleCloud:
    """Outer-layer particle approximation with one inner EKF per particle."""

    particles: np.ndarray  # (N, dtheta)
    weights: np.ndarray  # (N,)
    bank: list[InnerFilterState]

    def __post_init__(self):
        self.particles = np.atleast_2d(np.asarray(self.particles, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")
        if len(self.bank) != self.particles.shape[0]:
            raise ValueError("bank/particles length mismatch")

    @property
    def n(self) -> int:
        return self.particles.shape[0]

    def param_mean(self) -> np.ndarray:
        return self.weights @ self.particles

    def state_mean(self) -> np.ndarray:
        means = np.stack([s.belief.mean for s in self.bank])
        return self.weights @ means


@dataclass(frozen=True)
class SmcConfig:
    """SMC-EKF settings: 120 outer particles by default, jitter covariance
    shrinking as c / sqrt(N), multinomial resampling below half ESS."""

    n_particles: int = 120
    micro_steps: int = 5
    jitter_c: float = 0.05
    ess_fraction: float = 0.5


def _augmented_moments(points: np.ndarray, weights: np.ndarray) -> GaussianBelief:
    mean = weights @ points
    centered = points - mean
    cov = (centered * weights[:, None]).T @ centered
    return GaussianBelief(mean, psd_repair(cov))


def augmented_ukf_step(
    state: AugmentedState,
    y: np.ndarray,
    model: ModelSpec,
    config: AugmentedConfig = AugmentedConfig(),
) -> AugmentedState:
    """One UT prediction over the observation gap plus one UT update.

    The sigma points are generated once per observation and pushed through
    the composed ``micro_steps``-fold drift (the parameter block follows
    identity dynamics); the accumulated state noise and the parameter
    jitter are added to the predicted covariance afterwards.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dx, dth = model.dx, model.dtheta
    belief = state.belief

    pts = unscented_points(belief, config.kappa)
    propagated = np.empty_like(pts.points)
    for k, p in enumerate(pts.points):
        x = p[:dx]
        for _ in range(config.micro_steps):
            x = model.drift(x, p[dx:])
        propagated[k, :dx] = x
        propagated[k, dx:] = p[dx:]
    belief = _augmented_moments(propagated, pts.weights)
    cov = belief.cov.copy()
    cov[:dx, :dx] += config.micro_steps * model.state_noise_cov
    cov[dx:, dx:] += config.param_jitter_std**2 * np.eye(dth)
    belief = GaussianBelief(belief.mean, cov)

    pts = unscented_points(belief, config.kappa)
    obs_pts = np.stack([np.atleast_1d(model.obs(p[:dx], p[dx:])) for p in pts.points])
    y_mean = pts.weights @ obs_pts
    obs_centered = obs_pts - y_mean
    S = (obs_centered * pts.weights[:, None]).T @ obs_centered + model.obs_noise_cov
    pts_centered = pts.points - belief.mean
    Pxy = (pts_centered * pts.weights[:, None]).T @ obs_centered
    K = np.linalg.solve(0.5 * (S + S.T), Pxy.T).T
    mean = belief.mean + K @ (y - y_mean)
    cov = belief.cov - K @ S @ K.T
    if not np.all(np.isfinite(mean)):
        raise FilterDivergedError("filter diverged")
    return AugmentedState(GaussianBelief(mean, psd_repair(cov)), dx)


def _propagate_members(x: np.ndarray, theta: np.ndarray, model: ModelSpec, rng, micro_steps: int):
    """Noisy dynamics for each ensemble member, vectorized for Lorenz 63."""
    n = x.shape[0]
    V = model.state_noise_cov
    chol_v = np.linalg.cholesky(psd_repair(V)) if np.any(V) else None
    if model.lorenz is not None:
        delta = model.lorenz.delta
        for _ in range(micro_steps):
            x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
            s, r, b = theta[:, 0], theta[:, 1], theta[:, 2]
            x = np.stack(
                [
                    x1 - delta * s * (x1 - x2),
                    x2 + delta * ((r - x3) * x1 - x2),
                    x3 + delta * (x1 * x2 - b * x3),
                ],
                axis=1,
            )
            if chol_v is not None:
                x = x + rng.standard_normal((n, 3)) @ chol_v.T
        return x
    for _ in range(micro_steps):
        x = np.stack([model.drift(x[k], theta[k]) for k in range(n)])
        if chol_v is not None:
            x = x + rng.standard_normal((n, model.dx)) @ chol_v.T
    return x


def augmented_enkf_step(
    ensemble: np.ndarray,
    y: np.ndarray,
    model: ModelSpec,
    config: AugmentedConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """Stochastic EnKF update of an augmented ensemble (N, dx + dtheta).

    Members are propagated through the noisy dynamics (parameters held
    fixed plus jitter), then updated with individually perturbed
    observations using the sample Kalman gain.
    """
    ensemble = np.atleast_2d(np.asarray(ensemble, dtype=float))
    n = ensemble.shape[0]
    if n < 2:
        raise ValueError("ensemble size must be >= 2")
    y = np.atleast_1d(np.asarray(y, dtype=float))
    dx = model.dx

    x = _propagate_members(ensemble[:, :dx], ensemble[:, dx:], model, rng, config.micro_steps)
    theta = ensemble[:, dx:] + config.param_jitter_std * rng.standard_normal(ensemble[:, dx:].shape)
    members = np.concatenate([x, theta], axis=1)

    obs = np.stack([np.atleast_1d(model.obs(members[k, :dx], members[k, dx:])) for k in range(n)])
    obs_mean = obs.mean(axis=0)
    obs_anom = obs - obs_mean
    mem_anom = members - members.mean(axis=0)
    if np.max(np.abs(obs_anom)) == 0.0:
        raise FilterDivergedError("ensemble collapse: zero sample covariance")
    P_yy = obs_anom.T @ obs_anom / (n - 1)
    P_xy = mem_anom.T @ obs_anom / (n - 1)
    S = P_yy + model.obs_noise_cov
    K = np.linalg.solve(0.5 * (S + S.T), P_xy.T).T

    chol_r = np.linalg.cholesky(psd_repair(model.obs_noise_cov))
    perturbed = y + rng.standard_normal(obs.shape) @ chol_r.T
    updated = members + (perturbed - obs) @ K.T
    if not np.all(np.isfinite(updated)):
        raise FilterDivergedError("filter diverged")
    return updated


def effective_sample_size(weights: np.ndarray) -> float:
    return 1.0 / float(np.sum(np.asarray(weights) ** 2))


def smc_ekf_step(
    cloud: ParticleCloud,
    y: np.ndarray,
    model: ModelSpec,
    config: SmcConfig,
    rng: np.random.Generator,
) -> ParticleCloud:
    """One step of the SMC-EKF nested hybrid filter.

    Jitter each parameter particle, advance its EKF one prediction/update,
    reweight by the predictive likelihood, and resample (multinomial) when
    the effective sample size drops below the configured fraction of N.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    n = cloud.n
    jitter_std = np.sqrt(config.jitter_c / np.sqrt(n))
    particles = cloud.particles + jitter_std * rng.standard_normal(cloud.particles.shape)

    lls = np.empty(n)
    if model.lorenz is not None:
        cfg = model.lorenz
        ms = np.stack([s.belief.mean for s in cloud.bank])
        Cs = np.stack([s.belief.cov for s in cloud.bank])
        lls, ok = _fastpath.ekf_step_batch_kernel(
            ms, Cs, particles, cfg.delta, cfg.sigma2 * cfg.delta,
            cfg.obs_matrix, cfg.sigma_y2, y, config.micro_steps,
        )
        if not ok:
            raise FilterDivergedError("filter diverged")
        bank = [
            InnerFilterState(GaussianBelief(ms[i], Cs[i]), particles[i].copy(),
                             cloud.bank[i].last_obs_index + 1)
            for i in range(n)
        ]
    else:
        bank = []
        for i in range(n):
            inner, ll = ekf_step(cloud.bank[i], y, particles[i], model, config.micro_steps)
            bank.append(inner)
            lls[i] = ll

    with np.errstate(divide="ignore"):
        logw = np.log(cloud.weights) + lls
    m = np.max(logw)
    if not np.isfinite(m):
        raise LikelihoodUnderflowError("particle weight underflow")
    w = np.exp(logw - m)
    w /= w.sum()

    if effective_sample_size(w) < config.ess_fraction * n:
        idx = rng.choice(n, size=n, p=w)
        particles = particles[idx]
        bank = [bank[i] for i in idx]
        w = np.full(n, 1.0 / n)
    return ParticleCloud(particles=particles, weights=w, bank=bank)
