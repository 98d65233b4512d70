"""State-space model abstraction and the stochastic Lorenz 63 benchmark.

A model is a pair of maps ``x_{t+1} = f(x_t, theta) + v_t`` and
``y_t = g(x_t, theta) + r_t`` with additive Gaussian noise.  The Lorenz 63
instance discretizes the usual three coupled SDEs with an Euler-Maruyama
step and observes a subset of the state linearly, once every ``m_o``
discrete steps.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .gaussian import GaussianBelief, psd_repair

Array = np.ndarray
DriftFn = Callable[[Array, Array], Array]
JacobianFn = Callable[[Array, Array], Array]


@dataclass(frozen=True)
class ModelSpec:
    """A nonlinear state-space model with additive noise.

    ``drift``/``obs`` map (state, params) to the next state mean and the
    observation mean; the Jacobians are with respect to the state.  One
    discrete step of ``drift`` is one micro-step; observations arrive every
    ``micro_steps`` of the filter's prediction loop (the model itself is
    agnostic to the decimation).
    """

    dx: int
    dy: int
    dtheta: int
    drift: DriftFn
    drift_jacobian: JacobianFn
    obs: DriftFn
    obs_jacobian: JacobianFn
    state_noise_cov: Array
    obs_noise_cov: Array
    # Set for the Lorenz 63 instance; enables the compiled EKF kernels.
    lorenz: "Lorenz63Config | None" = None

    def __post_init__(self):
        if self.dy > self.dx:
            raise ValueError("dy must not exceed dx")
        V = psd_repair(np.asarray(self.state_noise_cov, dtype=float))
        R = psd_repair(np.asarray(self.obs_noise_cov, dtype=float))
        if V.shape != (self.dx, self.dx) or R.shape != (self.dy, self.dy):
            raise ValueError("noise covariance shape mismatch")
        object.__setattr__(self, "state_noise_cov", V)
        object.__setattr__(self, "obs_noise_cov", R)


@dataclass(frozen=True)
class Lorenz63Config:
    """Constants of the stochastic Lorenz 63 setup.

    ``delta`` is the Euler-Maruyama step in continuous-time units, ``sigma2``
    the state-noise scale (per-step covariance is sigma2*delta*I), ``sigma_y2``
    the observation noise variance, ``k_o`` the observation gain, and ``m_o``
    the decimation: one observation every ``m_o`` discrete steps.
    """

    delta: float = 2e-4
    sigma2: float = 0.1
    sigma_y2: float = 1.0
    k_o: float = 1.0
    observed_indices: tuple[int, ...] = (1, 3)  # 1-based, subset of {1, 2, 3}
    m_o: int = 5

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.sigma2 < 0 or self.sigma_y2 < 0:
            raise ValueError("noise variances must be nonnegative")
        if self.m_o < 1:
            raise ValueError("m_o must be >= 1")
        idx = tuple(sorted(set(self.observed_indices)))
        if not idx or any(i not in (1, 2, 3) for i in idx):
            raise ValueError("observed_indices must be a non-empty subset of {1, 2, 3}")
        object.__setattr__(self, "observed_indices", idx)

    @property
    def dy(self) -> int:
        return len(self.observed_indices)

    @property
    def obs_matrix(self) -> Array:
        """The constant dy x 3 observation matrix (k_o times a row selector)."""
        G = np.zeros((self.dy, 3))
        for row, i in enumerate(self.observed_indices):
            G[row, i - 1] = self.k_o
        return G


@dataclass(frozen=True)
class Trajectory:
    """A simulated ground truth: every state, plus the sparse observations.

    ``states[t]`` is the state at discrete time t = 0..t_steps; observations
    are (t, y) pairs at strictly increasing multiples of the decimation.
    """

    states: Array  # (t_steps + 1, dx)
    obs_times: Array  # (n_obs,) int
    observations: Array  # (n_obs, dy)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        obs_times = np.asarray(self.obs_times, dtype=int)
        observations = np.atleast_2d(np.asarray(self.observations, dtype=float))
        if obs_times.size == 0:
            observations = observations.reshape(0, observations.shape[-1] if observations.size else 1)
        if observations.shape[0] != obs_times.size:
            raise ValueError("obs_times/observations length mismatch")
        if obs_times.size and np.any(np.diff(obs_times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(observations))):
            raise ValueError("non-finite trajectory entries")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "obs_times", obs_times)
        object.__setattr__(self, "observations", observations)

    @property
    def n_obs(self) -> int:
        return self.obs_times.size


def _check_finite(*arrays: Array) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite input")


def lorenz63_drift(x: Array, theta: Array, delta: float) -> Array:
    """One Euler step of the deterministic Lorenz 63 map.

    theta = (S, R, B).  Returns
    (x1 - delta*S*(x1 - x2),
     x2 + delta*((R - x3)*x1 - x2),
     x3 + delta*(x1*x2 - B*x3)).
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_finite(x, theta)
    s, r, b = theta
    x1, x2, x3 = x
    return np.array(
        [
            x1 - delta * s * (x1 - x2),
            x2 + delta * ((r - x3) * x1 - x2),
            x3 + delta * (x1 * x2 - b * x3),
        ]
    )


def lorenz63_jacobian(x: Array, theta: Array, delta: float) -> Array:
    """Jacobian of :func:`lorenz63_drift` with respect to the state."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    _check_finite(x, theta)
    s, r, b = theta
    x1, x2, x3 = x
    return np.eye(3) + delta * np.array(
        [
            [-s, s, 0.0],
            [r - x3, -1.0, -x1],
            [x2, x1, -b],
        ]
    )


def linear_observation(x: Array, config: Lorenz63Config) -> Array:
    """y = k_o * G * x with G selecting the observed components."""
    x = np.asarray(x, dtype=float)
    _check_finite(x)
    return config.obs_matrix @ x


def make_lorenz63_model(config: Lorenz63Config) -> ModelSpec:
    """Assemble the ModelSpec for the stochastic Lorenz 63 benchmark.

    The per-step state noise covariance is sigma2 * delta * I3 (the
    Euler-Maruyama transition density) and the observation noise is
    sigma_y2 * I_dy.
    """
    delta = config.delta
    G = config.obs_matrix

    def drift(x, theta):
        return lorenz63_drift(x, theta, delta)

    def drift_jac(x, theta):
        return lorenz63_jacobian(x, theta, delta)

    def obs(x, theta):
        return G @ x

    def obs_jac(x, theta):
        return G

    return ModelSpec(
        dx=3,
        dy=config.dy,
        dtheta=3,
        drift=drift,
        drift_jacobian=drift_jac,
        obs=obs,
        obs_jacobian=obs_jac,
        state_noise_cov=config.sigma2 * delta * np.eye(3),
        obs_noise_cov=config.sigma_y2 * np.eye(config.dy),
        lorenz=config,
    )


def simulate_ground_truth(
    config: Lorenz63Config,
    theta_true: Array,
    x0: GaussianBelief,
    t_steps: int,
    rng_seed: int | np.random.SeedSequence,
) -> Trajectory:
    """Simulate states and decimated observations for the Lorenz 63 model.

    Draws x0 from the prior, iterates x_{t+1} = f(x_t) + sqrt(delta)*sigma*v_t
    with standard normal v_t, and emits a noisy linear observation at every
    t = k * m_o (k >= 1).  Deterministic given the seed.
    """
    if t_steps < 0:
        raise ValueError("t_steps must be >= 0")
    theta_true = np.asarray(theta_true, dtype=float)
    rng = np.random.default_rng(rng_seed)

    if np.all(x0.cov == 0.0):
        x = x0.mean.copy()
    else:
        x = rng.multivariate_normal(x0.mean, x0.cov)

    sig_step = np.sqrt(config.sigma2 * config.delta)
    state_noise = rng.standard_normal((t_steps, 3)) if t_steps else np.empty((0, 3))

    from ._fastpath import simulate_lorenz_path

    states = simulate_lorenz_path(x, theta_true, config.delta, state_noise, sig_step)

    obs_times = np.arange(config.m_o, t_steps + 1, config.m_o)
    G = config.obs_matrix
    if obs_times.size:
        clean = states[obs_times] @ G.T
        noise = np.sqrt(config.sigma_y2) * rng.standard_normal((obs_times.size, config.dy))
        observations = clean + noise
    else:
        observations = np.empty((0, config.dy))
    return Trajectory(states=states, obs_times=obs_times, observations=observations)


def write_states_csv(trajectory: Trajectory, path) -> None:
    """Emit the dense state sequence as `t,x1,x2,x3` CSV."""
    with open(path, "w", newline="\n") as fh:
        dx = trajectory.states.shape[1]
        fh.write("t," + ",".join(f"x{i+1}" for i in range(dx)) + "\n")
        for t, row in enumerate(trajectory.states):
            fh.write(str(t) + "," + ",".join(format(v, ".17g") for v in row) + "\n")


def write_observations_csv(trajectory: Trajectory, path) -> None:
    """Emit the sparse observation sequence as `t,y1[,y2,...]` CSV."""
    with open(path, "w", newline="\n") as fh:
        dy = trajectory.observations.shape[1]
        fh.write("t," + ",".join(f"y{i+1}" for i in range(dy)) + "\n")
        for t, row in zip(trajectory.obs_times, trajectory.observations):
            fh.write(str(int(t)) + "," + ",".join(format(v, ".17g") for v in row) + "\n")
