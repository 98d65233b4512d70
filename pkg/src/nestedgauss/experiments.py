"""Experiment harness: benchmark runs, parameter sweeps and CSV emission.

Reproduces the Lorenz 63 studies at desk scale: ground truth generation
and filtering use independent, documented seed sub-streams so that
different algorithms (and different sweep settings) can share data
exactly.  Stream layout, all derived from ``SeedSequence``:

    data  stream:  SeedSequence([seed, run, 0])
    prior stream:  SeedSequence([seed, run, 1])
    algo  stream:  SeedSequence([seed, run, 2, algo_id])

CSV is the canonical output; SVG plots are an optional emission mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fastpath
from .baselines import (
    AugmentedConfig,
    AugmentedState,
    ParticleCloud,
    SmcConfig,
    augmented_enkf_step,
    augmented_ukf_step,
    smc_ekf_step,
)
from .ekf import FilterDivergedError, InnerFilterState
from .gaussian import GaussianBelief
from .models import Lorenz63Config, Trajectory, make_lorenz63_model, simulate_ground_truth
from .nested import (
    LikelihoodUnderflowError,
    NestedFilterConfig,
    NestedFilterState,
    initialize,
    outer_step,
)

THETA_TRUE = np.array([10.0, 28.0, 8.0 / 3.0])
X0_MEAN = np.array([-6.0, -5.5, -24.5])
PRIOR_OFFSET = np.array([3.0, 1.0, 0.5])

ALGORITHMS = ("nested_ukf_ekf", "nested_ckf_ekf", "augmented_ukf", "augmented_enkf", "smc_ekf")
_ALGO_IDS = {name: i for i, name in enumerate(ALGORITHMS)}

RESULT_HEADER = "t,nmse_x,nmse_theta,theta_hat_1,theta_hat_2,theta_hat_3,restart_count,wall_ns"


def nmse(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Squared Euclidean error over the squared norm of the truth."""
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    denom = float(truth @ truth)
    if denom == 0.0:
        raise ValueError("undefined NMSE: zero truth norm")
    err = truth - estimate
    return float(err @ err) / denom


@dataclass(frozen=True)
class ResultRow:
    """One observation time's estimates and errors."""

    t: float
    nmse_x: float
    nmse_theta: float
    theta_hat: np.ndarray
    restart_count: int
    wall_ns: int


@dataclass(frozen=True)
class RunConfig:
    """A full experiment specification (model, algorithm, horizon, seeds)."""

    model: Lorenz63Config = Lorenz63Config()
    theta_true: np.ndarray = field(default_factory=lambda: THETA_TRUE.copy())
    prior_offset: np.ndarray = field(default_factory=lambda: PRIOR_OFFSET.copy())
    t_end: float = 10.0
    algorithm: str = "nested_ukf_ekf"
    nested: NestedFilterConfig = NestedFilterConfig()
    augmented: AugmentedConfig = AugmentedConfig()
    smc: SmcConfig = SmcConfig()
    seed: int = 0
    n_runs: int = 1

    def __post_init__(self):
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.n_runs < 1:
            raise ValueError("n_runs must be >= 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    @property
    def t_steps(self) -> int:
        return int(round(self.t_end / self.model.delta))


@dataclass
class RunResult:
    """Outcome of a single seeded run."""

    rows: list[ResultRow]
    failed: bool = False
    failure_reason: str = ""
    wall_ns: int = 0

    @property
    def nmse_x_avg(self) -> float:
        return float(np.mean([r.nmse_x for r in self.rows])) if self.rows else float("nan")

    @property
    def nmse_theta_avg(self) -> float:
        return float(np.mean([r.nmse_theta for r in self.rows])) if self.rows else float("nan")


@dataclass
class ExperimentResult:
    """Aggregate over the n_runs of one RunConfig."""

    config: RunConfig
    runs: list[RunResult]

    @property
    def succeeded(self) -> list[RunResult]:
        return [r for r in self.runs if not r.failed]

    @property
    def n_failed(self) -> int:
        return sum(r.failed for r in self.runs)

    @property
    def mean_nmse_x(self) -> float:
        ok = self.succeeded
        return float(np.mean([r.nmse_x_avg for r in ok])) if ok else float("nan")

    @property
    def mean_nmse_theta(self) -> float:
        ok = self.succeeded
        return float(np.mean([r.nmse_theta_avg for r in ok])) if ok else float("nan")

    @property
    def mean_wall_ns(self) -> float:
        ok = self.succeeded
        return float(np.mean([r.wall_ns for r in ok])) if ok else float("nan")


def _data_rng_seed(seed: int, run: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, run, 0])


def _prior_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run, 1]))


def _algo_rng(seed: int, run: int, algorithm: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, run, 2, _ALGO_IDS[algorithm]]))


def _draw_priors(config: RunConfig, run: int):
    rng = _prior_rng(config.seed, run)
    mu = rng.uniform(config.theta_true - config.prior_offset, config.theta_true + config.prior_offset)
    prior_theta = GaussianBelief(mu, np.eye(3))
    prior_x = GaussianBelief(X0_MEAN, np.eye(3))
    return prior_theta, prior_x


def _simulate(config: RunConfig, run: int) -> Trajectory:
    prior_x = GaussianBelief(X0_MEAN, np.eye(3))
    return simulate_ground_truth(
        config.model, config.theta_true, prior_x, config.t_steps, _data_rng_seed(config.seed, run)
    )


def _run_nested(config: RunConfig, run: int, trajectory: Trajectory) -> RunResult:
    model = make_lorenz63_model(config.model)
    prior_theta, prior_x = _draw_priors(config, run)
    nested_cfg = config.nested
    if config.algorithm == "nested_ckf_ekf":
        nested_cfg = replace(nested_cfg, point_rule="cubature")
    nested_cfg = replace(nested_cfg, micro_steps=config.model.m_o)

    state = initialize(prior_theta, prior_x, nested_cfg)
    ys = trajectory.observations
    rows: list[ResultRow] = []
    total_ns = 0
    for j, t_disc in enumerate(trajectory.obs_times):
        tic = time.perf_counter_ns()
        try:
            state = outer_step(state, ys[j], j + 1, model, prior_x, ys, nested_cfg)
        except (FilterDivergedError, LikelihoodUnderflowError) as exc:
            return RunResult(rows, failed=True, failure_reason=str(exc), wall_ns=total_ns)
        wall = time.perf_counter_ns() - tic
        total_ns += wall
        rows.append(
            ResultRow(
                t=float(t_disc) * config.model.delta,
                nmse_x=nmse(trajectory.states[t_disc], state.state_belief.mean),
                nmse_theta=nmse(config.theta_true, state.param_belief.mean),
                theta_hat=state.param_belief.mean.copy(),
                restart_count=state.last_restart_count,
                wall_ns=wall,
            )
        )
    return RunResult(rows, wall_ns=total_ns)


def _run_augmented_ukf(config: RunConfig, run: int, trajectory: Trajectory) -> RunResult:
    model = make_lorenz63_model(config.model)
    prior_theta, prior_x = _draw_priors(config, run)
    aug_cfg = replace(config.augmented, micro_steps=config.model.m_o)
    mean = np.concatenate([prior_x.mean, prior_theta.mean])
    cov = np.zeros((6, 6))
    cov[:3, :3] = prior_x.cov
    cov[3:, 3:] = prior_theta.cov
    state = AugmentedState(GaussianBelief(mean, cov), dx=3)
    rows: list[ResultRow] = []
    total_ns = 0
    for j, t_disc in enumerate(trajectory.obs_times):
        tic = time.perf_counter_ns()
        try:
            state = augmented_ukf_step(state, trajectory.observations[j], model, aug_cfg)
        except (FilterDivergedError, np.linalg.LinAlgError) as exc:
            return RunResult(rows, failed=True, failure_reason=str(exc), wall_ns=total_ns)
        wall = time.perf_counter_ns() - tic
        total_ns += wall
        rows.append(
            ResultRow(
                t=float(t_disc) * config.model.delta,
                nmse_x=nmse(trajectory.states[t_disc], state.state_mean),
                nmse_theta=nmse(config.theta_true, state.param_mean),
                theta_hat=state.param_mean.copy(),
                restart_count=0,
                wall_ns=wall,
            )
        )
    return RunResult(rows, wall_ns=total_ns)


def _run_augmented_enkf(config: RunConfig, run: int, trajectory: Trajectory) -> RunResult:
    model = make_lorenz63_model(config.model)
    prior_theta, prior_x = _draw_priors(config, run)
    aug_cfg = replace(config.augmented, micro_steps=config.model.m_o)
    rng = _algo_rng(config.seed, run, "augmented_enkf")
    n = aug_cfg.ensemble_size
    ensemble = np.concatenate(
        [
            rng.multivariate_normal(prior_x.mean, prior_x.cov, size=n),
            rng.multivariate_normal(prior_theta.mean, prior_theta.cov, size=n),
        ],
        axis=1,
    )
    rows: list[ResultRow] = []
    total_ns = 0
    for j, t_disc in enumerate(trajectory.obs_times):
        tic = time.perf_counter_ns()
        try:
            ensemble = augmented_enkf_step(ensemble, trajectory.observations[j], model, aug_cfg, rng)
        except (FilterDivergedError, np.linalg.LinAlgError) as exc:
            return RunResult(rows, failed=True, failure_reason=str(exc), wall_ns=total_ns)
        wall = time.perf_counter_ns() - tic
        total_ns += wall
        x_hat = ensemble[:, :3].mean(axis=0)
        theta_hat = ensemble[:, 3:].mean(axis=0)
        rows.append(
            ResultRow(
                t=float(t_disc) * config.model.delta,
                nmse_x=nmse(trajectory.states[t_disc], x_hat),
                nmse_theta=nmse(config.theta_true, theta_hat),
                theta_hat=theta_hat,
                restart_count=0,
                wall_ns=wall,
            )
        )
    return RunResult(rows, wall_ns=total_ns)


def _run_smc_ekf(config: RunConfig, run: int, trajectory: Trajectory) -> RunResult:
    model = make_lorenz63_model(config.model)
    prior_theta, prior_x = _draw_priors(config, run)
    smc_cfg = replace(config.smc, micro_steps=config.model.m_o)
    rng = _algo_rng(config.seed, run, "smc_ekf")
    n = smc_cfg.n_particles
    particles = rng.multivariate_normal(prior_theta.mean, prior_theta.cov, size=n)
    bank = [InnerFilterState(prior_x, particles[i].copy(), 0) for i in range(n)]
    cloud = ParticleCloud(particles, np.full(n, 1.0 / n), bank)
    rows: list[ResultRow] = []
    total_ns = 0
    for j, t_disc in enumerate(trajectory.obs_times):
        tic = time.perf_counter_ns()
        try:
            cloud = smc_ekf_step(cloud, trajectory.observations[j], model, smc_cfg, rng)
        except (FilterDivergedError, LikelihoodUnderflowError) as exc:
            return RunResult(rows, failed=True, failure_reason=str(exc), wall_ns=total_ns)
        wall = time.perf_counter_ns() - tic
        total_ns += wall
        theta_hat = cloud.param_mean()
        rows.append(
            ResultRow(
                t=float(t_disc) * config.model.delta,
                nmse_x=nmse(trajectory.states[t_disc], cloud.state_mean()),
                nmse_theta=nmse(config.theta_true, theta_hat),
                theta_hat=theta_hat,
                restart_count=0,
                wall_ns=wall,
            )
        )
    return RunResult(rows, wall_ns=total_ns)


_RUNNERS = {
    "nested_ukf_ekf": _run_nested,
    "nested_ckf_ekf": _run_nested,
    "augmented_ukf": _run_augmented_ukf,
    "augmented_enkf": _run_augmented_enkf,
    "smc_ekf": _run_smc_ekf,
}


def run_single(config: RunConfig, run: int = 0, trajectory: Trajectory | None = None) -> RunResult:
    """One seeded run of the configured algorithm (ground truth included)."""
    if trajectory is None:
        trajectory = _simulate(config, run)
    return _RUNNERS[config.algorithm](config, run, trajectory)


def run_experiment(config: RunConfig) -> ExperimentResult:
    """Run config.n_runs independent, seeded runs and aggregate.

    A diverged run is recorded as a failure, not raised.
    """
    runs = [run_single(config, run) for run in range(config.n_runs)]
    return ExperimentResult(config=config, runs=runs)


# ---------------------------------------------------------------------------
# Benchmark studies
# ---------------------------------------------------------------------------

CONTINUITY_GRID = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5)
LAMBDA_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1)
NOISE_GRID = (1.0, 2.0, 4.0, 10.0)


@dataclass(frozen=True)
class ContinuityRow:
    sigma_e2: float
    mean_norm_l2: float
    mean_norm_linf: float
    mean_nmse_x: float
    n_failed: int


def continuity_experiment(
    sigma_e2_grid=CONTINUITY_GRID,
    n_runs: int = 100,
    seed: int = 0,
    model: Lorenz63Config = Lorenz63Config(),
    t_end: float = 10.0,
    theta_true: np.ndarray = THETA_TRUE,
) -> list[ContinuityRow]:
    """Known-parameter EKF accuracy versus parameter perturbation size.

    For each perturbation variance, the EKF tracks data generated under the
    true parameters while running with theta' = theta + eps,
    eps ~ N(0, sigma_e2 I).  A zero variance gives the unperturbed baseline.
    """
    theta_true = np.asarray(theta_true, dtype=float)
    t_steps = int(round(t_end / model.delta))
    q = model.sigma2 * model.delta
    G = model.obs_matrix
    prior_x = GaussianBelief(X0_MEAN, np.eye(3))

    trajectories = [
        simulate_ground_truth(model, theta_true, prior_x, t_steps, _data_rng_seed(seed, run))
        for run in range(n_runs)
    ]

    rows = []
    for var_idx, s2 in enumerate(sigma_e2_grid):
        l2, linf, errs = [], [], []
        n_failed = 0
        for run, traj in enumerate(trajectories):
            rng = np.random.default_rng(np.random.SeedSequence([seed, run, 1, var_idx]))
            eps = np.sqrt(s2) * rng.standard_normal(3) if s2 > 0 else np.zeros(3)
            theta_p = theta_true + eps
            truth_at_obs = traj.states[traj.obs_times]
            nmse_seq, ok = _fastpath.ekf_track_nmse_kernel(
                theta_p, prior_x.mean, prior_x.cov, traj.observations, truth_at_obs,
                model.delta, q, G, model.sigma_y2, model.m_o,
            )
            if not ok:
                n_failed += 1
                continue
            l2.append(np.linalg.norm(eps))
            linf.append(np.linalg.norm(eps, ord=np.inf))
            errs.append(float(np.mean(nmse_seq)))
        rows.append(
            ContinuityRow(
                sigma_e2=float(s2),
                mean_norm_l2=float(np.mean(l2)) if l2 else float("nan"),
                mean_norm_linf=float(np.mean(linf)) if linf else float("nan"),
                mean_nmse_x=float(np.mean(errs)) if errs else float("nan"),
                n_failed=n_failed,
            )
        )
    return rows


@dataclass(frozen=True)
class LambdaSweepRow:
    lam: float
    norm: float
    mean_nmse_theta: float
    mean_nmse_x: float
    mean_wall_s: float
    mean_restarts: float
    n_runs: int
    n_failed: int


def sweep_lambda(
    lambda_grid=LAMBDA_GRID,
    norms=(2, float("inf")),
    n_runs: int = 20,
    seed: int = 0,
    base: RunConfig | None = None,
) -> list[LambdaSweepRow]:
    """Full factorial sweep over the recursion threshold and the p-norm."""
    base = base or RunConfig(n_runs=n_runs, seed=seed)
    rows = []
    for lam in lambda_grid:
        for norm in norms:
            cfg = replace(
                base,
                seed=seed,
                n_runs=n_runs,
                nested=replace(base.nested, lam=float(lam), norm=norm),
            )
            result = run_experiment(cfg)
            ok = result.succeeded
            restarts = [float(np.sum([r.restart_count for r in run.rows])) for run in ok]
            rows.append(
                LambdaSweepRow(
                    lam=float(lam),
                    norm=float(norm),
                    mean_nmse_theta=result.mean_nmse_theta,
                    mean_nmse_x=result.mean_nmse_x,
                    mean_wall_s=result.mean_wall_ns / 1e9,
                    mean_restarts=float(np.mean(restarts)) if restarts else float("nan"),
                    n_runs=n_runs,
                    n_failed=result.n_failed,
                )
            )
    return rows


@dataclass
class AlgorithmCurves:
    """Per-observation-time NMSE curves for one algorithm, averaged over runs."""

    algorithm: str
    times: np.ndarray
    nmse_theta: np.ndarray  # (n_ok_runs, n_obs)
    nmse_x: np.ndarray
    wall_ns: list[int]
    n_failed: int

    @property
    def mean_nmse_theta(self) -> np.ndarray:
        return self.nmse_theta.mean(axis=0)

    @property
    def mean_nmse_x(self) -> np.ndarray:
        return self.nmse_x.mean(axis=0)


def compare_algorithms(
    algorithms=("nested_ukf_ekf", "augmented_ukf", "augmented_enkf"),
    n_runs: int = 20,
    seed: int = 0,
    base: RunConfig | None = None,
) -> dict[str, AlgorithmCurves]:
    """Run each algorithm on identical per-run data (shared data stream,
    distinct algorithm streams) and collect NMSE curves."""
    base = base or RunConfig()
    trajectories = [_simulate(replace(base, seed=seed), run) for run in range(n_runs)]
    out: dict[str, AlgorithmCurves] = {}
    for algo in algorithms:
        cfg = replace(base, algorithm=algo, seed=seed, n_runs=n_runs)
        theta_curves, x_curves, walls = [], [], []
        n_failed = 0
        times = None
        for run in range(n_runs):
            res = run_single(cfg, run, trajectories[run])
            if res.failed or not res.rows:
                n_failed += 1
                continue
            if times is None:
                times = np.array([r.t for r in res.rows])
            theta_curves.append([r.nmse_theta for r in res.rows])
            x_curves.append([r.nmse_x for r in res.rows])
            walls.append(res.wall_ns)
        out[algo] = AlgorithmCurves(
            algorithm=algo,
            times=times if times is not None else np.array([]),
            nmse_theta=np.array(theta_curves),
            nmse_x=np.array(x_curves),
            wall_ns=walls,
            n_failed=n_failed,
        )
    return out


@dataclass(frozen=True)
class NoiseSweepRow:
    sigma_y2: float
    mean_nmse_theta: float
    mean_nmse_x: float
    mean_nmse_theta_post: float  # averaged over t > post_t only
    mean_nmse_x_post: float
    n_failed: int


def noise_sweep(
    sigma_y2_grid=NOISE_GRID,
    n_runs: int = 20,
    seed: int = 0,
    base: RunConfig | None = None,
    post_t: float = 5.0,
) -> list[NoiseSweepRow]:
    """Nested-filter accuracy for increasing observation-noise variance.

    Reports both full-horizon and post-convergence (t > post_t) averages,
    since the transient dominates short horizons.
    """
    base = base or RunConfig()
    rows = []
    for s2 in sigma_y2_grid:
        cfg = replace(base, model=replace(base.model, sigma_y2=float(s2)), seed=seed, n_runs=n_runs)
        result = run_experiment(cfg)
        th_post, x_post = [], []
        for run in result.succeeded:
            late = [r for r in run.rows if r.t > post_t]
            if late:
                th_post.append(np.mean([r.nmse_theta for r in late]))
                x_post.append(np.mean([r.nmse_x for r in late]))
        rows.append(
            NoiseSweepRow(
                sigma_y2=float(s2),
                mean_nmse_theta=result.mean_nmse_theta,
                mean_nmse_x=result.mean_nmse_x,
                mean_nmse_theta_post=float(np.mean(th_post)) if th_post else float("nan"),
                mean_nmse_x_post=float(np.mean(x_post)) if x_post else float("nan"),
                n_failed=result.n_failed,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# Emission
# ---------------------------------------------------------------------------


def emit_results(rows: list[ResultRow], path, fmt: str = "csv") -> None:
    """Write result rows as CSV (canonical) or an SVG log-scale plot."""
    if fmt == "csv":
        try:
            with open(path, "w", newline="\n") as fh:
                fh.write(RESULT_HEADER + "\n")
                for r in rows:
                    fields = [
                        format(r.t, ".17g"),
                        format(r.nmse_x, ".17g"),
                        format(r.nmse_theta, ".17g"),
                        *(format(v, ".17g") for v in r.theta_hat),
                        str(int(r.restart_count)),
                        str(int(r.wall_ns)),
                    ]
                    fh.write(",".join(fields) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write results to {path}: {exc}") from exc
    elif fmt == "svg_plot":
        _emit_svg(rows, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")


def _emit_svg(rows: list[ResultRow], path) -> None:
    import matplotlib

    matplotlib.use("svg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    t = [r.t for r in rows]
    axes[0].semilogy(t, [max(r.nmse_theta, 1e-300) for r in rows])
    axes[0].set_xlabel("t")
    axes[0].set_ylabel("parameter NMSE")
    axes[1].semilogy(t, [max(r.nmse_x, 1e-300) for r in rows])
    axes[1].set_xlabel("t")
    axes[1].set_ylabel("state NMSE")
    fig.tight_layout()
    try:
        fig.savefig(path, format="svg")
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)


def parse_results(path) -> list[ResultRow]:
    """Inverse of the CSV emission."""
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != RESULT_HEADER:
            raise ValueError(f"unexpected header in {path}: {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            rows.append(
                ResultRow(
                    t=float(parts[0]),
                    nmse_x=float(parts[1]),
                    nmse_theta=float(parts[2]),
                    theta_hat=np.array([float(p) for p in parts[3:6]]),
                    restart_count=int(parts[6]),
                    wall_ns=int(parts[7]),
                )
            )
    return rows


def load_config_file(path) -> dict:
    """Parse a flat `key = value` config file ('#' comments, comma lists)."""
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if "," in value:
                out[key] = [_coerce(v.strip()) for v in value.split(",")]
            else:
                out[key] = _coerce(value)
    return out


def _coerce(text: str):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text
