"""Nested Gaussian filters for joint state and parameter estimation.

A sigma-point outer layer estimates static model parameters while a bank
of extended Kalman filters, one per reference point, tracks the dynamic
state.  Includes the stochastic Lorenz 63 benchmark, three baseline
algorithms (state-augmented UKF/EnKF and an SMC-EKF hybrid) and an
experiment harness with NMSE-based sweeps.
"""

from .gaussian import (
    DegenerateCovarianceError,
    GaussianBelief,
    PsdRepairPolicy,
    SigmaPointSet,
    cubature_points,
    gaussian_logpdf,
    moments_from_points,
    psd_repair,
    unscented_points,
)
from .models import (
    Lorenz63Config,
    ModelSpec,
    Trajectory,
    linear_observation,
    lorenz63_drift,
    lorenz63_jacobian,
    make_lorenz63_model,
    simulate_ground_truth,
)
from .ekf import (
    FilterDivergedError,
    InnerFilterState,
    ekf_predict,
    ekf_run_from_scratch,
    ekf_step,
    ekf_update,
    predictive_log_likelihood,
)
from .nested import (
    LikelihoodUnderflowError,
    NestedFilterConfig,
    NestedFilterState,
    estimate_parameters,
    estimate_state,
    initialize,
    norm_test,
    outer_step,
    posterior_weights,
)
from .baselines import (
    AugmentedConfig,
    AugmentedState,
    ParticleCloud,
    SmcConfig,
    augmented_enkf_step,
    augmented_ukf_step,
    smc_ekf_step,
)
from .experiments import (
    ResultRow,
    RunConfig,
    RunResult,
    compare_algorithms,
    continuity_experiment,
    emit_results,
    load_config_file,
    nmse,
    noise_sweep,
    parse_results,
    run_experiment,
    run_single,
    sweep_lambda,
)

__version__ = "0.1.0"
