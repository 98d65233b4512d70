"""Command-line interface for the experiment harness.

Subcommands mirror the benchmark studies: ``simulate`` writes a ground
truth trajectory, ``run`` executes a single experiment configuration, and
``sweep-lambda`` / ``sweep-noise`` / ``continuity`` / ``compare`` drive the
multi-run studies.  A flat `key = value` config file can supply defaults;
explicit flags win.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace

import numpy as np

from .experiments import (
    CONTINUITY_GRID,
    LAMBDA_GRID,
    NOISE_GRID,
    RunConfig,
    compare_algorithms,
    continuity_experiment,
    emit_results,
    load_config_file,
    noise_sweep,
    run_experiment,
    sweep_lambda,
)
from .gaussian import GaussianBelief
from .models import Lorenz63Config, simulate_ground_truth, write_observations_csv, write_states_csv
from .nested import NestedFilterConfig
from .experiments import ALGORITHMS, THETA_TRUE, X0_MEAN


def _parse_norm(text: str) -> float:
    if text in ("inf", "Infinity", "infinity"):
        return math.inf
    value = float(text)
    if value not in (1.0, 2.0):
        raise argparse.ArgumentTypeError("norm must be 1, 2 or inf")
    return value


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key = value config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--t-end", type=float, default=None, dest="t_end")
    parser.add_argument("--n-runs", type=int, default=None, dest="n_runs")
    parser.add_argument("--lambda", type=float, default=None, dest="lam")
    parser.add_argument("--norm", type=_parse_norm, default=None)
    parser.add_argument("--algorithm", choices=ALGORITHMS, default=None)
    parser.add_argument("--out", default=None)


def _merged(args) -> dict:
    """Config-file values overridden by explicit CLI flags."""
    merged: dict = {}
    if getattr(args, "config", None):
        merged.update(load_config_file(args.config))
    for key in ("seed", "t_end", "n_runs", "lam", "norm", "algorithm", "out"):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if isinstance(merged.get("norm"), str):
        merged["norm"] = _parse_norm(merged["norm"])
    return merged


def _model_from(settings: dict) -> Lorenz63Config:
    keys = ("delta", "sigma2", "sigma_y2", "k_o", "m_o")
    kwargs = {k: settings[k] for k in keys if k in settings}
    if "observed_indices" in settings:
        idx = settings["observed_indices"]
        kwargs["observed_indices"] = tuple(idx) if isinstance(idx, list) else (int(idx),)
    return Lorenz63Config(**kwargs)


def _run_config_from(settings: dict) -> RunConfig:
    nested_kwargs = {}
    if "lam" in settings:
        nested_kwargs["lam"] = float(settings["lam"])
    if "norm" in settings:
        nested_kwargs["norm"] = settings["norm"]
    if "point_rule" in settings:
        nested_kwargs["point_rule"] = settings["point_rule"]
    cfg = RunConfig(
        model=_model_from(settings),
        t_end=float(settings.get("t_end", 10.0)),
        algorithm=settings.get("algorithm", "nested_ukf_ekf"),
        nested=NestedFilterConfig(**nested_kwargs),
        seed=int(settings.get("seed", 0)),
        n_runs=int(settings.get("n_runs", 1)),
    )
    return cfg


def _cmd_simulate(args) -> None:
    settings = _merged(args)
    model = _model_from(settings)
    t_end = float(settings.get("t_end", 10.0))
    seed = int(settings.get("seed", 0))
    t_steps = int(round(t_end / model.delta))
    prior_x = GaussianBelief(X0_MEAN, np.eye(3))
    traj = simulate_ground_truth(model, THETA_TRUE, prior_x, t_steps, seed)
    out = settings.get("out", "trajectory")
    write_states_csv(traj, f"{out}_states.csv")
    write_observations_csv(traj, f"{out}_observations.csv")
    print(f"wrote {out}_states.csv ({t_steps + 1} states) and "
          f"{out}_observations.csv ({traj.n_obs} observations)")


def _cmd_run(args) -> None:
    settings = _merged(args)
    cfg = _run_config_from(settings)
    result = run_experiment(cfg)
    out = settings.get("out")
    if out:
        emit_results(result.runs[0].rows, out, fmt=settings.get("format", "csv"))
    print(
        f"algorithm={cfg.algorithm} runs={cfg.n_runs} failed={result.n_failed} "
        f"nmse_x={result.mean_nmse_x:.6g} nmse_theta={result.mean_nmse_theta:.6g}"
    )


def _cmd_sweep_lambda(args) -> None:
    settings = _merged(args)
    base = _run_config_from(settings)
    norms = [settings["norm"]] if "norm" in settings else [2, math.inf]
    rows = sweep_lambda(
        lambda_grid=settings.get("lambda_grid", LAMBDA_GRID),
        norms=norms,
        n_runs=int(settings.get("n_runs", 20)),
        seed=int(settings.get("seed", 0)),
        base=base,
    )
    lines = ["lambda,norm,nmse_theta,nmse_x,wall_s,restarts,n_failed"]
    for r in rows:
        lines.append(
            f"{r.lam:.17g},{r.norm:.17g},{r.mean_nmse_theta:.17g},"
            f"{r.mean_nmse_x:.17g},{r.mean_wall_s:.17g},{r.mean_restarts:.17g},{r.n_failed}"
        )
    _emit_lines(lines, settings.get("out"))


def _cmd_sweep_noise(args) -> None:
    settings = _merged(args)
    base = _run_config_from(settings)
    rows = noise_sweep(
        sigma_y2_grid=settings.get("sigma_y2_grid", NOISE_GRID),
        n_runs=int(settings.get("n_runs", 20)),
        seed=int(settings.get("seed", 0)),
        base=base,
    )
    lines = ["sigma_y2,nmse_theta,nmse_x,nmse_theta_post,nmse_x_post,n_failed"]
    for r in rows:
        lines.append(
            f"{r.sigma_y2:.17g},{r.mean_nmse_theta:.17g},{r.mean_nmse_x:.17g},"
            f"{r.mean_nmse_theta_post:.17g},{r.mean_nmse_x_post:.17g},{r.n_failed}"
        )
    _emit_lines(lines, settings.get("out"))


def _cmd_continuity(args) -> None:
    settings = _merged(args)
    rows = continuity_experiment(
        sigma_e2_grid=settings.get("sigma_e2_grid", CONTINUITY_GRID),
        n_runs=int(settings.get("n_runs", 100)),
        seed=int(settings.get("seed", 0)),
        model=_model_from(settings),
        t_end=float(settings.get("t_end", 10.0)),
    )
    lines = ["sigma_e2,mean_norm_l2,mean_norm_linf,mean_nmse_x,n_failed"]
    for r in rows:
        lines.append(
            f"{r.sigma_e2:.17g},{r.mean_norm_l2:.17g},{r.mean_norm_linf:.17g},"
            f"{r.mean_nmse_x:.17g},{r.n_failed}"
        )
    _emit_lines(lines, settings.get("out"))


def _cmd_compare(args) -> None:
    settings = _merged(args)
    base = _run_config_from(settings)
    algos = settings.get("algorithms", ["nested_ukf_ekf", "augmented_ukf", "augmented_enkf"])
    if isinstance(algos, str):
        algos = [algos]
    curves = compare_algorithms(
        algorithms=algos,
        n_runs=int(settings.get("n_runs", 20)),
        seed=int(settings.get("seed", 0)),
        base=base,
    )
    lines = ["algorithm,t,nmse_theta,nmse_x"]
    for algo, c in curves.items():
        for t, nth, nx in zip(c.times, c.mean_nmse_theta, c.mean_nmse_x):
            lines.append(f"{algo},{t:.17g},{nth:.17g},{nx:.17g}")
    _emit_lines(lines, settings.get("out"))


def _emit_lines(lines: list[str], out: str | None) -> None:
    text = "\n".join(lines) + "\n"
    if out:
        with open(out, "w", newline="\n") as fh:
            fh.write(text)
        print(f"wrote {out} ({len(lines) - 1} rows)")
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nestedgauss",
        description="Nested Gaussian filter experiments on the stochastic Lorenz 63 model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("simulate", _cmd_simulate),
        ("run", _cmd_run),
        ("sweep-lambda", _cmd_sweep_lambda),
        ("sweep-noise", _cmd_sweep_noise),
        ("continuity", _cmd_continuity),
        ("compare", _cmd_compare),
    ):
        p = sub.add_parser(name)
        _add_common(p)
        p.set_defaults(func=fn)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
