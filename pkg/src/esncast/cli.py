"""Command-line front door for reproducible experiments.

Every run resolves its configuration from defaults, an optional key=value
config file, and flags (flags win), echoes the resolved configuration to a
JSON file next to its outputs, and prints a one-line summary. Exit codes:
0 success, 2 configuration error, 3 numeric failure, 4 I/O failure.
"""
from __future__ import annotations

import argparse
import glob
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bayesopt import load_campaign_result, run_campaign, run_trial
from .evaluation import EPSILON_CAP, evaluate_climate
from .experiments import (
    REFERENCE_LORENZ_PARAMS,
    gaussian_kde_log10,
    plot_attractor_svg,
    plot_kde_svg,
    read_trajectory_csv,
    run_distribution,
    run_freerun_attractor,
    run_transfer,
)
from .integrate import IntegrationError, StepperConfig
from .persistence import (
    SnapshotError,
    cached_calibration,
    config_hash,
    load_snapshot,
    save_calibration,
    save_snapshot,
    snapshot_of,
)
from .systems import SYSTEM_NAMES, CalibrationError, calibrate_system
from .topology import (
    HYPERPARAMETER_BOUNDS,
    TOPOLOGIES,
    ConstructionError,
    HyperParams,
    build_reservoir,
)
from .training import Schedule, fit_ridge, run_training

logger = logging.getLogger("esncast")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4

OUTPUT_DIR_ENV = "ESNCAST_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Resolved settings of one CLI run; defaults are the standard protocol."""

    command: str
    system: str | None = None
    topology: str | None = None
    budget: int = 100
    repeats: int = 20
    seed: int = 0
    n_nodes: int = 100
    dt: float = 0.01
    t_transient: float = 100.0
    t_train: float = 200.0
    t_end: float = 300.0
    n_windows: int = 50
    horizon: float | None = None  # defaults to one Lyapunov time
    jobs: int = 1
    output_dir: Path = field(default_factory=Path.cwd)
    extra: dict = field(default_factory=dict)

    def schedule(self) -> Schedule:
        lam = 1.0 / self.horizon if self.horizon else Schedule().lambda_target
        return Schedule(dt=self.dt, t_transient=self.t_transient,
                        t_train=self.t_train, t_end=self.t_end,
                        n_windows=self.n_windows, lambda_target=lam)

    def echo(self) -> dict:
        d = {k: (str(v) if isinstance(v, Path) else v)
             for k, v in self.__dict__.items() if k != "extra"}
        d.update(self.extra)
        d["version"] = __version__
        d["config_hash"] = config_hash(d)
        return d


def _parse_config_file(path: str) -> dict:
    """Flat key = value file; values parse as JSON scalars when possible."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            out[key.replace("-", "_")] = json.loads(value)
        except json.JSONDecodeError:
            out[key.replace("-", "_")] = value
    return out


def _hyperparams_from(args, topology: str) -> HyperParams:
    """Hyperparameters from flags, defaulting to the bundled reference set."""
    ref = REFERENCE_LORENZ_PARAMS[topology]
    values = {
        "gamma": args.gamma if args.gamma is not None else ref.gamma,
        "sigma": args.sigma if args.sigma is not None else ref.sigma,
        "rho_in": args.rho_in if args.rho_in is not None else ref.rho_in,
        "k": args.k if args.k is not None else ref.k,
        "rho_r": args.rho_r if args.rho_r is not None else ref.rho_r,
    }
    for name, value in values.items():
        lo, hi = HYPERPARAMETER_BOUNDS[name]
        if name == "k" and topology != "general":
            continue
        if not lo <= value <= hi:
            raise ConfigError(
                f"{name} = {value} outside the searched range [{lo}, {hi}]")
    return HyperParams(topology=topology, **values)


def _calibrated(cfg: RunConfig):
    cache = cfg.extra.get("calibration_cache")
    horizon = float(cfg.extra.get("calibration_horizon", 20000.0))
    cal_seed = int(cfg.extra.get("calibration_seed", 0))
    if cache:
        return cached_calibration(cfg.system, cal_seed, horizon, cache)
    return calibrate_system(cfg.system, sample_horizon=horizon, rng_seed=cal_seed)


def _write_echo(cfg: RunConfig) -> None:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    path = cfg.output_dir / f"{cfg.command}_config_echo.json"
    path.write_text(json.dumps(cfg.echo(), sort_keys=True, indent=2))


def _study_name(cfg: RunConfig, study: str) -> str:
    return f"{study}_{cfg.system}_{cfg.topology}_{cfg.seed}"


def _cmd_calibrate(cfg: RunConfig) -> int:
    system = _calibrated(cfg)
    out = cfg.output_dir / f"calibration_{cfg.system}_{cfg.seed}.json"
    save_calibration(system, out)
    print(f"calibrated {system.name}: time_scale = {system.time_scale:.6g}, "
          f"shift = {np.round(system.norm_shift, 4).tolist()}, "
          f"scale = {np.round(system.norm_scale, 4).tolist()} -> {out}")
    return EXIT_OK


def _cmd_train(cfg: RunConfig, args) -> int:
    hp = _hyperparams_from(args, cfg.topology)
    system = _calibrated(cfg)
    schedule = cfg.schedule()
    reservoir = build_reservoir(hp, n=cfg.n_nodes, seed=cfg.seed)
    record = run_training(reservoir, system, schedule,
                          StepperConfig(dt=cfg.dt), ic_seed=cfg.seed)
    readout = fit_ridge(record.states, record.targets,
                        fout_split=reservoir.fout_split)
    resid = record.targets - record.states @ readout.w_out.T
    rms = float(np.sqrt(np.mean(resid**2)))
    out = cfg.output_dir / f"{_study_name(cfg, 'reservoir')}.json"
    save_snapshot(snapshot_of(reservoir, system, readout,
                              {"train_rms": rms, "ic_seed": cfg.seed}), out)
    print(f"trained {cfg.topology} on {cfg.system}: alpha = {readout.alpha:g}, "
          f"train rms = {rms:.3e} -> {out}")
    return EXIT_OK


def _cmd_evaluate(cfg: RunConfig, args) -> int:
    snapshot = load_snapshot(args.snapshot)
    system = snapshot.system if cfg.system is None else _calibrated(cfg)
    if system is None:
        raise ConfigError("snapshot has no calibration; pass --system")
    reservoir = snapshot.to_reservoir()
    schedule = cfg.schedule()
    record = run_training(reservoir, system, schedule,
                          StepperConfig(dt=cfg.dt), ic_seed=cfg.seed)
    readout = snapshot.readout or fit_ridge(record.states, record.targets,
                                            fout_split=reservoir.fout_split)
    report = evaluate_climate(reservoir, readout, record, record.test_input)
    out = cfg.output_dir / f"evaluation_{system.name}_{snapshot.hp.topology}_{cfg.seed}.json"
    hp = snapshot.hp
    out.write_text(json.dumps({
        "epsilon": report.epsilon,
        "epsilon_i": report.epsilon_i.tolist(),
        "start_times": report.start_times.tolist(),
        "horizon": report.horizon,
        "saturated_windows": int(report.saturated.sum()),
        "topology": hp.topology,
        "hyperparams": {"gamma": hp.gamma, "sigma": hp.sigma,
                        "rho_in": hp.rho_in, "k": hp.k, "rho_r": hp.rho_r},
        "system": system.name,
        "seed": cfg.seed,
        "snapshot_seed": snapshot.seed,
    }, indent=2))
    print(f"epsilon = {report.epsilon:.4g} over {schedule.n_windows} windows "
          f"({int(report.saturated.sum())} saturated) -> {out}")
    return EXIT_OK


def _cmd_optimize(cfg: RunConfig) -> int:
    system = _calibrated(cfg)
    log_path = cfg.output_dir / f"{_study_name(cfg, 'campaign')}.jsonl"
    result = run_campaign(cfg.topology, system, budget=cfg.budget,
                          master_seed=cfg.seed, schedule=cfg.schedule(),
                          n_nodes=cfg.n_nodes, log_path=log_path,
                          progress=bool(cfg.extra.get("progress")))
    out = cfg.output_dir / f"{_study_name(cfg, 'campaign')}.json"
    bp = result.best_params
    out.write_text(json.dumps({
        "topology": result.topology, "system": result.system,
        "best_epsilon": result.best_epsilon, "best_seed": result.best_seed,
        "iterations": result.iterations, "master_seed": result.master_seed,
        "best_params": {"gamma": bp.gamma, "sigma": bp.sigma, "rho_in": bp.rho_in,
                        "k": bp.k, "rho_r": bp.rho_r},
    }, indent=2))
    print(f"best epsilon = {result.best_epsilon:.4g} after {result.iterations} "
          f"iterations (log: {log_path})")
    return EXIT_OK


def _distribution_worker(payload):
    params, source, seed, schedule, n_nodes, ic_seed = payload
    try:
        return seed, run_trial(params, source, seed, schedule, n_nodes, ic_seed=ic_seed)
    except Exception:
        return seed, EPSILON_CAP


def _cmd_distribution(cfg: RunConfig, args) -> int:
    if args.params_snapshot:
        hp = load_snapshot(args.params_snapshot).hp
    else:
        hp = _hyperparams_from(args, cfg.topology)
    system = _calibrated(cfg)
    n = int(cfg.extra.get("n_samples", 200))
    schedule = cfg.schedule()
    if cfg.jobs > 1:
        seeds = sorted(int(s) for s in
                       np.random.SeedSequence(cfg.seed, spawn_key=(10,)).generate_state(n))
        ic_seed = int(np.random.SeedSequence(cfg.seed, spawn_key=(11,)).generate_state(1)[0])
        from .systems import generate_input
        source = system
        if system.substeps > 1:
            source = generate_input(system, schedule.t_end, schedule.dt, ic_seed)
        payloads = [(hp, source, s, schedule, cfg.n_nodes, ic_seed) for s in seeds]
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = dict(pool.map(_distribution_worker, payloads))
        eps = np.array([results[s] for s in seeds])
        grid, density = gaussian_kde_log10(eps)
        from .experiments import DistributionStudy, KDE_BANDWIDTH
        study = DistributionStudy(
            topology=hp.topology, system=system.name, params=hp, samples=eps,
            kde_bandwidth=KDE_BANDWIDTH, kde_grid=grid, kde_density=density,
            median=float(np.median(eps)),
            provenance={"master_seed": cfg.seed, "seeds": seeds,
                        "config_hash": config_hash({"n": n, "seed": cfg.seed})})
    else:
        study = run_distribution(hp, system, n=n, schedule=schedule,
                                 n_nodes=cfg.n_nodes, master_seed=cfg.seed,
                                 progress=bool(cfg.extra.get("progress")))
    base = _study_name(cfg, "distribution")
    csv_path = cfg.output_dir / f"{base}.csv"
    with open(csv_path, "w") as fh:
        fh.write("seed,epsilon\n")
        for s, e in zip(study.provenance["seeds"], study.samples):
            fh.write(f"{s},{e!r}\n")
    plot_kde_svg([study], cfg.output_dir / f"{base}.svg")
    summary = cfg.output_dir / f"{base}.json"
    summary.write_text(json.dumps({
        "topology": study.topology, "system": study.system,
        "median": study.median, "n": len(study.samples),
        "tail_mass_above_1": float(np.mean(study.samples > 1.0)),
        "provenance": study.provenance,
    }, indent=2))
    print(f"distribution over {len(study.samples)} reservoirs: "
          f"median epsilon = {study.median:.4g}, "
          f"P(eps > 1) = {float(np.mean(study.samples > 1.0)):.3f} -> {summary}")
    return EXIT_OK


def _cmd_transfer(cfg: RunConfig, args) -> int:
    logs = sorted(p for pattern in args.campaign_logs for p in glob.glob(pattern))
    if not logs:
        raise ConfigError("no campaign logs matched --campaign-logs")
    campaigns = [load_campaign_result(p) for p in logs]
    target = _calibrated(cfg)
    study = run_transfer(campaigns, target, schedule=cfg.schedule(),
                         n_nodes=cfg.n_nodes, master_seed=cfg.seed)
    out = cfg.output_dir / (
        f"transfer_{study.source_system}_to_{study.target_system}_"
        f"{study.topology}_{cfg.seed}.json")
    out.write_text(json.dumps({
        "source_system": study.source_system, "target_system": study.target_system,
        "topology": study.topology, "epsilons": study.epsilons.tolist(),
        "epsilon_min": study.epsilon_min, "mean": study.mean, "std": study.std,
        "provenance": study.provenance,
    }, indent=2))
    print(f"transfer {study.source_system} -> {study.target_system}: "
          f"epsilon = {study.mean:.3g} +/- {study.std:.3g}, "
          f"min = {study.epsilon_min:.4g} over {len(study.epsilons)} reservoirs -> {out}")
    return EXIT_OK


def _cmd_freerun(cfg: RunConfig, args) -> int:
    snapshot = load_snapshot(args.snapshot)
    if snapshot.readout is None:
        raise ConfigError("snapshot has no trained readout; run `train` first")
    system = snapshot.system if cfg.system is None else _calibrated(cfg)
    if system is None:
        raise ConfigError("snapshot has no calibration; pass --system")
    reservoir = snapshot.to_reservoir()
    schedule = cfg.schedule()
    record = run_training(reservoir, system, schedule,
                          StepperConfig(dt=cfg.dt), ic_seed=cfg.seed)
    base = f"freerun_{system.name}_{snapshot.hp.topology}_{cfg.seed}"
    result = run_freerun_attractor(
        reservoir, snapshot.readout, record.r_end_train,
        duration=float(args.duration), cfg=StepperConfig(dt=cfg.dt),
        csv_path=cfg.output_dir / f"{base}.csv",
        svg_path=cfg.output_dir / f"{base}.svg")
    n = result.trajectory.samples.shape[0]
    print(f"free run: {n} samples{' (diverged, truncated)' if result.diverged else ''} "
          f"-> {cfg.output_dir / (base + '.svg')}")
    return EXIT_OK


def _cmd_plot(cfg: RunConfig, args) -> int:
    if args.freerun:
        traj = read_trajectory_csv(args.freerun)
        out = Path(args.out) if args.out else cfg.output_dir / (
            Path(args.freerun).stem + ".svg")
        plot_attractor_svg(traj, out)
        print(f"wrote {out}")
        return EXIT_OK
    if args.kde:
        data = np.loadtxt(args.kde, delimiter=",", skiprows=1, usecols=1)
        grid, density = gaussian_kde_log10(data)
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(grid, density)
        ax.set_xlabel(r"$\log_{10}$ error")
        ax.set_ylabel("density")
        out = Path(args.out) if args.out else cfg.output_dir / (
            Path(args.kde).stem + "_kde.svg")
        fig.tight_layout()
        fig.savefig(out, format="svg")
        plt.close(fig)
        print(f"wrote {out}")
        return EXIT_OK
    raise ConfigError("plot needs --freerun or --kde")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="esncast",
        description="Echo state networks for chaotic system forecasting.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, system_required=False, topology=False):
        p.add_argument("--system", choices=SYSTEM_NAMES, required=system_required,
                       help="benchmark system (calibrated on demand)")
        if topology:
            p.add_argument("--topology", choices=TOPOLOGIES, default="general",
                           help="reservoir topology (default: general)")
        p.add_argument("--seed", type=int, default=None,
                       help="master seed of the run (default: 0)")
        p.add_argument("--output-dir", default=None,
                       help=f"output directory (default: ${OUTPUT_DIR_ENV} or cwd)")
        p.add_argument("--config", default=None,
                       help="key = value config file; flags take precedence")
        p.add_argument("--dt", type=float, default=None,
                       help="integration step (default: 0.01)")
        p.add_argument("--t-transient", type=float, default=None,
                       help="discarded transient end (default: 100)")
        p.add_argument("--t-train", type=float, default=None,
                       help="training window end (default: 200)")
        p.add_argument("--t-end", type=float, default=None,
                       help="testing window end (default: 300)")
        p.add_argument("--windows", type=int, default=None,
                       help="forecast restart count (default: 50)")
        p.add_argument("--horizon", type=float, default=None,
                       help="forecast horizon (default: one Lyapunov time, 1.104)")
        p.add_argument("--nodes", type=int, default=None,
                       help="reservoir size (default: 100)")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes for parallel studies "
                            "(default: all cores)")
        p.add_argument("--calibration-cache", default=None,
                       help="directory holding calibration JSON files")
        p.add_argument("--progress", action="store_true",
                       help="print per-iteration progress")

    def add_hyperparams(p):
        p.add_argument("--gamma", type=float, default=None,
                       help="reservoir rate (searched range 7 - 11)")
        p.add_argument("--sigma", type=float, default=None,
                       help="input connection probability (0.1 - 1.0)")
        p.add_argument("--rho-in", type=float, default=None, dest="rho_in",
                       help="input weight scale (0.3 - 1.5)")
        p.add_argument("--k", type=int, default=None,
                       help="internal in-degree (1 - 5, general topology only)")
        p.add_argument("--rho-r", type=float, default=None, dest="rho_r",
                       help="internal spectral radius (0.3 - 1.5)")

    p = sub.add_parser("calibrate", help="fix time scale and normalization of a system")
    add_common(p, system_required=True)

    p = sub.add_parser("train", help="build and train one reservoir, save a snapshot")
    add_common(p, system_required=True, topology=True)
    add_hyperparams(p)

    p = sub.add_parser("evaluate", help="score a snapshot with the climate error")
    add_common(p)
    p.add_argument("--snapshot", required=True, help="reservoir snapshot JSON")

    p = sub.add_parser("optimize", help="run one Bayesian optimization campaign")
    add_common(p, system_required=True, topology=True)
    p.add_argument("--budget", type=int, default=None,
                   help="reservoir evaluations per campaign (default: 100)")

    p = sub.add_parser("distribution", help="error distribution at fixed hyperparameters")
    add_common(p, system_required=True, topology=True)
    add_hyperparams(p)
    p.add_argument("--n", type=int, default=None, dest="n_samples",
                   help="number of reservoirs (default: 200)")
    p.add_argument("--params-snapshot", default=None,
                   help="take hyperparameters from this snapshot instead of flags")

    p = sub.add_parser("transfer", help="re-train stored reservoirs on a new system")
    add_common(p, system_required=True)
    p.add_argument("--campaign-logs", nargs="+", required=True,
                   help="campaign .jsonl logs (globs) of the source system")

    p = sub.add_parser("freerun", help="long autonomous run of a trained snapshot")
    add_common(p)
    p.add_argument("--snapshot", required=True, help="trained reservoir snapshot")
    p.add_argument("--duration", type=float, default=100.0,
                   help="free-run length in time units (default: 100)")

    p = sub.add_parser("plot", help="render saved study output as SVG")
    add_common(p)
    p.add_argument("--freerun", default=None, help="trajectory CSV to project (x/z)")
    p.add_argument("--kde", default=None, help="distribution CSV to density-plot")
    p.add_argument("--out", default=None, help="output SVG path")
    return parser


def _resolve_config(args) -> RunConfig:
    file_cfg = _parse_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    out_dir = args.output_dir or file_cfg.get(
        "output_dir", os.environ.get(OUTPUT_DIR_ENV, "."))
    cfg = RunConfig(
        command=args.command,
        system=getattr(args, "system", None),
        topology=getattr(args, "topology", None),
        budget=int(pick(getattr(args, "budget", None), "budget", 100)),
        seed=int(pick(args.seed, "seed", 0)),
        n_nodes=int(pick(args.nodes, "nodes", 100)),
        dt=float(pick(args.dt, "dt", 0.01)),
        t_transient=float(pick(args.t_transient, "t_transient", 100.0)),
        t_train=float(pick(args.t_train, "t_train", 200.0)),
        t_end=float(pick(args.t_end, "t_end", 300.0)),
        n_windows=int(pick(args.windows, "windows", 50)),
        horizon=pick(args.horizon, "horizon", None),
        jobs=int(pick(args.jobs, "jobs", os.cpu_count() or 1)),
        output_dir=Path(out_dir),
    )
    if args.calibration_cache or file_cfg.get("calibration_cache"):
        cfg.extra["calibration_cache"] = args.calibration_cache or file_cfg["calibration_cache"]
    for key in ("calibration_horizon", "calibration_seed", "n_samples"):
        if getattr(args, key, None) is not None:
            cfg.extra[key] = getattr(args, key)
        elif key in file_cfg:
            cfg.extra[key] = file_cfg[key]
    if getattr(args, "progress", False):
        cfg.extra["progress"] = True
    try:
        cfg.schedule()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg.n_nodes < 2:
        raise ConfigError(f"nodes = {cfg.n_nodes} is below the minimum of 2")
    if cfg.budget < 1:
        raise ConfigError(f"budget = {cfg.budget} must be at least 1")
    return cfg


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        _write_echo(cfg)
        if args.command == "calibrate":
            return _cmd_calibrate(cfg)
        if args.command == "train":
            return _cmd_train(cfg, args)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg, args)
        if args.command == "optimize":
            return _cmd_optimize(cfg)
        if args.command == "distribution":
            return _cmd_distribution(cfg, args)
        if args.command == "transfer":
            return _cmd_transfer(cfg, args)
        if args.command == "freerun":
            return _cmd_freerun(cfg, args)
        if args.command == "plot":
            return _cmd_plot(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IntegrationError, CalibrationError, ConstructionError,
            np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (SnapshotError, OSError) as exc:
        print(f"I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
