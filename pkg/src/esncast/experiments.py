"""Higher-level studies: performance distributions, reservoir reuse, free runs.

These wrap the build/train/evaluate pipeline into the standard experiment
protocols: sampling the error distribution of a topology at fixed
hyperparameters (summarized by a Gaussian kernel density in log10 error),
re-training stored reservoirs on a different target system, and long
free-running attractor reproductions. Study outputs carry seeds, parameters
and a config hash so any run can be reproduced exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bayesopt import CampaignResult, run_trial
from .evaluation import EPSILON_CAP, forecast
from .integrate import IntegrationError, StepperConfig
from .persistence import config_hash
from .systems import ChaoticSystem, Trajectory, generate_input
from .topology import (
    CYCLE,
    GENERAL,
    K1_CYCLE,
    K1_CUT_CYCLE,
    LINE,
    ConstructionError,
    HyperParams,
    Reservoir,
)
from .training import Readout, Schedule

# Reference optimized hyperparameters for the Lorenz task, one set per
# topology, taken from prior optimization campaigns. Used as defaults for
# distribution studies and demos.
REFERENCE_LORENZ_PARAMS = {
    GENERAL: HyperParams(gamma=7.7, sigma=0.81, rho_in=0.37, k=3, rho_r=0.41,
                         topology=GENERAL),
    K1_CYCLE: HyperParams(gamma=10.9, sigma=0.44, rho_in=0.30, k=1, rho_r=0.30,
                          topology=K1_CYCLE),
    K1_CUT_CYCLE: HyperParams(gamma=7.2, sigma=0.78, rho_in=0.30, k=1, rho_r=0.30,
                              topology=K1_CUT_CYCLE),
    CYCLE: HyperParams(gamma=7.9, sigma=0.17, rho_in=0.58, k=1, rho_r=0.30,
                       topology=CYCLE),
    LINE: HyperParams(gamma=10.6, sigma=0.79, rho_in=0.30, k=1, rho_r=0.45,
                      topology=LINE),
}

KDE_BANDWIDTH = 0.35
KDE_GRID_SIZE = 512


def gaussian_kde_log10(samples: np.ndarray, bandwidth: float = KDE_BANDWIDTH,
                       grid_size: int = KDE_GRID_SIZE):
    """Gaussian kernel density of log10(samples) on a padded grid.

    Saturated values participate at the cap rather than being dropped, so
    failure mass shows up in the tail. Returns (grid, density); the density
    integrates to one over the grid.
    """
    logs = np.log10(np.clip(np.asarray(samples, dtype=float), 1e-300, None))
    lo = logs.min() - 3 * bandwidth
    hi = logs.max() + 3 * bandwidth
    grid = np.linspace(lo, hi, grid_size)
    z = (grid[None, :] - logs[:, None]) / bandwidth
    density = np.exp(-0.5 * z**2).mean(axis=0) / (bandwidth * np.sqrt(2 * np.pi))
    return grid, density


@dataclass
class DistributionStudy:
    """Error distribution of one topology at fixed hyperparameters."""

    topology: str
    system: str
    params: HyperParams
    samples: np.ndarray
    kde_bandwidth: float
    kde_grid: np.ndarray = field(repr=False)
    kde_density: np.ndarray = field(repr=False)
    median: float
    provenance: dict = field(default_factory=dict)


def run_distribution(
    params: HyperParams,
    system: ChaoticSystem,
    n: int = 200,
    seeds: list[int] | None = None,
    schedule: Schedule = Schedule(),
    n_nodes: int = 100,
    master_seed: int = 0,
    progress: bool = False,
) -> DistributionStudy:
    """Train and score n fresh reservoirs at one fixed hyperparameter set.

    All reservoirs share the same training signal (seeded off master_seed);
    individual failures are recorded at the saturation cap. Results are
    ordered by build seed, so the study is reproducible element by element.
    """
    if seeds is None:
        seeds = [int(s) for s in
                 np.random.SeedSequence(master_seed, spawn_key=(10,)).generate_state(n)]
    ic_seed = int(np.random.SeedSequence(master_seed, spawn_key=(11,)).generate_state(1)[0])
    source: ChaoticSystem | Trajectory = system
    if system.substeps > 1:
        source = generate_input(system, schedule.t_end, schedule.dt, ic_seed)
    eps = np.empty(len(seeds))
    for i, seed in enumerate(sorted(seeds)):
        try:
            eps[i] = run_trial(params, source, seed, schedule, n_nodes, ic_seed=ic_seed)
        except (IntegrationError, ConstructionError, np.linalg.LinAlgError):
            eps[i] = EPSILON_CAP
        if progress and (i + 1) % 25 == 0:
            print(f"[distribution {params.topology}] {i + 1}/{len(seeds)}", flush=True)
    grid, density = gaussian_kde_log10(eps)
    return DistributionStudy(
        topology=params.topology, system=system.name, params=params,
        samples=eps, kde_bandwidth=KDE_BANDWIDTH, kde_grid=grid,
        kde_density=density, median=float(np.median(eps)),
        provenance={
            "master_seed": master_seed,
            "seeds": sorted(seeds),
            "config_hash": config_hash({
                "topology": params.topology, "system": system.name,
                "n": len(seeds), "master_seed": master_seed}),
        },
    )


@dataclass
class TransferStudy:
    """Reservoirs tuned on one system, readout re-trained on another."""

    source_system: str
    target_system: str
    topology: str
    epsilons: np.ndarray
    epsilon_min: float
    mean: float
    std: float
    provenance: dict = field(default_factory=dict)


def run_transfer(
    campaign_results: list[CampaignResult],
    target: ChaoticSystem,
    schedule: Schedule = Schedule(),
    n_nodes: int = 100,
    master_seed: int = 0,
) -> TransferStudy:
    """Re-train only the readout of each campaign's best reservoir on the
    target system, leaving every other part untouched, and score it there.
    """
    if not campaign_results:
        raise ValueError("no campaign results to transfer")
    topology = campaign_results[0].topology
    source_name = campaign_results[0].system
    ic_seed = int(np.random.SeedSequence(master_seed, spawn_key=(12,)).generate_state(1)[0])
    source: ChaoticSystem | Trajectory = target
    if target.substeps > 1:
        source = generate_input(target, schedule.t_end, schedule.dt, ic_seed)
    eps = np.empty(len(campaign_results))
    for i, camp in enumerate(campaign_results):
        # run_trial rebuilds the identical reservoir from (params, seed) and
        # fits a fresh readout against the target signal.
        try:
            eps[i] = run_trial(camp.best_params, source, camp.best_seed,
                               schedule, n_nodes, ic_seed=ic_seed)
        except (IntegrationError, ConstructionError, np.linalg.LinAlgError):
            eps[i] = EPSILON_CAP
    return TransferStudy(
        source_system=source_name, target_system=target.name, topology=topology,
        epsilons=eps, epsilon_min=float(eps.min()), mean=float(eps.mean()),
        std=float(eps.std(ddof=1) if len(eps) > 1 else 0.0),
        provenance={
            "master_seed": master_seed,
            "campaign_seeds": [c.master_seed for c in campaign_results],
            "config_hash": config_hash({
                "topology": topology, "source": source_name,
                "target": target.name, "n": len(campaign_results)}),
        },
    )


@dataclass
class FreerunResult:
    trajectory: Trajectory
    diverged: bool


def run_freerun_attractor(
    reservoir: Reservoir,
    readout: Readout,
    r_init: np.ndarray,
    duration: float = 100.0,
    cfg: StepperConfig = StepperConfig(),
    csv_path: str | Path | None = None,
    svg_path: str | Path | None = None,
) -> FreerunResult:
    """Long autonomous run; optionally writes the signal CSV and an x/z plot.

    Divergence truncates the trajectory and sets the flag instead of raising.
    """
    traj = forecast(reservoir, readout, r_init, duration, cfg)
    expected = int(round(duration / cfg.dt)) + 1
    diverged = traj.samples.shape[0] < expected
    if csv_path is not None:
        write_trajectory_csv(traj, csv_path)
    if svg_path is not None:
        plot_attractor_svg(traj, svg_path)
    return FreerunResult(trajectory=traj, diverged=diverged)


def write_trajectory_csv(traj: Trajectory, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "z"])
        for t, row in zip(traj.times(), traj.samples):
            writer.writerow([repr(float(t))] + [repr(float(v)) for v in row])


def read_trajectory_csv(path: str | Path) -> Trajectory:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    if data.shape[0] < 2:
        raise ValueError(f"{path} holds fewer than two samples")
    return Trajectory(t0=data[0, 0], dt=float(data[1, 0] - data[0, 0]),
                      samples=data[:, 1:])


def plot_attractor_svg(traj: Trajectory, path: str | Path,
                       title: str | None = None) -> None:
    """x/z-plane projection of a 3-channel signal, written as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(traj.samples[:, 0], traj.samples[:, 2], lw=0.3, color="tab:blue")
    ax.set_xlabel("x")
    ax.set_ylabel("z")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_kde_svg(studies: list[DistributionStudy], path: str | Path) -> None:
    """Overlay the log10-error densities of several studies."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for study in studies:
        ax.plot(study.kde_grid, study.kde_density,
                label=f"{study.topology} (median {study.median:.3g})")
        ax.axvline(np.log10(max(study.median, 1e-300)), lw=0.5, ls="--",
                   color=ax.lines[-1].get_color())
    ax.set_xlabel(r"$\log_{10}$ error")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def bootstrap_median_diff(a: np.ndarray, b: np.ndarray, n_boot: int = 2000,
                          seed: int = 0) -> np.ndarray:
    """Bootstrap samples of median(a) - median(b) under resampling."""
    rng = np.random.default_rng(seed)
    a = np.asarray(a)
    b = np.asarray(b)
    out = np.empty(n_boot)
    for i in range(n_boot):
        out[i] = (np.median(rng.choice(a, a.size, replace=True))
                  - np.median(rng.choice(b, b.size, replace=True)))
    return out
