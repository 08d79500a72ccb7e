"""Gaussian-process Bayesian search over the construction hyperparameters.

Each iteration proposes one hyperparameter set, builds a single random
reservoir with it, trains the readout, and scores the result with the
climate error. The first proposals are a Latin hypercube; afterwards a GP
with an anisotropic Matern-5/2 kernel plus a fitted noise term models
log10(error) over the unit-normalized box and the next point maximizes
expected improvement. The integer in-degree is searched continuously and
rounded. Everything is reproducible from one master seed, and a campaign
can resume from its JSON-lines log.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm
from sklearn.exceptions import ConvergenceWarning
from sklearn.gaussian_process import GaussianProcessRegressor
from sklearn.gaussian_process.kernels import ConstantKernel, Matern, WhiteKernel

from .evaluation import EPSILON_CAP, evaluate_climate
from .integrate import IntegrationError
from .systems import ChaoticSystem, Trajectory, generate_input
from .topology import (
    GENERAL,
    HYPERPARAMETER_BOUNDS,
    TOPOLOGIES,
    ConstructionError,
    HyperParams,
    build_reservoir,
)
from .training import Schedule, fit_ridge, run_training

logger = logging.getLogger(__name__)

N_INITIAL_POINTS = 10
N_CANDIDATES = 10_000
LOG_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SearchSpace:
    """The hyperparameter box for one topology.

    The in-degree dimension only exists for the general topology; the others
    pin k = 1 (or ignore it entirely), so the search runs in 4 dimensions.
    """

    topology: str = GENERAL

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")

    @property
    def dim_names(self) -> tuple[str, ...]:
        if self.topology == GENERAL:
            return ("gamma", "sigma", "rho_in", "k", "rho_r")
        return ("gamma", "sigma", "rho_in", "rho_r")

    @property
    def ndim(self) -> int:
        return len(self.dim_names)

    def to_unit(self, hp: HyperParams) -> np.ndarray:
        x = np.empty(self.ndim)
        for i, name in enumerate(self.dim_names):
            lo, hi = HYPERPARAMETER_BOUNDS[name]
            x[i] = (getattr(hp, name) - lo) / (hi - lo)
        return x

    def from_unit(self, x) -> HyperParams:
        vals = {}
        for i, name in enumerate(self.dim_names):
            lo, hi = HYPERPARAMETER_BOUNDS[name]
            v = lo + float(np.clip(x[i], 0.0, 1.0)) * (hi - lo)
            vals[name] = int(round(v)) if name == "k" else v
        vals.setdefault("k", 1)
        return HyperParams(topology=self.topology, **vals)


@dataclass
class Observation:
    """One completed trial: the proposal, its score, and its build seed."""

    params: HyperParams
    objective: float  # log10 of the (capped) climate error
    epsilon: float
    seed: int
    trained: bool = True
    iteration: int = 0

    def to_json(self) -> str:
        d = {
            "iteration": self.iteration,
            "gamma": self.params.gamma,
            "sigma": self.params.sigma,
            "rho_in": self.params.rho_in,
            "k": self.params.k,
            "rho_r": self.params.rho_r,
            "topology": self.params.topology,
            "objective": self.objective,
            "epsilon": self.epsilon,
            "seed": self.seed,
            "trained": self.trained,
        }
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "Observation":
        d = json.loads(line)
        hp = HyperParams(gamma=d["gamma"], sigma=d["sigma"], rho_in=d["rho_in"],
                         k=d["k"], rho_r=d["rho_r"], topology=d["topology"])
        return cls(params=hp, objective=d["objective"], epsilon=d["epsilon"],
                   seed=d["seed"], trained=d["trained"], iteration=d["iteration"])


@dataclass
class CampaignResult:
    """Outcome of one optimization campaign."""

    topology: str
    system: str
    best_params: HyperParams
    best_epsilon: float
    best_seed: int
    history: list[Observation]
    iterations: int
    master_seed: int

    @property
    def best_observation(self) -> Observation:
        return min(self.history, key=lambda o: o.epsilon)


@dataclass
class CampaignStats:
    """Spread of best errors across repeated campaigns."""

    topology: str
    system: str
    best_epsilons: np.ndarray
    results: list[CampaignResult] = field(repr=False, default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.best_epsilons))

    @property
    def std(self) -> float:
        return float(np.std(self.best_epsilons, ddof=1))


def latin_hypercube(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    """n space-filling points in the unit cube, one per stratum per axis."""
    out = np.empty((n, d))
    for j in range(d):
        out[:, j] = (rng.permutation(n) + rng.random(n)) / n
    return out


def expected_improvement(mu: np.ndarray, sd: np.ndarray, y_best: float,
                         xi: float = 0.01) -> np.ndarray:
    """EI for minimization; zero where the predictive spread vanishes."""
    sd = np.asarray(sd)
    mu = np.asarray(mu)
    improve = y_best - mu - xi
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, improve / sd, 0.0)
        ei = np.where(sd > 0, improve * norm.cdf(z) + sd * norm.pdf(z), 0.0)
    return np.maximum(ei, 0.0)


def _fit_gp(x: np.ndarray, y: np.ndarray, seed: int) -> GaussianProcessRegressor:
    d = x.shape[1]
    kernel = (
        ConstantKernel(1.0, (1e-3, 1e3))
        * Matern(length_scale=np.ones(d), length_scale_bounds=(1e-2, 1e2), nu=2.5)
        + WhiteKernel(noise_level=0.01, noise_level_bounds=(1e-8, 10.0))
    )
    gp = GaussianProcessRegressor(
        kernel=kernel, normalize_y=True, n_restarts_optimizer=1,
        random_state=seed,
    )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        gp.fit(x, y)
    return gp


def propose_next(
    history: list[Observation],
    space: SearchSpace,
    rng: np.random.Generator,
    n_init: int = N_INITIAL_POINTS,
    init_design: np.ndarray | None = None,
    n_candidates: int = N_CANDIDATES,
    gp_seed: int = 0,
) -> HyperParams:
    """Next hyperparameter set to try.

    While fewer than n_init observations exist the proposal comes from a
    Latin hypercube over the unit box (pass init_design, or pass an
    identically seeded rng on each early call so the design is consistent).
    Afterwards a GP fit of log10(error) drives expected improvement,
    maximized over random candidates and polished locally. GP failures fall
    back to a random in-bounds proposal.
    """
    if init_design is None:
        init_design = latin_hypercube(n_init, space.ndim, rng)
    if len(history) < len(init_design):
        return space.from_unit(init_design[len(history)])

    x = np.array([space.to_unit(o.params) for o in history])
    y = np.array([o.objective for o in history])
    try:
        gp = _fit_gp(x, y, gp_seed)
        cand = rng.random((n_candidates, space.ndim))
        mu, sd = gp.predict(cand, return_std=True)
        ei = expected_improvement(mu, sd, float(y.min()))
        x0 = cand[int(np.argmax(ei))]

        def neg_ei(pt):
            m, s = gp.predict(pt.reshape(1, -1), return_std=True)
            return -float(expected_improvement(m, s, float(y.min()))[0])

        res = minimize(neg_ei, x0, method="L-BFGS-B",
                       bounds=[(0.0, 1.0)] * space.ndim)
        best = res.x if res.success and -res.fun >= float(ei.max()) else x0
        return space.from_unit(best)
    except Exception as exc:  # GP fit failure: fall back to random proposal
        logger.warning("GP proposal failed (%s); falling back to random", exc)
        return space.from_unit(rng.random(space.ndim))


def run_trial(
    hp: HyperParams,
    source: ChaoticSystem | Trajectory,
    seed: int,
    schedule: Schedule = Schedule(),
    n_nodes: int = 100,
    ic_seed: int = 0,
) -> float:
    """Build one random reservoir, train it, and return its climate error."""
    reservoir = build_reservoir(hp, n=n_nodes, seed=seed)
    record = run_training(reservoir, source, schedule, ic_seed=ic_seed)
    readout = fit_ridge(record.states, record.targets, fout_split=reservoir.fout_split)
    report = evaluate_climate(reservoir, readout, record, record.test_input)
    return float(min(report.epsilon, EPSILON_CAP))


def _campaign_header(topology, system_name, master_seed, schedule, n_nodes):
    # The budget is deliberately absent: it is a stopping point, not part of
    # the search trajectory, so a log can be extended by re-running with a
    # larger budget.
    return {
        "type": "campaign",
        "format_version": LOG_FORMAT_VERSION,
        "topology": topology,
        "system": system_name,
        "master_seed": master_seed,
        "n_nodes": n_nodes,
        "dt": schedule.dt,
        "t_transient": schedule.t_transient,
        "t_train": schedule.t_train,
        "t_end": schedule.t_end,
        "n_windows": schedule.n_windows,
    }


def _load_campaign_log(path: Path, header: dict) -> list[Observation]:
    lines = path.read_text().splitlines()
    if not lines:
        return []
    existing = json.loads(lines[0])
    if existing != header:
        raise ValueError(f"campaign log {path} belongs to a different configuration")
    return [Observation.from_json(line) for line in lines[1:] if line.strip()]


def run_campaign(
    topology: str,
    system: ChaoticSystem,
    budget: int = 100,
    master_seed: int = 0,
    schedule: Schedule = Schedule(),
    n_nodes: int = 100,
    log_path: str | Path | None = None,
    progress: bool = False,
) -> CampaignResult:
    """One full Bayesian-optimization campaign on a single topology.

    Runs `budget` propose/build/train/evaluate iterations and returns the
    best trial. The training signal is fixed per campaign (its start is
    derived from the master seed); each iteration builds a fresh random
    reservoir. Individual trial failures are recorded as saturated
    observations and never abort the campaign. With a log_path the history
    is appended line by line and the campaign resumes from whatever the log
    already holds.
    """
    if budget < 1:
        raise ValueError("budget must be at least 1")
    space = SearchSpace(topology)
    design_rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(0,)))
    init_design = latin_hypercube(N_INITIAL_POINTS, space.ndim, design_rng)
    ic_seed = int(np.random.SeedSequence(master_seed, spawn_key=(3,)).generate_state(1)[0])

    # Substepped systems replay one precomputed trajectory; the others are
    # co-integrated per trial from the same seeded start.
    source: ChaoticSystem | Trajectory = system
    if isinstance(system, ChaoticSystem) and system.substeps > 1:
        source = generate_input(system, schedule.t_end, schedule.dt, ic_seed)

    header = _campaign_header(topology, system.name, master_seed, schedule, n_nodes)
    history: list[Observation] = []
    log_file = None
    if log_path is not None:
        log_path = Path(log_path)
        if log_path.exists() and log_path.stat().st_size > 0:
            history = _load_campaign_log(log_path, header)
        else:
            log_path.parent.mkdir(parents=True, exist_ok=True)
            log_path.write_text(json.dumps(header, sort_keys=True) + "\n")
        log_file = log_path

    for i in range(len(history), budget):
        prop_rng = np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(1, i)))
        gp_seed = int(np.random.SeedSequence(master_seed, spawn_key=(4, i)).generate_state(1)[0])
        hp = propose_next(history, space, prop_rng, init_design=init_design,
                          gp_seed=gp_seed)
        trial_seed = int(np.random.SeedSequence(master_seed, spawn_key=(2, i)).generate_state(1)[0])
        try:
            eps = run_trial(hp, source, trial_seed, schedule, n_nodes, ic_seed=ic_seed)
            obs = Observation(params=hp, objective=math.log10(max(eps, 1e-12)),
                              epsilon=eps, seed=trial_seed, trained=True, iteration=i)
        except (IntegrationError, ConstructionError, np.linalg.LinAlgError) as exc:
            logger.warning("trial %d failed (%s); recording saturated observation", i, exc)
            obs = Observation(params=hp, objective=math.log10(EPSILON_CAP),
                              epsilon=EPSILON_CAP, seed=trial_seed, trained=False,
                              iteration=i)
        history.append(obs)
        if log_file is not None:
            with open(log_file, "a") as fh:
                fh.write(obs.to_json() + "\n")
        if progress:
            best = min(o.epsilon for o in history)
            print(f"[{topology}/{system.name}] iter {i + 1}/{budget} "
                  f"eps = {obs.epsilon:.4g} best = {best:.4g}", flush=True)

    best = min(history, key=lambda o: o.epsilon)
    return CampaignResult(
        topology=topology, system=system.name, best_params=best.params,
        best_epsilon=best.epsilon, best_seed=best.seed, history=history,
        iterations=len(history), master_seed=master_seed,
    )


def load_campaign_result(log_path: str | Path) -> CampaignResult:
    """Rebuild a CampaignResult from its JSON-lines log."""
    lines = Path(log_path).read_text().splitlines()
    if not lines:
        raise ValueError(f"campaign log {log_path} is empty")
    header = json.loads(lines[0])
    if header.get("type") != "campaign":
        raise ValueError(f"{log_path} is not a campaign log")
    history = [Observation.from_json(line) for line in lines[1:] if line.strip()]
    if not history:
        raise ValueError(f"campaign log {log_path} holds no observations")
    best = min(history, key=lambda o: o.epsilon)
    return CampaignResult(
        topology=header["topology"], system=header["system"],
        best_params=best.params, best_epsilon=best.epsilon, best_seed=best.seed,
        history=history, iterations=len(history),
        master_seed=header["master_seed"],
    )


def repeat_campaigns(
    topology: str,
    system: ChaoticSystem,
    budget: int = 100,
    n_repeats: int = 20,
    seeds: list[int] | None = None,
    schedule: Schedule = Schedule(),
    n_nodes: int = 100,
    log_dir: str | Path | None = None,
    progress: bool = False,
) -> CampaignStats:
    """Repeat the campaign under independent master seeds.

    The mean and standard deviation of the per-campaign best errors
    summarize how reproducible the optimization is.
    """
    if n_repeats < 2:
        raise ValueError("need at least two repeats for a spread")
    if seeds is None:
        seeds = list(range(n_repeats))
    if len(seeds) != n_repeats:
        raise ValueError("seeds must match n_repeats")
    results = []
    for seed in seeds:
        log_path = None
        if log_dir is not None:
            log_path = Path(log_dir) / f"campaign_{system.name}_{topology}_{seed}.jsonl"
        results.append(run_campaign(topology, system, budget, seed, schedule,
                                    n_nodes, log_path, progress))
    return CampaignStats(
        topology=topology, system=system.name,
        best_epsilons=np.array([r.best_epsilon for r in results]),
        results=results,
    )
