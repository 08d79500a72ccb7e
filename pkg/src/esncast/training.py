"""Listening runs, the symmetry-breaking readout map, and ridge training.

A training run drives the reservoir from rest over the full schedule,
discards the transient, and keeps the readout features over the training
window together with the reservoir's listening states over the testing
window. The readout is a plain linear map fit by ridge regression; the
regularizer is picked from a decade grid by closed-form leave-one-out
cross-validation (no per-sample refits).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .integrate import StepperConfig, integrate_coupled, integrate_driven, n_steps_between
from .systems import LAMBDA_TARGET, ChaoticSystem, Trajectory, default_initial_condition, generate_input
from .topology import Reservoir

DEFAULT_ALPHA_GRID = np.logspace(-5, 5, 11)


@dataclass(frozen=True)
class Schedule:
    """Time windows of a run: transient, training, testing, all on one grid."""

    dt: float = 0.01
    t_transient: float = 100.0
    t_train: float = 200.0
    t_end: float = 300.0
    n_windows: int = 50
    lambda_target: float = LAMBDA_TARGET

    def __post_init__(self):
        if not 0 < self.t_transient < self.t_train < self.t_end:
            raise ValueError("need 0 < t_transient < t_train < t_end")
        if self.n_windows < 1:
            raise ValueError("n_windows must be at least 1")
        if self.window_spacing <= 0:
            raise ValueError("testing period shorter than one forecast horizon")
        for t in (self.t_transient, self.t_train, self.t_end):
            n_steps_between(0.0, t, self.dt)

    @property
    def horizon(self) -> float:
        """One Lyapunov time, the forecast-evaluation span."""
        return 1.0 / self.lambda_target

    @property
    def window_steps(self) -> int:
        return int(math.floor(self.horizon / self.dt + 1e-12))

    @property
    def window_spacing(self) -> float:
        """Spacing of the forecast start times; chosen so every window stays
        inside the testing data and every start lies strictly after t_train."""
        return (self.t_end - self.t_train - self.horizon) / self.n_windows

    def start_times(self) -> np.ndarray:
        return self.t_train + self.window_spacing * np.arange(1, self.n_windows + 1)

    def index_of(self, t: float) -> int:
        return n_steps_between(0.0, t, self.dt)


@dataclass
class Readout:
    """Trained output map y = w_out @ fout(r)."""

    w_out: np.ndarray
    alpha: float
    fout_split: int
    degenerate: bool = False


@dataclass
class TrainRecord:
    """Everything a training run hands to evaluation."""

    states: np.ndarray            # fout features over [t_transient, t_train]
    targets: np.ndarray           # input samples over the same window
    r_end_train: np.ndarray       # reservoir state at t_train
    listening_states_test: np.ndarray  # raw reservoir states over [t_train, t_end]
    test_input: Trajectory        # input samples over [t_train, t_end]
    schedule: Schedule
    step_error_estimate: float = 0.0


def apply_fout(r: np.ndarray, split: int) -> np.ndarray:
    """Pass the first `split` components through, square the rest.

    Squaring half the features breaks the sign symmetry that the reservoir
    otherwise shares with inputs like Lorenz; it is applied to every
    reservoir regardless of the input system.
    """
    r = np.asarray(r)
    n = r.shape[-1]
    if not 0 <= split <= n:
        raise ValueError(f"split {split} outside [0, {n}]")
    out = np.array(r, dtype=float)
    out[..., split:] **= 2
    return out


def ridge_loo_errors(states: np.ndarray, targets: np.ndarray,
                     alpha_grid: np.ndarray) -> np.ndarray:
    """Leave-one-out squared error for every ridge value, in closed form.

    Uses the hat-matrix identity through an eigendecomposition of the Gram
    matrix, so the whole grid costs one decomposition plus O(M N) per value
    instead of M refits.
    """
    s = np.asarray(states, dtype=float)
    y = np.asarray(targets, dtype=float)
    lam, v = np.linalg.eigh(s.T @ s)
    lam = np.clip(lam, 0.0, None)
    z = s @ v
    zsq = z**2
    b = z.T @ y
    out = np.empty(len(alpha_grid))
    for i, alpha in enumerate(alpha_grid):
        d = 1.0 / (lam + alpha)
        h = zsq @ d
        resid = (y - z @ (d[:, None] * b)) / (1.0 - h)[:, None]
        out[i] = float(np.sum(resid**2))
    return out


def fit_ridge(states: np.ndarray, targets: np.ndarray,
              alpha_grid: np.ndarray | None = None,
              fout_split: int = 0) -> Readout:
    """Ridge regression with the regularizer chosen by leave-one-out CV.

    Returns the minimizer of |targets - W states|^2 + alpha |W|^2 at the
    grid value with the lowest LOO error. All-zero feature matrices are
    flagged degenerate and yield a zero readout.
    """
    if alpha_grid is None:
        alpha_grid = DEFAULT_ALPHA_GRID
    alpha_grid = np.asarray(alpha_grid, dtype=float)
    if alpha_grid.size == 0 or np.any(alpha_grid <= 0):
        raise ValueError("alpha grid must be non-empty and positive")
    s = np.asarray(states, dtype=float)
    y = np.asarray(targets, dtype=float)
    if s.ndim != 2 or y.ndim != 2 or s.shape[0] != y.shape[0]:
        raise ValueError("states and targets must be row-aligned 2-d arrays")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")

    if not s.any():
        warnings.warn("all-zero reservoir features: singular fit, zero readout",
                      RuntimeWarning, stacklevel=2)
        return Readout(w_out=np.zeros((y.shape[1], s.shape[1])),
                       alpha=float(alpha_grid[0]), fout_split=fout_split,
                       degenerate=True)

    scores = ridge_loo_errors(s, y, alpha_grid)
    alpha = float(alpha_grid[int(np.argmin(scores))])
    lam, v = np.linalg.eigh(s.T @ s)
    lam = np.clip(lam, 0.0, None)
    b = (s @ v).T @ y
    w_out = (v @ (b / (lam + alpha)[:, None])).T
    return Readout(w_out=w_out, alpha=alpha, fout_split=fout_split)


def run_training(
    reservoir: Reservoir,
    source: ChaoticSystem | Trajectory,
    schedule: Schedule = Schedule(),
    cfg: StepperConfig | None = None,
    ic_seed: int = 0,
) -> TrainRecord:
    """Drive the reservoir from rest over [0, t_end] and collect windows.

    With a ChaoticSystem source the reservoir is co-integrated with the
    system (seeded start near the attractor), unless the system needs
    internal substepping, in which case its trajectory is generated first
    and replayed through the interpolating driver. A Trajectory source is
    always replayed.
    """
    cfg = cfg or StepperConfig(dt=schedule.dt)
    if abs(cfg.dt - schedule.dt) > 1e-12:
        raise ValueError("stepper dt and schedule dt disagree")
    err_est = 0.0
    if isinstance(source, ChaoticSystem):
        if source.substeps == 1:
            rng = np.random.default_rng(ic_seed)
            s0 = default_initial_condition(source.name, rng)
            r_states, u, err_est = integrate_coupled(
                source, reservoir, s0, schedule.t_end, cfg)
        else:
            traj = generate_input(source, schedule.t_end, cfg.dt, ic_seed)
            u = traj.samples
            r_states, err_est = integrate_driven(
                reservoir, traj, np.zeros(reservoir.n), 0.0, schedule.t_end,
                cfg, return_error_estimate=True)
    else:
        traj = source
        if traj.t0 > 0.0 or traj.end_time < schedule.t_end - 1e-9:
            raise ValueError("input trajectory does not span [0, t_end]")
        i_end = schedule.index_of(schedule.t_end)
        u = traj.samples[: i_end + 1]
        r_states, err_est = integrate_driven(
            reservoir, traj, np.zeros(reservoir.n), 0.0, schedule.t_end,
            cfg, return_error_estimate=True)

    i0 = schedule.index_of(schedule.t_transient)
    i1 = schedule.index_of(schedule.t_train)
    i2 = schedule.index_of(schedule.t_end)
    return TrainRecord(
        states=apply_fout(r_states[i0 : i1 + 1], reservoir.fout_split),
        targets=u[i0 : i1 + 1].copy(),
        r_end_train=r_states[i1].copy(),
        listening_states_test=r_states[i1 : i2 + 1].copy(),
        test_input=Trajectory(t0=schedule.t_train, dt=schedule.dt,
                              samples=u[i1 : i2 + 1].copy()),
        schedule=schedule,
        step_error_estimate=float(err_est),
    )
