"""Autonomous forecasting and the multi-window climate error.

A trained reservoir is scored by restarting a closed-loop forecast from
many points spread across the testing window, each seeded with the
reservoir's own listening state at that time, and accumulating the
root-mean-squared forecast error over one Lyapunov time per restart. The
aggregate is the root mean square of the per-window errors; windows whose
free run goes non-finite are charged a fixed saturation value instead of
aborting the evaluation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import DP54_A, DP54_B
from .integrate import StepperConfig
from .systems import Trajectory
from .topology import Reservoir
from .training import Readout, Schedule, TrainRecord, apply_fout

# Charged to a window whose free run diverges; far beyond the > 1 error
# level where reproduced attractors stop resembling the target at all.
EPSILON_CAP = 1e3


@dataclass
class EvalReport:
    """Per-window errors and their aggregate for one trained reservoir."""

    epsilon_i: np.ndarray
    epsilon: float
    start_times: np.ndarray
    horizon: float
    saturated: np.ndarray  # boolean mask of windows charged the cap

    @property
    def any_saturated(self) -> bool:
        return bool(self.saturated.any())


def _closed_loop_batch(reservoir: Reservoir, readout: Readout,
                       r0: np.ndarray, nsteps: int, dt: float):
    """Batched fixed-step integration of the output-fed-back reservoir.

    r0 has one row per independent window. Returns (outputs, states, fail),
    where outputs[b, n] is the 3-channel forecast of window b at step n and
    fail[b] is the first step with a non-finite state (-1 if none). Rows are
    independent, so one diverging window cannot poison the others.
    """
    r0 = np.atleast_2d(np.asarray(r0, dtype=float))
    nbatch, n = r0.shape
    split = readout.fout_split
    gamma = reservoir.gamma
    w_r_t = np.ascontiguousarray(reservoir.w_r.T)
    b_fb_t = np.ascontiguousarray((reservoir.w_in @ readout.w_out).T)
    w_out_t = np.ascontiguousarray(readout.w_out.T)

    def rhs(r):
        drive = r @ w_r_t + apply_fout(r, split) @ b_fb_t
        return gamma * (np.tanh(drive) - r)

    y = np.empty((nbatch, nsteps + 1, 3))
    states = np.empty((nbatch, nsteps + 1, n))
    fail = np.full(nbatch, -1, dtype=int)
    r = r0.copy()
    states[:, 0] = r
    k = np.empty((7, nbatch, n))
    with np.errstate(over="ignore", invalid="ignore"):
        y[:, 0] = apply_fout(r, split) @ w_out_t
        k[0] = rhs(r)
        for step in range(nsteps):
            for j in range(1, 6):
                k[j] = rhs(r + dt * np.tensordot(DP54_A[j, :j], k[:j], axes=(0, 0)))
            r_new = r + dt * np.tensordot(DP54_B[:6], k[:6], axes=(0, 0))
            bad = ~np.isfinite(r_new).all(axis=1)
            if bad.any():
                newly = bad & (fail < 0)
                fail[newly] = step
            k[6] = rhs(r_new)
            r = r_new
            states[:, step + 1] = r
            y[:, step + 1] = apply_fout(r, split) @ w_out_t
            k[0] = k[6]
    return y, states, fail


def forecast(reservoir: Reservoir, readout: Readout, r_init: np.ndarray,
             duration: float, cfg: StepperConfig = StepperConfig()) -> Trajectory:
    """Free-run the trained reservoir and return its output signal.

    The closed loop replaces the input with the readout's own output. If
    the run goes non-finite the returned trajectory is truncated at the
    last finite sample rather than raising.
    """
    nsteps = int(round(duration / cfg.dt)) if duration > 0 else 0
    y, _, _ = _closed_loop_batch(reservoir, readout, r_init, nsteps, cfg.dt)
    bad = np.flatnonzero(~np.isfinite(y[0]).all(axis=1))
    last = nsteps if bad.size == 0 else max(int(bad[0]) - 1, 0)
    return Trajectory(t0=0.0, dt=cfg.dt, samples=y[0, : last + 1])


def epsilon_single(truth: Trajectory, pred: Trajectory, lam: float) -> float:
    """Normalized RMSE between aligned forecast and truth windows.

    Computes sqrt(dt * lam * sum |u - y|^2) over every shared grid point,
    both endpoints included. The trajectories must sit on the same grid.
    """
    if abs(truth.t0 - pred.t0) > 1e-9 or abs(truth.dt - pred.dt) > 1e-12:
        raise ValueError("trajectories are not on the same grid")
    if truth.samples.shape != pred.samples.shape:
        raise ValueError(
            f"shape mismatch {truth.samples.shape} vs {pred.samples.shape}")
    diff = truth.samples - pred.samples
    return float(np.sqrt(truth.dt * lam * np.sum(diff**2)))


def evaluate_climate(
    reservoir: Reservoir,
    readout: Readout,
    record: TrainRecord,
    truth: Trajectory,
    schedule: Schedule | None = None,
) -> EvalReport:
    """Forecast error from evenly spaced restarts across the testing window.

    Each restart takes the reservoir state from the listening run at that
    time (driven by the true input up to the restart), then free-runs for
    one Lyapunov time; the per-window errors combine as a root mean square.
    All restarts lie strictly after the training window, and every forecast
    window fits inside the available truth.
    """
    schedule = schedule or record.schedule
    dt = schedule.dt
    ws = schedule.window_steps
    starts = schedule.start_times()
    idx = np.round((starts - truth.t0) / dt).astype(int)
    if idx[0] <= 0:
        raise ValueError("first restart does not lie after the training window")
    if idx[-1] + ws > truth.samples.shape[0] - 1:
        raise ValueError("forecast window reads past the end of the truth data")
    if record.listening_states_test.shape[0] != truth.samples.shape[0]:
        raise ValueError("listening states and truth cover different windows")

    r_starts = record.listening_states_test[idx]
    y, _, fail = _closed_loop_batch(reservoir, readout, r_starts, ws, dt)

    lam = schedule.lambda_target
    eps = np.empty(schedule.n_windows)
    saturated = np.zeros(schedule.n_windows, dtype=bool)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(schedule.n_windows):
            window_truth = truth.samples[idx[i] : idx[i] + ws + 1]
            diff = window_truth - y[i]
            val = np.sqrt(dt * lam * np.sum(diff**2))
            if fail[i] >= 0 or not np.isfinite(val):
                saturated[i] = True
                eps[i] = EPSILON_CAP
            else:
                eps[i] = val
    return EvalReport(
        epsilon_i=eps,
        epsilon=float(np.sqrt(np.mean(eps**2))),
        start_times=starts,
        horizon=schedule.horizon,
        saturated=saturated,
    )
