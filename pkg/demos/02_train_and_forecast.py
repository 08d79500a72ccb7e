#!/usr/bin/env python3
"""Build, train, and score one echo state network on the Lorenz task.

Shows the full pipeline at reference hyperparameters: reservoir
construction, the listening run over the standard 0/100/200/300 schedule,
ridge training with cross-validated regularization, the 50-window climate
error, and a long free-running attractor reproduction.

Run from the repository root:  python demos/02_train_and_forecast.py
"""
from pathlib import Path

import numpy as np

from esncast.evaluation import evaluate_climate
from esncast.experiments import REFERENCE_LORENZ_PARAMS, run_freerun_attractor
from esncast.systems import calibrate_system
from esncast.topology import build_reservoir
from esncast.training import Schedule, fit_ridge, run_training

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)

print("calibrating lorenz ...")
lorenz = calibrate_system("lorenz", sample_horizon=2000.0, rng_seed=0)

hp = REFERENCE_LORENZ_PARAMS["general"]
print(f"hyperparameters: gamma={hp.gamma} sigma={hp.sigma} "
      f"rho_in={hp.rho_in} k={hp.k} rho_r={hp.rho_r}")

reservoir = build_reservoir(hp, n=100, seed=1)
schedule = Schedule()
record = run_training(reservoir, lorenz, schedule, ic_seed=42)
readout = fit_ridge(record.states, record.targets, fout_split=reservoir.fout_split)
resid = record.targets - record.states @ readout.w_out.T
print(f"ridge alpha = {readout.alpha:g}, "
      f"training rms = {np.sqrt((resid**2).mean()):.2e}")

report = evaluate_climate(reservoir, readout, record, record.test_input)
print(f"climate error over {len(report.epsilon_i)} windows: "
      f"epsilon = {report.epsilon:.4f} "
      f"(min {report.epsilon_i.min():.4f}, max {report.epsilon_i.max():.4f})")

result = run_freerun_attractor(
    reservoir, readout, record.r_end_train, duration=100.0,
    csv_path=OUT / "freerun_lorenz.csv", svg_path=OUT / "freerun_lorenz.svg")
print(f"100-unit free run diverged: {result.diverged}; "
      f"output range x [{result.trajectory.samples[:, 0].min():.2f}, "
      f"{result.trajectory.samples[:, 0].max():.2f}]")
print(f"wrote {OUT / 'freerun_lorenz.svg'}")
