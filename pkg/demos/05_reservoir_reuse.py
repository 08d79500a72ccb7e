#!/usr/bin/env python3
"""Re-using a tuned reservoir on a different system.

A reservoir optimized for Lorenz forecasting can be pointed at the
double-scroll circuit by re-training only its linear readout; the internal
network, input coupling, and rate stay frozen. Transfer usually costs
accuracy, but the best transferred reservoirs approach the performance of
ones optimized directly for the target.

Run from the repository root:  python demos/05_reservoir_reuse.py
"""
from esncast.bayesopt import run_campaign
from esncast.experiments import run_transfer
from esncast.systems import calibrate_system

print("calibrating systems ...")
lorenz = calibrate_system("lorenz", sample_horizon=2000.0, rng_seed=0)
dscroll = calibrate_system("double_scroll", sample_horizon=2000.0, rng_seed=0)

print("optimizing three reservoirs for lorenz (reduced budget 20) ...")
campaigns = [run_campaign("general", lorenz, budget=20, master_seed=seed)
             for seed in (0, 1, 2)]
for camp in campaigns:
    print(f"  seed {camp.master_seed}: lorenz epsilon = {camp.best_epsilon:.4f}")

study = run_transfer(campaigns, dscroll, master_seed=7)
print(f"\nre-trained on {study.target_system}: "
      f"epsilon = {study.mean:.3f} +/- {study.std:.3f}, "
      f"best = {study.epsilon_min:.4f}")
print("(only the readout was re-fit; reservoirs are unchanged)")
