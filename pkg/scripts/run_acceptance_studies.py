#!/usr/bin/env python3
"""Fill the acceptance-study cache (campaigns + distribution samples).

Everything here is deterministic and cached, so the script can be stopped
and restarted; completed campaigns are skipped, partial ones resume from
their logs. A cold run takes a few hours on one core.
"""
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import acceptance_lib as lib
from conftest import calibrated
from esncast.systems import DOUBLE_SCROLL, LORENZ, ROSSLER


def main():
    t_start = time.time()
    for name in (LORENZ, DOUBLE_SCROLL, ROSSLER):
        system = calibrated(name)
        for topo in lib.ALL_TOPOLOGIES:
            n = lib.n_repeats_for(name, topo)
            for seed in range(n):
                t0 = time.time()
                result = lib.get_campaign(system, topo, seed)
                print(f"[{time.time() - t_start:7.0f}s] {name}/{topo} seed {seed}: "
                      f"best {result.best_epsilon:.4f} ({time.time() - t0:.0f}s)",
                      flush=True)
    lorenz = calibrated(LORENZ)
    for topo in lib.ALL_TOPOLOGIES:
        t0 = time.time()
        samples = lib.get_distribution_samples(lorenz, topo)
        import numpy as np
        print(f"[{time.time() - t_start:7.0f}s] distribution {topo}: "
              f"median {np.median(samples):.3f} ({time.time() - t0:.0f}s)", flush=True)
    print(f"done in {time.time() - t_start:.0f}s")


if __name__ == "__main__":
    main()
