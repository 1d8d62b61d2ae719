"""A short entropy-driven design run on the Wilson oracle.

Uses shortened HMC chains so it finishes in well under a minute; the
default configuration is what the acceptance suite runs.
Run with ``python3 demos/design_loop.py``.
"""

import numpy as np

from bitsgaps import design
from bitsgaps.inference import HMCConfig
from bitsgaps.thermo import default_system


def main():
    cfg = design.RunConfig(max_iters=4, min_iters=4, S=8,
                           hmc=HMCConfig(num_samples=1000, burn_in=500))
    oracle = design.wilson_oracle(default_system())
    history = design.run(cfg, oracle, keep_grid=False)
    print(f"{'iter':>4} {'z':>7} {'T':>8} {'max H':>8} {'RMSE test':>10} {'max R-hat':>9}")
    for r in history.records:
        z, T = r.selected
        print(f"{r.iteration:4d} {z:7.4f} {T:8.3f} {r.max_entropy:8.4f} "
              f"{np.median(r.rmse_test):10.4f} {r.rhat.max():9.3f}")


if __name__ == "__main__":
    main()
