"""Compare the three mixture-entropy estimators as two components separate.

Run with ``python3 demos/entropy_estimators.py``.
"""

import numpy as np

from bitsgaps.entropy import entropy_lower_bound, mc_entropy, taylor_entropy


def main():
    var = np.array([1.0, 0.5])
    print(f"{'gap':>6} {'taylor2':>9} {'taylor4':>9} {'bound':>9} {'MC':>9}")
    for gap in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0):
        mu = np.array([0.0, gap])
        mc, _ = mc_entropy(mu, var, n_draws=200_000, seed=0)
        print(f"{gap:6.1f} {taylor_entropy(mu, var, order=2):9.4f} "
              f"{taylor_entropy(mu, var, order=4):9.4f} {entropy_lower_bound(mu, var):9.4f} "
              f"{mc:9.4f}")


if __name__ == "__main__":
    main()
