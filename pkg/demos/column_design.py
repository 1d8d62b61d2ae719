"""Step off McCabe-Thiele stages on the packaged table and on a Wilson curve.

Run with ``python3 demos/column_design.py``.
"""

from importlib import resources

import numpy as np

from bitsgaps.distillation import ColumnSpec, build_equilibrium, check_balances, step_stages
from bitsgaps.thermo import default_system, phase_table, read_phase_csv, wilson_provider


def main():
    spec = ColumnSpec()
    system = default_system()
    curves = {
        "table": build_equilibrium(read_phase_csv(resources.files("bitsgaps.data") / "reference_txy.csv")),
        "wilson": build_equilibrium(phase_table(np.linspace(0, 1, 51), wilson_provider(system), system)),
    }
    for label, curve in curves.items():
        prof = step_stages(spec, curve)
        worst = max(abs(v) for v in check_balances(spec, prof).values())
        print(f"{label}: {prof.n_stages} stages, balance residual {worst:.1e}")
        for i, (x, y) in enumerate(zip(prof.x, prof.y), start=1):
            print(f"  stage {i}: x = {x:.3f}, y = {y:.3f}")


if __name__ == "__main__":
    main()
