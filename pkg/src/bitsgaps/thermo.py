"""Binary vapor-liquid equilibrium for the 1-propanol (1) / water (2) system.

The Wilson model serves as the ground-truth oracle; Antoine correlations give
pure-component vapor pressures; extended Raoult's law closes the bubble and
dew problems. A gamma provider is any callable ``(z1, T) -> (gamma1, gamma2)``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DomainError, InputError, NumericalError, SpecificationError

__all__ = [
    "R_GAS",
    "Antoine",
    "BinarySystem",
    "load_system",
    "default_system",
    "wilson_lambdas",
    "wilson_gamma",
    "vapor_pressure",
    "gibbs_duhem_gamma2",
    "bubble_point",
    "dew_point",
    "phase_table",
    "PHASE_HEADER",
    "write_phase_csv",
    "read_phase_csv",
    "wilson_provider",
    "ideal_provider",
    "log_gamma1_provider",
]

R_GAS = 8.314462618
T_BRACKET = (340.0, 380.0)
PHASE_HEADER = ("x (mol frac)", "T (K)", "y (mol frac)")

GammaProvider = Callable[[float, float], tuple]


@dataclass(frozen=True)
class Antoine:
    """``log10(P / Pa) = A - B / (T / K + C)`` on ``[T_min, T_max]``."""

    A: float
    B: float
    C: float
    T_min: float = 273.15
    T_max: float = 473.15
    T_boil: float = float("nan")

    def __call__(self, T):
        return 10.0 ** (self.A - self.B / (T + self.C))


@dataclass(frozen=True)
class BinarySystem:
    names: tuple = ("PrOH", "H2O")
    pressure: float = 101325.0
    antoine: tuple = ()
    molar_volumes: tuple = (75.14e-6, 18.07e-6)
    energies: tuple = (0.0, 0.0)

    def __post_init__(self):
        if not self.pressure > 0:
            raise DomainError("pressure must be positive")
        if len(self.antoine) != 2 or len(self.molar_volumes) != 2 or len(self.energies) != 2:
            raise InputError("a binary system needs two Antoine sets, volumes and energies")
        if min(self.molar_volumes) <= 0:
            raise DomainError("molar volumes must be positive")


def _system_from_dict(d) -> BinarySystem:
    comps = d["components"]
    ant = tuple(
        Antoine(c["antoine"]["A"], c["antoine"]["B"], c["antoine"]["C"],
                c["antoine"].get("T_min", 273.15), c["antoine"].get("T_max", 473.15),
                c.get("normal_boiling_point", float("nan")))
        for c in comps
    )
    w = d["wilson"]
    return BinarySystem(
        names=tuple(c["name"] for c in comps),
        pressure=float(d.get("pressure_Pa", 101325.0)),
        antoine=ant,
        molar_volumes=tuple(float(c["molar_volume_m3_per_mol"]) for c in comps),
        energies=(float(w["lambda12_J_per_mol"]), float(w["lambda21_J_per_mol"])),
    )


def load_system(path) -> BinarySystem:
    """Read a ``system.json`` document."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"system file not found: {path}")
    with open(path) as fh:
        d = json.load(fh)
    if d.get("antoine_convention", "log10_Pa_K") != "log10_Pa_K":
        raise InputError(f"{path}: unsupported Antoine convention {d['antoine_convention']!r}")
    return _system_from_dict(d)


def default_system() -> BinarySystem:
    """The shipped, calibrated PrOH/H2O parameter set."""
    text = resources.files("bitsgaps.data").joinpath("system.json").read_text()
    return _system_from_dict(json.loads(text))


def wilson_lambdas(T, sys: BinarySystem):
    """``Lambda_ij = (V_j / V_i) exp(-lambda_ij / (R T))``."""
    V1, V2 = sys.molar_volumes
    l12, l21 = sys.energies
    return (V2 / V1) * np.exp(-l12 / (R_GAS * np.asarray(T))), \
        (V1 / V2) * np.exp(-l21 / (R_GAS * np.asarray(T)))


def wilson_gamma(z1, T, sys: BinarySystem):
    """Wilson activity coefficients ``(gamma1, gamma2)``; broadcasts over arrays."""
    z1 = np.asarray(z1, dtype=float)
    if np.any((z1 < 0) | (z1 > 1)):
        raise DomainError("mole fraction must lie in [0, 1]")
    z2 = 1.0 - z1
    L12, L21 = wilson_lambdas(T, sys)
    a = z1 + L12 * z2
    b = z2 + L21 * z1
    t = L12 / a - L21 / b
    g1 = np.exp(-np.log(a) + z2 * t)
    g2 = np.exp(-np.log(b) - z1 * t)
    if g1.ndim == 0:
        return float(g1), float(g2)
    return g1, g2


def vapor_pressure(T, component: int, sys: BinarySystem):
    """Pure-component vapor pressure in Pa (component 0 or 1)."""
    ant = sys.antoine[component]
    T_arr = np.asarray(T, dtype=float)
    if np.any((T_arr < ant.T_min) | (T_arr > ant.T_max)):
        raise DomainError(
            f"T={T} K outside the Antoine range [{ant.T_min}, {ant.T_max}] K "
            f"for {sys.names[component]}"
        )
    out = ant(T_arr)
    return float(out) if out.ndim == 0 else out


def gibbs_duhem_gamma2(z_grid, ln_gamma1, eps: float = 1e-4):
    """``ln gamma2`` on ``z_grid`` from ``ln gamma1`` by composite quadrature.

    Integrates ``-z/(1-z) d ln gamma1`` from the reference ``z = 0``, so the
    grid must start at 0 and stop at or below ``1 - eps``.
    """
    z = np.asarray(z_grid, dtype=float)
    lg1 = np.asarray(ln_gamma1, dtype=float)
    if z.shape != lg1.shape or z.ndim != 1 or z.size < 1:
        raise InputError("z grid and ln gamma1 must be matching 1-D arrays")
    if z[0] != 0.0:
        raise InputError("the grid must start at the reference state z1 = 0")
    if np.any(np.diff(z) <= 0):
        raise InputError("z grid must be strictly increasing")
    if z[-1] > 1.0 - eps + 1e-15:
        raise InputError(
            f"grid reaches z1={z[-1]}; the integrand z/(1-z) is singular at 1, "
            f"truncate at 1 - eps = {1 - eps}"
        )
    if not np.isfinite(lg1[0]):
        raise InputError("ln gamma1(0) must be finite")
    if z.size == 1:
        return np.zeros(1)
    # weight z/(1-z) at interval midpoints times successive differences of
    # ln gamma1; averaging the endpoint weights instead loses accuracy as the
    # weight blows up towards z = 1
    zm = 0.5 * (z[1:] + z[:-1])
    incr = zm / (1.0 - zm) * np.diff(lg1)
    return -np.concatenate([[0.0], np.cumsum(incr)])


def wilson_provider(sys: BinarySystem) -> GammaProvider:
    return lambda z1, T: wilson_gamma(z1, T, sys)


def ideal_provider(z1, T):
    return 1.0, 1.0


def log_gamma1_provider(ln_gamma1: Callable, n_grid: int = 200, eps: float = 1e-4) -> GammaProvider:
    """Provider from a model of ``ln gamma1(z, T)`` with Gibbs-Duhem closure.

    ``ln_gamma1`` takes arrays ``(z, T)`` of equal shape. ``gamma2`` at
    ``(z1, T)`` is integrated on ``n_grid`` points from 0 to ``min(z1, 1-eps)``
    at the same temperature.
    """
    def provider(z1, T):
        z_end = min(float(z1), 1.0 - eps)
        lg1_here = float(ln_gamma1(np.array([z1]), np.array([T]))[0])
        if z_end <= 0.0:
            return math.exp(lg1_here), 1.0
        grid = np.linspace(0.0, z_end, n_grid)
        lg1 = ln_gamma1(grid, np.full(n_grid, T))
        lg2 = gibbs_duhem_gamma2(grid, lg1, eps)[-1]
        return math.exp(lg1_here), math.exp(lg2)
    return provider


def _bisect(f, lo, hi, tol, what):
    flo, fhi = f(lo), f(hi)
    if flo == 0:
        return lo
    if fhi == 0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise SpecificationError(
            f"{what}: no sign change on [{lo}, {hi}] K (residuals {flo:.4g}, {fhi:.4g})"
        )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if fm == 0:
            return mid
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def bubble_point(z1: float, P: float | None, gamma_provider: GammaProvider, sys: BinarySystem,
                 bracket=T_BRACKET, tol: float = 1e-7):
    """Bubble temperature and vapor composition from extended Raoult's law.

    Solves ``z1 g1 P1*(T) + z2 g2 P2*(T) = P`` by bisection on ``bracket``.
    """
    if not 0.0 <= z1 <= 1.0:
        raise DomainError("z1 must lie in [0, 1]")
    P = sys.pressure if P is None else P
    z2 = 1.0 - z1

    def parts(T):
        g1, g2 = gamma_provider(z1, T)
        return z1 * g1 * vapor_pressure(T, 0, sys), z2 * g2 * vapor_pressure(T, 1, sys)

    T = _bisect(lambda T: sum(parts(T)) - P, *bracket, tol, f"bubble point at z1={z1}")
    p1, p2 = parts(T)
    y1 = p1 / (p1 + p2)
    return T, min(max(y1, 0.0), 1.0)


def dew_point(y1: float, P: float | None, gamma_provider: GammaProvider, sys: BinarySystem,
              bracket=T_BRACKET, tol: float = 1e-7, damping: float = 0.5, max_iter: int = 200):
    """Dew temperature and liquid composition.

    Outer bisection on ``T`` over ``sum_b y_b P / (g_b P_b*) - 1``; at each
    trial temperature the liquid composition is found by damped fixed-point
    iteration on ``x_b = y_b P / (g_b(x, T) P_b*)`` (normalized).
    """
    if not 0.0 <= y1 <= 1.0:
        raise DomainError("y1 must lie in [0, 1]")
    P = sys.pressure if P is None else P
    y = (y1, 1.0 - y1)
    state = {"x1": y1}

    def inner(T):
        ps = (vapor_pressure(T, 0, sys), vapor_pressure(T, 1, sys))
        x1 = state["x1"]
        for _ in range(max_iter):
            g = gamma_provider(x1, T)
            a = [y[b] * P / (g[b] * ps[b]) for b in range(2)]
            s = a[0] + a[1]
            x_new = a[0] / s
            if abs(x_new - x1) < 1e-12:
                x1 = x_new
                break
            x1 = (1.0 - damping) * x1 + damping * x_new
        else:
            raise NumericalError(
                f"dew-point composition iteration did not converge at T={T:.4f} K "
                f"(last x1={x1:.6g})"
            )
        g = gamma_provider(x1, T)
        state["x1"] = x1
        return x1, sum(y[b] * P / (g[b] * ps[b]) for b in range(2)) - 1.0

    def resid(T):
        return -inner(T)[1]

    T = _bisect(resid, *bracket, tol, f"dew point at y1={y1}")
    x1, r = inner(T)
    return T, min(max(x1, 0.0), 1.0)


def phase_table(z_grid, gamma_provider: GammaProvider, sys: BinarySystem, P=None):
    """Rows ``(x, T, y)`` of bubble points over ``z_grid``."""
    rows = []
    for z in np.asarray(z_grid, dtype=float):
        if not 0.0 <= z <= 1.0:
            raise DomainError(f"composition {z} outside [0, 1]")
        T, y = bubble_point(float(z), P, gamma_provider, sys)
        rows.append((float(z), T, y))
    return np.array(rows)


def write_phase_csv(path, rows, header=PHASE_HEADER, digits: int = 6):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([f"{v:.{digits}f}" for v in r])


def read_phase_csv(path):
    """Rows of a phase CSV as an (n, 3) array ``x, T, y``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    head = [h.strip() for h in rows[0]]
    try:
        cols = [head.index(h) for h in PHASE_HEADER]
    except ValueError:
        raise InputError(f"{path}: expected columns {PHASE_HEADER}, got {head}") from None
    return np.array([[float(r[c]) for c in cols] for r in rows[1:] if r], dtype=float)
