"""McCabe-Thiele design of a binary column under constant molar overflow.

Stage 1 is the top tray. Stepping starts at ``y_1 = x_D`` (total condenser),
moves to the equilibrium curve for ``x_i``, then to an operating line for
``y_{i+1}``: the enriching line while ``i < n_F`` and the stripping line from
the feed stage down. The material balances are checked on the result.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import InputError, SpecificationError

log = logging.getLogger(__name__)

__all__ = [
    "ColumnSpec",
    "EquilibriumCurve",
    "StageProfile",
    "Line",
    "operating_lines",
    "build_equilibrium",
    "step_stages",
    "flow_profiles",
    "check_balances",
    "column_report",
    "write_stage_csv",
    "write_operating_csv",
]

MAX_STAGES = 100


@dataclass(frozen=True)
class ColumnSpec:
    n_stages: int = 3
    reflux_ratio: float = 1.0
    x_D: float = 0.42
    x_W: float = 0.01
    x_F: float = 0.10
    F: float = 100.0
    n_F: int = 2
    q: float = 1.0

    def validate(self):
        if not 0.0 <= self.x_W < self.x_F < self.x_D <= 1.0:
            raise SpecificationError(
                f"need 0 <= x_W < x_F < x_D <= 1, got x_W={self.x_W}, x_F={self.x_F}, "
                f"x_D={self.x_D}"
            )
        if not 1 <= self.n_F <= self.n_stages:
            raise SpecificationError(f"feed stage {self.n_F} outside 1..{self.n_stages}")
        if not self.reflux_ratio > 0 or not self.F > 0:
            raise SpecificationError("reflux ratio and feed flow must be positive")
        return self


@dataclass(frozen=True)
class Line:
    """``y = slope * x + intercept``; vertical lines store ``x0`` instead."""

    slope: float
    intercept: float
    x0: float | None = None

    def __call__(self, x):
        return self.slope * np.asarray(x) + self.intercept


def operating_lines(spec: ColumnSpec):
    """Enriching, stripping and q lines.

    Returns
    -------
    enriching, stripping, q_line : Line
    """
    spec.validate()
    R = spec.reflux_ratio
    enr = Line(R / (R + 1.0), spec.x_D / (R + 1.0))
    if spec.q == 1.0:
        qline = Line(np.inf, np.nan, x0=spec.x_F)
        xi = spec.x_F
    else:
        m = spec.q / (spec.q - 1.0)
        qline = Line(m, spec.x_F - m * spec.x_F)
        xi = (qline.intercept - enr.intercept) / (enr.slope - m)
    yi = float(enr(xi))
    if not (0.0 <= xi <= 1.0 and 0.0 <= yi <= 1.0) or xi <= spec.x_W:
        raise SpecificationError(
            f"operating lines intersect at ({xi:.4g}, {yi:.4g}), outside the feasible region"
        )
    slope = (yi - spec.x_W) / (xi - spec.x_W)
    strip = Line(slope, spec.x_W - slope * spec.x_W)
    return enr, strip, qline


class EquilibriumCurve:
    """Monotone piecewise-cubic ``y = phi(x)`` through tabulated points."""

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.size < 2 or x.shape != y.shape:
            raise InputError("need at least two (x, y) rows of equal length")
        if np.any(np.diff(x) == 0):
            raise InputError("duplicate x values in equilibrium table")
        if np.any(np.diff(x) < 0):
            raise InputError("equilibrium x values must be strictly increasing")
        self.x = x
        self.y = y
        self._phi = PchipInterpolator(x, y, extrapolate=False)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, self.x[0], self.x[-1])
        out = np.asarray(self._phi(xc))
        # exact tabulated values at the knots
        j = np.clip(np.searchsorted(self.x, xc), 0, self.x.size - 1)
        out = np.where(self.x[j] == xc, self.y[j], out)
        return float(out) if out.ndim == 0 else out

    def roots(self, y_target, lo=None, hi=None, tol=1e-12):
        """Every ``x`` in ``[lo, hi]`` with ``phi(x) = y_target``, ascending.

        Each knot interval is monotone under PCHIP, so one bisection per
        bracketing interval finds all roots.
        """
        lo = self.x[0] if lo is None else max(lo, self.x[0])
        hi = self.x[-1] if hi is None else min(hi, self.x[-1])
        knots = np.concatenate([[lo], self.x[(self.x > lo) & (self.x < hi)], [hi]])
        vals = self(knots) - y_target
        out = []
        for a, b, fa, fb in zip(knots[:-1], knots[1:], vals[:-1], vals[1:]):
            if fa == 0:
                out.append(float(a))
                continue
            if np.sign(fa) == np.sign(fb):
                continue
            while b - a > tol:
                m = 0.5 * (a + b)
                fm = self(m) - y_target
                if np.sign(fm) == np.sign(fa):
                    a, fa = m, fm
                else:
                    b = m
            out.append(0.5 * (a + b))
        if vals[-1] == 0:
            out.append(float(knots[-1]))
        return sorted(set(out))

    def inverse(self, y_target, below=None):
        """Smallest ``x`` with ``phi(x) = y_target`` and ``x < below``."""
        rs = [r for r in self.roots(y_target) if below is None or r < below]
        if not rs:
            raise SpecificationError(
                f"y={y_target:.6g} is outside the range of the equilibrium curve"
                + (f" below x={below:.6g}" if below is not None else "")
            )
        if len(rs) > 1:
            log.info("equilibrium inverse at y=%.6g is ambiguous (%d roots); took x=%.6g",
                     y_target, len(rs), rs[0])
        return rs[0]


def build_equilibrium(rows) -> EquilibriumCurve:
    """Curve from rows ``(x, y)`` or ``(x, T, y)``."""
    a = np.asarray(rows, dtype=float)
    if a.ndim != 2 or a.shape[1] not in (2, 3):
        raise InputError("rows must be (x, y) or (x, T, y)")
    return EquilibriumCurve(a[:, 0], a[:, -1])


@dataclass
class StageProfile:
    x: np.ndarray
    y: np.ndarray
    L: np.ndarray
    V: np.ndarray
    D: float
    W: float
    L0: float
    V1: float
    V_reboil: float
    feasible: bool = True
    x_bottom: float = float("nan")

    @property
    def n_stages(self) -> int:
        return len(self.x)


def flow_profiles(spec: ColumnSpec, n_stages: int | None = None):
    """Constant-molar-overflow flows ``(L_i, V_i)`` for stages 1..n and the
    condenser/reboiler flows ``D, W, L0, V1, V_{n+1}``."""
    spec.validate()
    n = spec.n_stages if n_stages is None else n_stages
    if spec.x_D == spec.x_W:
        raise SpecificationError("x_D equals x_W; distillate flow is undefined")
    D = spec.F * (spec.x_F - spec.x_W) / (spec.x_D - spec.x_W)
    W = spec.F - D
    L0 = spec.reflux_ratio * D
    V1 = L0 + D
    i = np.arange(1, n + 1)
    below = i >= spec.n_F
    L = np.where(below, L0 + spec.q * spec.F, L0)
    # V_{i+1} - V_i = (1 - q) F at i = n_F: stages at and above the feed carry V1
    V = np.where(i > spec.n_F, V1 - (1.0 - spec.q) * spec.F, V1)
    V_reboil = V1 - (1.0 - spec.q) * spec.F if n >= spec.n_F else V1
    return L, V, D, W, L0, V1, V_reboil


def step_stages(spec: ColumnSpec, curve: EquilibriumCurve, max_stages: int = MAX_STAGES) -> StageProfile:
    """Step off equilibrium stages from the distillate down to ``x_W``."""
    spec.validate()
    enr, strip, _ = operating_lines(spec)
    xs, ys = [], []
    y = spec.x_D
    x_prev = spec.x_D
    feasible = True
    for i in range(1, max_stages + 1):
        x = curve.inverse(y, below=x_prev)
        xs.append(x)
        ys.append(y)
        if x <= spec.x_W:
            break
        y = float(enr(x)) if i < spec.n_F else float(strip(x))
        x_prev = x
    else:
        feasible = False
        log.warning("stage cap of %d reached without reaching x_W=%g", max_stages, spec.x_W)
    L, V, D, W, L0, V1, Vr = flow_profiles(spec, n_stages=len(xs))
    return StageProfile(np.array(xs), np.array(ys), L, V, D, W, L0, V1, Vr,
                        feasible, xs[-1])


def check_balances(spec: ColumnSpec, prof: StageProfile, rtol: float = 1e-8):
    """Residuals of the overall, component, and CMO balances (all ~0 when closed)."""
    n = prof.n_stages
    res = {
        "total": prof.D + prof.W - spec.F,
        "component": prof.D * spec.x_D + prof.W * spec.x_W - spec.F * spec.x_F,
        "condenser": prof.V1 - prof.L0 - prof.D,
        "reboiler": (prof.L[-1] - prof.V_reboil - prof.W) if n >= spec.n_F else 0.0,
    }
    for i in range(1, n + 1):
        L_prev = prof.L0 if i == 1 else prof.L[i - 2]
        V_next = prof.V_reboil if i == n else prof.V[i]
        src = spec.F if i == spec.n_F else 0.0
        res[f"stage{i}"] = L_prev + V_next + src - prof.L[i - 1] - prof.V[i - 1]
    scale = max(spec.F, 1.0)
    return {k: v / scale for k, v in res.items()}


def column_report(spec: ColumnSpec, prof: StageProfile) -> dict:
    return {
        "spec": asdict(spec),
        "n_stages": prof.n_stages,
        "feed_stage": spec.n_F,
        "feasible": prof.feasible,
        "x_bottom": prof.x_bottom,
        "stages": [
            {"stage": i + 1, "x": float(prof.x[i]), "y": float(prof.y[i]),
             "L": float(prof.L[i]), "V": float(prof.V[i])}
            for i in range(prof.n_stages)
        ],
        "flows": {"D": prof.D, "W": prof.W, "L0": prof.L0, "V1": prof.V1,
                  "V_reboiler": prof.V_reboil},
    }


def write_stage_csv(path, profiles: dict):
    """Stage table; ``profiles`` maps a label (e.g. ``wilson``) to a profile.

    Columns are ``stage``, then ``x_<label>`` for each label, then
    ``y_<label>``; shorter profiles leave trailing cells empty.
    """
    labels = list(profiles)
    n = max(p.n_stages for p in profiles.values())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", *(f"x_{k}" for k in labels), *(f"y_{k}" for k in labels)])
        for i in range(n):
            cells = [i + 1]
            for attr in ("x", "y"):
                for k in labels:
                    arr = getattr(profiles[k], attr)
                    cells.append(f"{arr[i]:.17g}" if i < len(arr) else "")
            w.writerow(cells)


def write_operating_csv(path, spec: ColumnSpec, n_points: int = 51):
    enr, strip, qline = operating_lines(spec)
    xs = np.linspace(spec.x_W, spec.x_D, n_points)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y_enriching", "y_stripping"])
        for x in xs:
            w.writerow([f"{x:.17g}", f"{float(enr(x)):.17g}", f"{float(strip(x)):.17g}"])
