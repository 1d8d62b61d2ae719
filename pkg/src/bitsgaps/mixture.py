"""Hyperparameter-marginalized predictive posterior as a uniform Gaussian mixture."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .gp import Dataset, GPState, condition, predict
from .kernels import KernelSpec

__all__ = [
    "MixturePosterior",
    "CredibleBand",
    "from_draws",
    "mixture_moments",
    "sample_posterior",
    "credible_region",
    "write_band_csv",
    "read_band_csv",
]


@dataclass(frozen=True)
class MixturePosterior:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise InputError("a mixture needs at least one component")
        object.__setattr__(self, "components", comps)

    @property
    def S(self) -> int:
        return len(self.components)

    def component_predictions(self, x):
        """Component means and variances, each of shape (S, m) for m points."""
        Xs = np.atleast_2d(np.asarray(x, dtype=float))
        mus = np.empty((self.S, Xs.shape[0]))
        vs = np.empty_like(mus)
        for s, comp in enumerate(self.components):
            mus[s], vs[s] = predict(comp, Xs)
        return mus, vs


def from_draws(dataset: Dataset, template: KernelSpec, draws, noise_var: float,
               mean_const: float = 0.0) -> MixturePosterior:
    """Condition one GP per hyperparameter draw ``(variance, ell...)``."""
    comps = []
    for theta in np.atleast_2d(draws):
        spec = template.with_params(theta[0], tuple(theta[1:]))
        comps.append(condition(dataset, spec, noise_var, mean_const))
    return MixturePosterior(tuple(comps))


def mixture_moments(mix: MixturePosterior, x):
    """Mean and variance of the mixture at ``x`` (scalars for one point)."""
    x = np.asarray(x, dtype=float)
    mus, vs = mix.component_predictions(x)
    mean = mus.mean(axis=0)
    var = vs.mean(axis=0) + ((mus - mean) ** 2).mean(axis=0)
    if x.ndim == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def _draw(mus, sds, Q, rng):
    s = rng.integers(0, len(mus), size=Q)
    u = rng.standard_normal(Q)
    return mus[s] + sds[s] * u


def sample_posterior(mix: MixturePosterior, x, Q: int, seed=0) -> np.ndarray:
    """``Q`` i.i.d. draws of the latent value at the single point ``x``."""
    if Q < 1:
        raise InputError("Q must be at least 1")
    mus, vs = mix.component_predictions(np.asarray(x, dtype=float).reshape(1, -1))
    rng = np.random.default_rng(seed)
    return _draw(mus[:, 0], np.sqrt(vs[:, 0]), Q, rng)


@dataclass(frozen=True)
class CredibleBand:
    points: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    alpha: float
    Q: int


def _band_indices(alpha, Q):
    lo = math.ceil(alpha / 2 * Q)
    hi = math.ceil((1 - alpha / 2) * Q)
    return min(max(lo, 1), Q), min(max(hi, 1), Q)


def credible_region(mix: MixturePosterior, test_points, Q: int, alpha: float = 0.05,
                    seed=0) -> CredibleBand:
    """Pointwise equal-tailed ``1 - alpha`` band from sorted mixture draws.

    Bounds are order statistics at 1-based indices ``ceil(alpha/2 * Q)`` and
    ``ceil((1 - alpha/2) * Q)``, clamped to ``[1, Q]``.
    """
    if not 0 < alpha < 1:
        raise InputError("alpha must lie in (0, 1)")
    if Q < 1 or math.ceil(alpha / 2 * Q) < 1:
        raise InputError(f"Q={Q} is too small for alpha={alpha}")
    P = np.atleast_2d(np.asarray(test_points, dtype=float))
    mus, vs = mix.component_predictions(P)
    sds = np.sqrt(vs)
    rng = np.random.default_rng(seed)
    lo_i, hi_i = _band_indices(alpha, Q)
    lower = np.empty(P.shape[0])
    upper = np.empty(P.shape[0])
    for w in range(P.shape[0]):
        f = np.sort(_draw(mus[:, w], sds[:, w], Q, rng))
        lower[w], upper[w] = f[lo_i - 1], f[hi_i - 1]
    return CredibleBand(P, mus.mean(axis=0), lower, upper, alpha, Q)


def write_band_csv(path, band: CredibleBand, names: Sequence[str] = ()):
    d = band.points.shape[1]
    names = list(names) or [f"x{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*names, "mean", "lower", "upper"])
        for i in range(band.points.shape[0]):
            w.writerow([f"{v:.17g}" for v in (*band.points[i], band.mean[i],
                                              band.lower[i], band.upper[i])])


def read_band_csv(path, alpha=float("nan"), Q=0) -> CredibleBand:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.array(rows[1:], dtype=float)
    return CredibleBand(data[:, :-3], data[:, -3], data[:, -2], data[:, -1], alpha, Q)
