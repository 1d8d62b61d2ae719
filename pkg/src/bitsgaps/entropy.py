"""Differential entropy of a uniformly weighted univariate Gaussian mixture.

Three estimators are provided: a truncated Taylor expansion of ``log p``
around every component mean (closed form through Gaussian central moments),
a Jensen lower bound built from pairwise component overlaps, and a plain
Monte Carlo reference.

All functions are vectorized over a trailing axis: ``means`` and
``variances`` of shape (S,) describe one mixture, shape (S, m) describe m
independent mixtures (one per candidate point), and the result then has
shape (m,).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import ConfigurationError, DomainError, InputError

__all__ = [
    "MixtureAtPoint",
    "gaussian_entropy",
    "taylor_entropy",
    "entropy_lower_bound",
    "mc_entropy",
    "information",
    "ESTIMATORS",
    "estimate",
]

_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class MixtureAtPoint:
    means: np.ndarray
    variances: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.means, dtype=float)
        var = np.asarray(self.variances, dtype=float)
        if mu.shape != var.shape or mu.ndim == 0 or mu.shape[0] < 1:
            raise InputError(f"means {mu.shape} and variances {var.shape} must match, S >= 1")
        if not np.all(var > 0):
            raise DomainError("component variances must be positive")
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def S(self) -> int:
        return self.means.shape[0]


def _as_mixture(mix, variances=None) -> MixtureAtPoint:
    if isinstance(mix, MixtureAtPoint):
        return mix
    return MixtureAtPoint(mix, variances)


def gaussian_entropy(var):
    """``0.5 * log(2 pi e var)``."""
    v = np.asarray(var, dtype=float)
    if np.any(v <= 0):
        raise DomainError("variance must be positive")
    out = 0.5 * (_LOG2PI + 1.0 + np.log(v))
    return float(out) if out.ndim == 0 else out


def _log_derivative_ratios(x, mu, var, order):
    """``p^(r)(x) / p(x)`` for r = 1..order, evaluated at each point in ``x``.

    ``x`` has shape (K, m): K evaluation points for each of m mixtures;
    ``mu`` and ``var`` have shape (S, m). Returns ``log p(x)`` (K, m) and a
    list of ratio arrays. Component weights are normalized with
    log-sum-exp so far-apart components do not underflow.
    """
    z = (x[:, None, :] - mu[None]) / np.sqrt(var)[None]          # (K, S, m)
    logc = -0.5 * z * z - 0.5 * np.log(var)[None] - 0.5 * _LOG2PI
    logp = logsumexp(logc, axis=1) - math.log(mu.shape[0])
    w = np.exp(logc - logsumexp(logc, axis=1, keepdims=True))   # responsibilities
    sd = np.sqrt(var)[None]
    # d^r/dx^r N(x) = N(x) * (-1)^r He_r(z) / sd^r  (probabilists' Hermite)
    he = [np.ones_like(z), z]
    for r in range(2, order + 1):
        he.append(z * he[r - 1] - (r - 1) * he[r - 2])
    ratios = [np.sum(w * (-1) ** r * he[r] / sd**r, axis=1) for r in range(1, order + 1)]
    return logp, ratios


def _log_derivatives(ratios):
    """Derivatives of ``log p`` from the ratios ``p^(r)/p`` (Faa di Bruno)."""
    out = []
    a1 = ratios[0]
    out.append(a1)
    if len(ratios) >= 2:
        a2 = ratios[1]
        out.append(a2 - a1**2)
    if len(ratios) >= 3:
        a3 = ratios[2]
        out.append(a3 - 3 * a2 * a1 + 2 * a1**3)
    if len(ratios) >= 4:
        a4 = ratios[3]
        out.append(a4 - 4 * a3 * a1 - 3 * a2**2 + 12 * a2 * a1**2 - 6 * a1**4)
    return out


def taylor_entropy(mix, variances=None, order: int = 2):
    """Entropy from the order-``order`` Taylor expansion of ``log p``.

    ``-1/S * sum_s sum_{r even <= R} (log p)^(r)(mu_s) / r! * M_r(var_s)`` with
    Gaussian central moments ``M_0 = 1``, ``M_2 = var``, ``M_4 = 3 var^2``.
    Odd moments vanish, so only even orders contribute.
    """
    if order not in (2, 4):
        raise ConfigurationError(f"Taylor order must be 2 or 4, got {order}")
    m = _as_mixture(mix, variances)
    mu, var = m.means, m.variances
    flat = mu.ndim == 1
    if flat:
        mu, var = mu[:, None], var[:, None]
    logp, ratios = _log_derivative_ratios(mu, mu, var, order)      # (S, m)
    d = _log_derivatives(ratios)
    acc = logp + 0.5 * d[1] * var
    if order == 4:
        acc = acc + (1.0 / 24.0) * d[3] * 3.0 * var**2
    h = -acc.mean(axis=0)
    return float(h[0]) if flat else h


def entropy_lower_bound(mix, variances=None):
    """Jensen bound ``-1/S sum_s log(1/S sum_s' N(mu_s; mu_s', var_s + var_s'))``."""
    m = _as_mixture(mix, variances)
    mu, var = m.means, m.variances
    flat = mu.ndim == 1
    if flat:
        mu, var = mu[:, None], var[:, None]
    S = mu.shape[0]
    v = var[:, None, :] + var[None, :, :]
    d = mu[:, None, :] - mu[None, :, :]
    log_xi = -0.5 * d * d / v - 0.5 * np.log(v) - 0.5 * _LOG2PI
    h = -(logsumexp(log_xi, axis=1) - math.log(S)).mean(axis=0)
    return float(h[0]) if flat else h


def _mixture_logpdf(f, mu, var):
    """``log p(f)``, computed in place to keep the temporaries small."""
    a = f[:, None] - mu[None]
    a *= a
    a *= -0.5 / var
    a += -0.5 * np.log(var) - 0.5 * _LOG2PI
    m = a.max(axis=1)
    a -= m[:, None]
    np.exp(a, out=a)
    return np.log(a.sum(axis=1)) + m - math.log(mu.size)


def mc_entropy(mix, variances=None, n_draws: int = 100_000, seed=0, chunk: int = 65_536):
    """Monte Carlo estimate of ``E[-log p(f)]`` and its standard error."""
    m = _as_mixture(mix, variances)
    if m.means.ndim != 1:
        raise InputError("mc_entropy handles one mixture at a time")
    if n_draws < 1000:
        raise InputError("n_draws must be at least 1000")
    rng = np.random.default_rng(seed)
    mu, var = m.means, m.variances
    sd = np.sqrt(var)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < n_draws:
        k = min(chunk, n_draws - done)
        s = rng.integers(0, mu.size, size=k)
        f = mu[s] + sd[s] * rng.standard_normal(k)
        nl = -_mixture_logpdf(f, mu, var)
        total += nl.sum()
        total_sq += (nl * nl).sum()
        done += k
    mean = total / n_draws
    sample_var = max(total_sq / n_draws - mean * mean, 0.0) * n_draws / (n_draws - 1)
    return float(mean), float(math.sqrt(sample_var / n_draws))


def information(mix, variances=None, order: int = 2):
    """Negative entropy, using the Taylor estimator."""
    return -taylor_entropy(mix, variances, order)


ESTIMATORS = {
    "taylor2": lambda mu, var: taylor_entropy(mu, var, 2),
    "taylor4": lambda mu, var: taylor_entropy(mu, var, 4),
    "lower_bound": entropy_lower_bound,
}


def estimate(means, variances, estimator: str = "taylor2"):
    """Entropy by estimator name (``taylor2``, ``taylor4`` or ``lower_bound``)."""
    try:
        fn = ESTIMATORS[estimator]
    except KeyError:
        raise ConfigurationError(f"unknown entropy estimator {estimator!r}") from None
    return fn(means, variances)
