"""Exact GP conditioning and prediction at fixed hyperparameters."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InputError, NumericalError
from .kernels import KernelSpec, build_cov, cross_cov

log = logging.getLogger(__name__)

__all__ = ["Dataset", "GPState", "condition", "predict", "log_marginal_likelihood"]

DEFAULT_NOISE_VAR = 0.01


@dataclass(frozen=True)
class Dataset:
    """Inputs ``X`` (n, d) and outputs ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if y.size != 1 else X.reshape(1, -1)
        if X.shape[0] != y.size:
            raise InputError(f"{X.shape[0]} inputs but {y.size} outputs")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InputError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @classmethod
    def empty(cls, dim: int) -> "Dataset":
        return cls(np.zeros((0, dim)), np.zeros(0))

    @property
    def n(self) -> int:
        return self.y.size

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def append(self, x, y) -> "Dataset":
        return Dataset(np.vstack([self.X, np.reshape(x, (1, -1))]), np.append(self.y, y))


@dataclass(frozen=True)
class GPState:
    dataset: Dataset
    kernel: KernelSpec
    noise_var: float
    mean_const: float
    chol: np.ndarray
    weights: np.ndarray


def _factor(dataset, kernel, noise_var):
    K = build_cov(dataset.X, kernel, jitter=noise_var, check=False)
    try:
        return np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        lam = float(np.linalg.eigvalsh(K).min())
        raise NumericalError(
            f"Cholesky of K + noise*I failed (min eigenvalue {lam:.3e}); "
            "increase the noise/jitter variance"
        ) from None


def condition(dataset: Dataset, kernel: KernelSpec, noise_var: float = DEFAULT_NOISE_VAR,
              mean_const: float = 0.0) -> GPState:
    """Factorize ``K + noise_var * I`` and cache the weight vector."""
    if noise_var < 0:
        raise InputError(f"noise variance must be nonnegative, got {noise_var}")
    if dataset.n == 0:
        return GPState(dataset, kernel, noise_var, mean_const,
                       np.zeros((0, 0)), np.zeros(0))
    L = _factor(dataset, kernel, noise_var)
    w = cho_solve((L, True), dataset.y - mean_const)
    return GPState(dataset, kernel, noise_var, mean_const, L, w)


def predict(state: GPState, x):
    """Predictive mean and variance of the latent function.

    ``x`` may be a single point (d,) giving scalars, or (m, d) giving arrays.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xs = np.atleast_2d(x)
    if Xs.shape[1] != state.dataset.dim and state.dataset.n > 0:
        raise InputError(f"test input has {Xs.shape[1]} dims, data has {state.dataset.dim}")
    if not np.all(np.isfinite(Xs)):
        raise InputError("test inputs must be finite")
    prior_var = state.kernel.variance
    if state.dataset.n == 0:
        mean = np.full(Xs.shape[0], state.mean_const)
        var = np.full(Xs.shape[0], prior_var)
    else:
        Ks = cross_cov(state.dataset.X, Xs, state.kernel)
        mean = state.mean_const + Ks.T @ state.weights
        v = solve_triangular(state.chol, Ks, lower=True)
        var = prior_var - np.sum(v * v, axis=0)
        if np.any(var < -1e-8):
            log.debug("clamping predictive variance %.3e to zero", float(var.min()))
        var = np.clip(var, 0.0, prior_var)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(dataset: Dataset, kernel: KernelSpec,
                            noise_var: float = DEFAULT_NOISE_VAR,
                            mean_const: float = 0.0) -> float:
    if dataset.n == 0:
        return 0.0
    L = _factor(dataset, kernel, noise_var)
    r = dataset.y - mean_const
    a = solve_triangular(L, r, lower=True)
    return float(-0.5 * a @ a - np.sum(np.log(np.diag(L))) - 0.5 * dataset.n * math.log(2 * math.pi))
