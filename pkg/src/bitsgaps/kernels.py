"""Stationary covariance functions and covariance-matrix assembly.

All three families are written in terms of the scaled squared distance
``r2 = d^T L^{-1} d`` where ``L`` is diagonal. The entries of ``L`` are the
hyperparameters themselves (squared length scales), so a 1-D SE kernel reads
``exp(-d**2 / (2 * ell))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError, InputError, NumericalError

__all__ = [
    "Family",
    "KernelSpec",
    "eval_se",
    "eval_rq",
    "eval_matern",
    "evaluate",
    "profile",
    "scaled_sqdist",
    "cross_cov",
    "build_cov",
]


class Family(str, Enum):
    SE = "SE"
    RQ = "RQ"
    MATERN = "Matern"


@dataclass(frozen=True)
class KernelSpec:
    """Hyperparameters of a stationary kernel.

    Parameters
    ----------
    family : Family
        Kernel family.
    precision : float
        Process precision tau; the prior variance is ``1 / precision``.
    length_scales : tuple of float
        Diagonal of ``L``. One entry means isotropic, otherwise one per input
        dimension (ARD).
    alpha : float
        RQ shape parameter.
    nu : float
        Matern smoothness.
    """

    family: Family = Family.SE
    precision: float = 1.0
    length_scales: tuple = (1.0,)
    alpha: float = 1.0
    nu: float = 2.5

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        object.__setattr__(
            self, "length_scales", tuple(float(v) for v in np.atleast_1d(self.length_scales))
        )
        if not self.precision > 0:
            raise DomainError(f"precision must be positive, got {self.precision}")
        if len(self.length_scales) == 0 or min(self.length_scales) <= 0:
            raise DomainError(f"length scales must be positive, got {self.length_scales}")
        if self.family is Family.RQ and not self.alpha > 0:
            raise DomainError(f"RQ alpha must be positive, got {self.alpha}")
        if self.family is Family.MATERN and not self.nu > 0:
            raise ConfigurationError(f"Matern nu must be positive, got {self.nu}")

    @property
    def variance(self) -> float:
        return 1.0 / self.precision

    @classmethod
    def from_variance(cls, variance, length_scales, family=Family.SE, **kw):
        return cls(family=family, precision=1.0 / variance, length_scales=length_scales, **kw)

    def with_params(self, variance, length_scales):
        return replace(self, precision=1.0 / variance, length_scales=length_scales)


def _matern_closed(nu):
    # (g(r), dg/d(r2)) closed forms for half-integer nu, r = sqrt(r2)
    if nu == 0.5:
        return (lambda r: np.exp(-r),
                lambda r: -np.exp(-r) / (2.0 * np.where(r > 0, r, 1.0)))
    if nu == 1.5:
        s3 = math.sqrt(3.0)
        return (lambda r: (1.0 + s3 * r) * np.exp(-s3 * r),
                lambda r: -1.5 * np.exp(-s3 * r))
    if nu == 2.5:
        s5 = math.sqrt(5.0)
        return (lambda r: (1.0 + s5 * r + 5.0 * r * r / 3.0) * np.exp(-s5 * r),
                lambda r: -(5.0 / 6.0) * (1.0 + s5 * r) * np.exp(-s5 * r))
    return None


def profile(family, r2, alpha=1.0, nu=2.5):
    """Unit-variance kernel shape ``g(r2)`` and its derivative ``dg/dr2``.

    Works elementwise on arrays. For Matern with ``nu = 1/2`` the derivative
    is singular at ``r2 = 0``; it is returned as 0 there, which is what every
    caller needs since it always multiplies a zero squared difference.
    """
    family = Family(family)
    r2 = np.asarray(r2, dtype=float)
    if family is Family.SE:
        g = np.exp(-0.5 * r2)
        return g, -0.5 * g
    if family is Family.RQ:
        base = 1.0 + r2 / (2.0 * alpha)
        return base ** (-alpha), -0.5 * base ** (-alpha - 1.0)
    r = np.sqrt(r2)
    closed = _matern_closed(float(nu))
    if closed is not None:
        g, dg = closed[0](r), closed[1](r)
        return g, np.where(r > 0, dg, 0.0 if nu == 0.5 else dg)
    # general nu through the Bessel form; s^nu K_nu(s) -> 2^(nu-1) Gamma(nu) as s -> 0
    s = np.sqrt(2.0 * nu * r2)
    c = 2.0 ** (1.0 - nu) / special.gamma(nu)
    pos = s > 0
    safe = np.where(pos, s, 1.0)
    g = np.where(pos, c * safe**nu * special.kv(nu, safe), 1.0)
    dg = np.where(pos, -c * nu * safe ** (nu - 1.0) * special.kv(nu - 1.0, safe), 0.0)
    return g, dg


def _check_pair(xi, xj, spec):
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    xj = np.atleast_1d(np.asarray(xj, dtype=float))
    if xi.shape != xj.shape or xi.ndim != 1:
        raise InputError(f"input shapes differ: {xi.shape} vs {xj.shape}")
    if len(spec.length_scales) not in (1, xi.size):
        raise InputError(
            f"{len(spec.length_scales)} length scales for {xi.size}-dimensional inputs"
        )
    return xi, xj


def _r2_pair(xi, xj, spec):
    d = xi - xj
    return float(np.sum(d * d / np.asarray(spec.length_scales)))


def eval_se(xi, xj, spec: KernelSpec) -> float:
    if spec.family is not Family.SE:
        raise ConfigurationError(f"eval_se called with a {spec.family.value} kernel")
    xi, xj = _check_pair(xi, xj, spec)
    return spec.variance * math.exp(-0.5 * _r2_pair(xi, xj, spec))


def eval_rq(xi, xj, spec: KernelSpec) -> float:
    if spec.family is not Family.RQ:
        raise ConfigurationError(f"eval_rq called with a {spec.family.value} kernel")
    xi, xj = _check_pair(xi, xj, spec)
    return spec.variance * (1.0 + _r2_pair(xi, xj, spec) / (2.0 * spec.alpha)) ** (-spec.alpha)


def eval_matern(xi, xj, spec: KernelSpec) -> float:
    if spec.family is not Family.MATERN:
        raise ConfigurationError(f"eval_matern called with a {spec.family.value} kernel")
    xi, xj = _check_pair(xi, xj, spec)
    g, _ = profile(Family.MATERN, _r2_pair(xi, xj, spec), nu=spec.nu)
    return spec.variance * float(g)


def evaluate(xi, xj, spec: KernelSpec) -> float:
    """Dispatch a single kernel evaluation on the kernel's family."""
    return {Family.SE: eval_se, Family.RQ: eval_rq, Family.MATERN: eval_matern}[spec.family](
        xi, xj, spec
    )


def scaled_sqdist(A, B, length_scales):
    """Pairwise ``d^T L^{-1} d`` between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    ls = np.asarray(length_scales, dtype=float)
    if ls.size not in (1, A.shape[1]) or A.shape[1] != B.shape[1]:
        raise InputError(
            f"incompatible shapes: A{A.shape}, B{B.shape}, {ls.size} length scales"
        )
    diff = A[:, None, :] - B[None, :, :]
    return np.sum(diff * diff / ls, axis=-1)


def cross_cov(A, B, spec: KernelSpec):
    """Covariance block ``k(a_i, b_j)``."""
    g, _ = profile(spec.family, scaled_sqdist(A, B, spec.length_scales), spec.alpha, spec.nu)
    return spec.variance * g


def build_cov(X, spec: KernelSpec, jitter: float = 0.0, check: bool = True):
    """Covariance matrix of the rows of ``X`` with ``jitter`` on the diagonal.

    Raises
    ------
    NumericalError
        If ``check`` is set and the matrix is not Cholesky-factorizable; the
        message carries the minimum eigenvalue.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[0] < 1:
        raise InputError("build_cov needs at least one point")
    if jitter < 0:
        raise DomainError(f"jitter must be nonnegative, got {jitter}")
    K = cross_cov(X, X, spec)
    K = 0.5 * (K + K.T)
    K[np.diag_indices_from(K)] += jitter
    if check:
        try:
            np.linalg.cholesky(K)
        except np.linalg.LinAlgError:
            lam = float(np.linalg.eigvalsh(K).min())
            raise NumericalError(
                f"covariance matrix not positive definite (min eigenvalue {lam:.3e}); "
                "increase jitter"
            ) from None
    return K
