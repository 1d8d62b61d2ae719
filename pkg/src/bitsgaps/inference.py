"""Hierarchical Bayes over kernel hyperparameters.

Hyperparameters are sampled in an unconstrained space: Gamma-distributed
ones through ``theta = exp(u)``, Uniform ones through the affine-logistic
map ``theta = low + (high - low) * sigmoid(u)``. The log posterior carries
the exact log-Jacobian of each map.

The hyperparameter vector is ordered ``(variance, ell_1, ..., ell_d)`` where
``variance = 1 / precision`` and the ``ell`` are the diagonal of ``L``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import special

from .errors import ConfigurationError, DomainError, InputError, NumericalError
from .gp import Dataset, DEFAULT_NOISE_VAR
from .kernels import Family, KernelSpec, profile

log = logging.getLogger(__name__)

__all__ = [
    "Prior",
    "DEFAULT_PRIORS",
    "HMCConfig",
    "ChainSet",
    "HMCError",
    "GPPosterior",
    "log_posterior_unconstrained",
    "gradient",
    "leapfrog",
    "hmc_run",
    "sample_hyperparameters",
    "gelman_rubin",
    "select_components",
    "write_chains_csv",
    "read_chains_csv",
]


class HMCError(NumericalError):
    """A chain rejected every proposal after warm-up."""


@dataclass(frozen=True)
class Prior:
    """Prior on one hyperparameter.

    ``distribution`` is ``"gamma"`` with ``params = (concentration, rate)`` or
    ``"uniform"`` with ``params = (low, high)``. The transform defaults to
    ``log`` for Gamma and ``logit`` (affine-logistic) for Uniform.
    """

    name: str
    distribution: str
    params: tuple
    transform: str = ""

    def __post_init__(self):
        dist = self.distribution.lower()
        object.__setattr__(self, "distribution", dist)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        a, b = self.params
        if dist == "gamma":
            if not (a > 0 and b > 0):
                raise DomainError(f"{self.name}: Gamma parameters must be positive")
            default = "log"
        elif dist == "uniform":
            if not a < b:
                raise DomainError(f"{self.name}: Uniform needs low < high")
            default = "logit"
        else:
            raise ConfigurationError(f"{self.name}: unknown distribution {self.distribution!r}")
        tr = (self.transform or default).lower()
        if tr not in ("log", "logit"):
            raise ConfigurationError(f"{self.name}: unknown transform {tr!r}")
        if tr == "logit" and dist != "uniform":
            raise ConfigurationError(f"{self.name}: logit transform needs bounded support")
        object.__setattr__(self, "transform", tr)

    # vectorized pieces, u and theta are arrays of the same shape
    def to_constrained(self, u):
        u = np.asarray(u, dtype=float)
        if self.transform == "log":
            return np.exp(u)
        lo, hi = self.params
        return lo + (hi - lo) * special.expit(u)

    def to_unconstrained(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self.transform == "log":
            return np.log(theta)
        lo, hi = self.params
        return special.logit((theta - lo) / (hi - lo))

    def dtheta_du(self, u):
        u = np.asarray(u, dtype=float)
        if self.transform == "log":
            return np.exp(u)
        lo, hi = self.params
        s = special.expit(u)
        return (hi - lo) * s * (1.0 - s)

    def log_jacobian(self, u):
        """``log |dtheta/du|`` and its derivative in ``u``."""
        u = np.asarray(u, dtype=float)
        if self.transform == "log":
            return u, np.ones_like(u)
        lo, hi = self.params
        # log s + log(1-s) = -softplus(-u) - softplus(u)
        val = math.log(hi - lo) - np.logaddexp(0.0, -u) - np.logaddexp(0.0, u)
        return val, 1.0 - 2.0 * special.expit(u)

    def log_density(self, theta):
        """Log prior density and its derivative in ``theta``."""
        theta = np.asarray(theta, dtype=float)
        a, b = self.params
        if self.distribution == "gamma":
            with np.errstate(divide="ignore", invalid="ignore"):
                val = a * math.log(b) - special.gammaln(a) + (a - 1.0) * np.log(theta) - b * theta
                grad = (a - 1.0) / theta - b
            inside = theta > 0
        else:
            val = np.full(theta.shape, -math.log(b - a))
            grad = np.zeros(theta.shape)
            inside = (theta > a) & (theta < b)
        return np.where(inside, val, -np.inf), np.where(inside, grad, 0.0)

    def sample(self, rng, size=None):
        a, b = self.params
        if self.distribution == "gamma":
            return rng.gamma(a, 1.0 / b, size=size)
        return rng.uniform(a, b, size=size)

    def in_support(self, theta):
        theta = np.asarray(theta)
        a, b = self.params
        if self.distribution == "gamma":
            return theta > 0
        return (theta > a) & (theta < b)


DEFAULT_PRIORS = (
    Prior("kernel_variance", "gamma", (2.0, 1.0)),
    Prior("z_lengthscale", "uniform", (0.1, 50.0)),
    Prior("T_lengthscale", "gamma", (4.0, 2.0)),
)


@dataclass(frozen=True)
class HMCConfig:
    step_size: float = 0.05
    leapfrog_steps: int = 5
    num_samples: int = 5000
    burn_in: int = 3000
    num_chains: int = 4
    adapt_steps: int = 5
    adapt_rate: float = 0.1
    target_accept: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not self.step_size > 0 or self.leapfrog_steps < 1:
            raise ConfigurationError("step_size must be positive and leapfrog_steps >= 1")
        if self.num_chains < 1 or self.num_samples < 1:
            raise ConfigurationError("num_chains and num_samples must be positive")
        if not 0 <= self.burn_in < self.num_samples:
            raise ConfigurationError("burn_in must satisfy 0 <= burn_in < num_samples")
        if self.adapt_steps < 0 or not self.adapt_rate > 0:
            raise ConfigurationError("adapt_steps >= 0 and adapt_rate > 0 required")
        if not 0 < self.target_accept < 1:
            raise ConfigurationError("target_accept must lie in (0, 1)")


@dataclass
class ChainSet:
    """Post-burn-in draws for every chain.

    ``draws`` has shape (num_chains, num_kept, p) in constrained space;
    ``accept_prob`` has shape (num_chains, num_kept).
    """

    draws: np.ndarray
    accept_prob: np.ndarray
    step_sizes: np.ndarray
    seeds: tuple
    names: tuple = ()

    @property
    def num_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def acceptance_rate(self) -> np.ndarray:
        return self.accept_prob.mean(axis=1)

    def rhat(self) -> np.ndarray:
        return np.array([gelman_rubin(self.draws[:, :, j]) for j in range(self.draws.shape[2])])


class GPPosterior:
    """Unconstrained log posterior of the kernel hyperparameters.

    Callable on a batch ``u`` of shape (C, p) (or a single (p,) vector) and
    returns ``(logp, grad)`` with the analytic gradient. Read-only over the
    dataset, so one instance may be shared by many chains.
    """

    def __init__(self, dataset: Dataset, kernel_template: KernelSpec,
                 priors: Sequence[Prior], noise_var: float = DEFAULT_NOISE_VAR,
                 mean_const: float = 0.0):
        self.dataset = dataset
        self.template = kernel_template
        self.priors = tuple(priors)
        self.noise_var = float(noise_var)
        self.mean_const = float(mean_const)
        n_ls = len(self.priors) - 1
        if n_ls < 1 or n_ls not in (1, dataset.dim):
            raise InputError(
                f"{len(self.priors)} priors cannot parameterize a {dataset.dim}-D kernel"
            )
        self.dim = len(self.priors)
        diff = dataset.X[:, None, :] - dataset.X[None, :, :]
        sq = diff * diff
        # (q, n, n) squared differences per length-scale entry
        self._sq = sq.transpose(2, 0, 1) if n_ls > 1 else sq.sum(-1)[None]
        self._r = dataset.y - self.mean_const

    def to_constrained(self, u):
        u = np.atleast_2d(u)
        return np.stack([p.to_constrained(u[:, i]) for i, p in enumerate(self.priors)], axis=1)

    def to_unconstrained(self, theta):
        theta = np.atleast_2d(theta)
        return np.stack([p.to_unconstrained(theta[:, i]) for i, p in enumerate(self.priors)], axis=1)

    def kernel(self, theta) -> KernelSpec:
        theta = np.asarray(theta, dtype=float)
        return self.template.with_params(theta[0], tuple(theta[1:]))

    def log_likelihood(self, theta):
        """Batched log marginal likelihood and its gradient in ``theta``."""
        theta = np.atleast_2d(theta)
        C = theta.shape[0]
        n = self.dataset.n
        if n == 0:
            return np.zeros(C), np.zeros_like(theta)
        var = theta[:, 0]
        ell = theta[:, 1:]
        r2 = np.einsum("qij,cq->cij", self._sq, 1.0 / ell)
        g, dg = profile(self.template.family, r2, self.template.alpha, self.template.nu)
        K = var[:, None, None] * g
        idx = np.arange(n)
        K[:, idx, idx] += self.noise_var
        val = np.full(C, -np.inf)
        grad = np.zeros_like(theta)
        try:
            L = np.linalg.cholesky(K)
            ok = np.ones(C, dtype=bool)
        except np.linalg.LinAlgError:
            L = np.zeros_like(K)
            ok = np.zeros(C, dtype=bool)
            for c in range(C):
                try:
                    L[c] = np.linalg.cholesky(K[c])
                    ok[c] = True
                except np.linalg.LinAlgError:
                    log.warning("Cholesky failed at theta=%s; treating as -inf", theta[c])
        if not ok.any():
            return val, grad
        L = L[ok]
        eye = np.broadcast_to(np.eye(n), L.shape)
        Linv = np.linalg.solve(L, eye)
        Kinv = np.einsum("cki,ckj->cij", Linv, Linv)
        alpha = Kinv @ self._r
        logdet = 2.0 * np.log(np.diagonal(L, axis1=1, axis2=2)).sum(axis=1)
        val[ok] = -0.5 * np.einsum("ci,i->c", alpha, self._r) - 0.5 * logdet \
            - 0.5 * n * math.log(2.0 * math.pi)
        # dLL/dtheta_j = 0.5 * tr((alpha alpha^T - Kinv) dK/dtheta_j)
        Wm = alpha[:, :, None] * alpha[:, None, :] - Kinv
        grad_ok = np.empty((L.shape[0], theta.shape[1]))
        grad_ok[:, 0] = 0.5 * np.einsum("cij,cij->c", Wm, g[ok])
        for q in range(ell.shape[1]):
            dK = var[ok, None, None] * dg[ok] * (-self._sq[q][None] / ell[ok, q, None, None] ** 2)
            grad_ok[:, 1 + q] = 0.5 * np.einsum("cij,cij->c", Wm, dK)
        grad[ok] = grad_ok
        return val, grad

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        U = np.atleast_2d(u)
        theta = self.to_constrained(U)
        lp = np.zeros(U.shape[0])
        glp = np.zeros_like(U)
        dth = np.empty_like(U)
        for i, p in enumerate(self.priors):
            v, dv = p.log_density(theta[:, i])
            j, dj = p.log_jacobian(U[:, i])
            dth[:, i] = p.dtheta_du(U[:, i])
            lp += v + j
            glp[:, i] = dv * dth[:, i] + dj
        inside = np.isfinite(lp) & np.all(np.isfinite(theta), axis=1) & (dth > 0).all(axis=1)
        ll = np.full(U.shape[0], -np.inf)
        gll = np.zeros_like(U)
        if inside.any():
            v, g = self.log_likelihood(theta[inside])
            ll[inside] = v
            gll[inside] = g * dth[inside]
        total = np.where(inside, lp + ll, -np.inf)
        grad = np.where(np.isfinite(total)[:, None], glp + gll, 0.0)
        if single:
            return float(total[0]), grad[0]
        return total, grad


def log_posterior_unconstrained(u, dataset: Dataset, kernel_template: KernelSpec,
                                priors: Sequence[Prior], noise_var: float = DEFAULT_NOISE_VAR,
                                mean_const: float = 0.0) -> float:
    """Log posterior (likelihood + prior + log-Jacobian) at unconstrained ``u``."""
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InputError("u must be finite")
    return GPPosterior(dataset, kernel_template, priors, noise_var, mean_const)(u)[0]


def gradient(target: Callable, u) -> np.ndarray:
    """Gradient of ``target`` at ``u``.

    ``target`` either returns ``(value, grad)`` or a bare value; in the latter
    case central differences with ``h = 1e-5`` are used.
    """
    u = np.asarray(u, dtype=float)
    out = target(u)
    if isinstance(out, tuple):
        return np.asarray(out[1], dtype=float)
    h = 1e-5
    g = np.empty_like(u)
    for i in range(u.size):
        e = np.zeros_like(u)
        e[i] = h
        g[i] = (target(u + e) - target(u - e)) / (2 * h)
    return g


def leapfrog(q, p, grad, target, eps, n_steps):
    """Leapfrog integration for ``H = -log pi(q) + |p|^2 / 2``.

    ``q``, ``p``, ``grad`` are (C, p) arrays; ``eps`` is (C,) or scalar.
    Returns ``(q, p, logp, grad)`` at the end of the trajectory.
    """
    eps = np.asarray(eps, dtype=float).reshape(-1, 1) if np.ndim(eps) else eps
    p = p + 0.5 * eps * grad
    logp = None
    for step in range(n_steps):
        q = q + eps * p
        logp, grad = target(q)
        grad = np.where(np.isfinite(grad), grad, 0.0)
        if step < n_steps - 1:
            p = p + eps * grad
    p = p + 0.5 * eps * grad
    return q, p, logp, grad


def _batched(target):
    def f(U):
        U = np.atleast_2d(U)
        out = target(U)
        if isinstance(out, tuple) and np.ndim(out[0]) == 1 and len(out[0]) == U.shape[0]:
            return np.asarray(out[0], dtype=float), np.asarray(out[1], dtype=float).reshape(U.shape)
        vals = np.empty(U.shape[0])
        grads = np.empty_like(U)
        for c in range(U.shape[0]):
            v, g = target(U[c])
            vals[c] = v
            grads[c] = g
        return vals, grads
    return f


def hmc_run(target: Callable, config: HMCConfig, init, transform: Callable | None = None,
            names: Sequence[str] = ()) -> ChainSet:
    """Run ``config.num_chains`` independent HMC chains.

    Parameters
    ----------
    target : callable
        ``u -> (log density, gradient)``. It is first called with a (C, p)
        batch; if it does not return batched output it is evaluated chain by
        chain instead.
    init : array_like
        Starting point, (p,) shared by every chain or (num_chains, p).
    transform : callable, optional
        Map from the sampling space to the reported (constrained) space,
        applied row-wise to a (k, p) array.

    During the first ``adapt_steps`` transitions each chain updates
    ``log eps += adapt_rate * (accept_prob - target_accept)``; the step size is
    frozen afterwards. Chains draw from independent streams spawned from
    ``config.seed``, so results do not depend on how chains are batched.
    """
    C = config.num_chains
    init = np.asarray(init, dtype=float)
    q = np.array(np.broadcast_to(np.atleast_2d(init), (C, init.shape[-1])))
    f = _batched(target)
    logp, grad = f(q)
    if not np.all(np.isfinite(logp)):
        raise InputError("target is not finite at the initial point")
    seeds = tuple(int(s.generate_state(1)[0]) for s in np.random.SeedSequence(config.seed).spawn(C))
    rngs = [np.random.default_rng(s) for s in seeds]
    eps = np.full(C, config.step_size)
    n_keep = config.num_samples - config.burn_in
    dim = q.shape[1]
    kept = np.empty((C, n_keep, dim))
    acc = np.empty((C, n_keep))
    n_accept_post = np.zeros(C)
    for it in range(config.num_samples):
        p0 = np.stack([r.standard_normal(dim) for r in rngs])
        log_u = np.array([math.log(r.uniform()) for r in rngs])
        h0 = -logp + 0.5 * np.sum(p0 * p0, axis=1)
        q1, p1, logp1, grad1 = leapfrog(q, p0, grad, f, eps, config.leapfrog_steps)
        h1 = -logp1 + 0.5 * np.sum(p1 * p1, axis=1)
        with np.errstate(invalid="ignore", over="ignore"):
            log_a = np.where(np.isfinite(h1), np.minimum(0.0, h0 - h1), -np.inf)
        a = np.exp(log_a)
        take = log_u < log_a
        q = np.where(take[:, None], q1, q)
        logp = np.where(take, logp1, logp)
        grad = np.where(take[:, None], grad1, grad)
        if it < config.adapt_steps:
            eps = eps * np.exp(config.adapt_rate * (a - config.target_accept))
        if it >= config.burn_in:
            k = it - config.burn_in
            kept[:, k] = q
            acc[:, k] = a
            n_accept_post += take
    if np.any(n_accept_post == 0):
        bad = np.flatnonzero(n_accept_post == 0).tolist()
        raise HMCError(f"chains {bad} rejected every proposal after warm-up; "
                       "reduce the step size")
    if transform is not None:
        kept = np.stack([transform(kept[c]) for c in range(C)])
    return ChainSet(kept, acc, eps, seeds, tuple(names))


def sample_hyperparameters(dataset: Dataset, kernel_template: KernelSpec,
                           priors: Sequence[Prior], config: HMCConfig,
                           noise_var: float = DEFAULT_NOISE_VAR,
                           mean_const: float = 0.0) -> ChainSet:
    """HMC over the GP hyperparameters, chains started from prior draws."""
    post = GPPosterior(dataset, kernel_template, priors, noise_var, mean_const)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 7919]))
    init = np.empty((config.num_chains, post.dim))
    for c in range(config.num_chains):
        for _ in range(100):
            theta = np.array([p.sample(rng) for p in post.priors])
            u = post.to_unconstrained(theta)[0]
            if np.isfinite(post(u)[0]):
                break
        else:
            raise NumericalError("no prior draw gave a finite log posterior")
        init[c] = u
    return hmc_run(post, config, init, transform=post.to_constrained,
                   names=tuple(p.name for p in post.priors))


def gelman_rubin(chains) -> float:
    """Potential scale reduction factor of (n_chains, n) scalar draws.

    ``W`` is the mean within-chain variance and ``B`` the variance of the chain
    means (both with ``ddof=1``); ``R = sqrt(((n-1)/n * W + B) / W)``.
    """
    x = np.asarray(chains, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise InputError("gelman_rubin needs at least two chains")
    m, n = x.shape
    if n < 2:
        raise InputError("chains must have at least two draws")
    W = x.var(axis=1, ddof=1).mean()
    B = x.mean(axis=1).var(ddof=1)
    if W == 0:
        return math.inf if B > 0 else math.nan
    return math.sqrt(((n - 1) / n * W + B) / W)


def select_components(chains: ChainSet, S: int, seed: int = 0) -> np.ndarray:
    """Pick ``S`` draws by uniform stride over the concatenated chains.

    Index ``k`` of ``S`` maps to ``floor((k + 1/2) * N / S)`` in the flattened
    (chain-major) draw array of length ``N``. The choice is deterministic;
    ``seed`` is accepted for interface stability and does not alter it.
    """
    flat = chains.draws.reshape(-1, chains.draws.shape[-1])
    N = flat.shape[0]
    if S < 1 or S > N:
        raise InputError(f"cannot select {S} components from {N} draws")
    idx = ((np.arange(S) + 0.5) * N / S).astype(int)
    return flat[idx]


def write_chains_csv(path, chains: ChainSet, names: Sequence[str] = ()):
    names = list(names or chains.names or [f"theta{i + 1}" for i in range(chains.draws.shape[2])])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["chain", "iteration", *names, "accept_prob"])
        for c in range(chains.num_chains):
            for k in range(chains.draws.shape[1]):
                w.writerow([c, k, *(f"{v:.17g}" for v in chains.draws[c, k]),
                            f"{chains.accept_prob[c, k]:.17g}"])


def read_chains_csv(path):
    """Inverse of :func:`write_chains_csv`; returns ``(ChainSet, names)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    names = tuple(header[2:-1])
    data = np.array(body, dtype=float) if body else np.zeros((0, len(header)))
    chain_ids = data[:, 0].astype(int)
    C = int(chain_ids.max()) + 1 if data.size else 0
    per = [data[chain_ids == c] for c in range(C)]
    if len({len(p) for p in per}) > 1:
        raise InputError(f"{path}: chains have unequal lengths")
    draws = np.stack([p[:, 2:-1] for p in per]) if per else np.zeros((0, 0, len(names)))
    acc = np.stack([p[:, -1] for p in per]) if per else np.zeros((0, 0))
    return ChainSet(draws, acc, np.zeros(C), tuple(range(C)), names), names
