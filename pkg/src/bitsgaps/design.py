"""Entropy-driven sequential design for a hierarchical GP surrogate.

One iteration of :func:`bits_iterate` runs HMC over the kernel
hyperparameters on the current training set, builds the ``S``-component
mixture posterior, records error metrics, maximizes the predictive entropy
over the design box, queries the oracle at the maximizer, and appends the
observation to the training set.

Coordinates: "raw" points are ``(z, T)`` in physical units; the GP sees
"model" coordinates ``(z * z_scale, (T - T_lo) / (T_hi - T_lo))``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.stats import qmc

from . import entropy as ent
from .errors import ConfigurationError, InputError, NumericalError
from .gp import Dataset
from .inference import (
    DEFAULT_PRIORS,
    ChainSet,
    HMCConfig,
    Prior,
    read_chains_csv,
    sample_hyperparameters,
    select_components,
    write_chains_csv,
)
from .kernels import Family, KernelSpec
from .mixture import MixturePosterior, from_draws

log = logging.getLogger(__name__)

__all__ = [
    "DesignSpace",
    "RunConfig",
    "IterationRecord",
    "DesignHistory",
    "lhs_init",
    "split_train_test",
    "entropy_field",
    "maximize_entropy",
    "rmse_mae",
    "initialize",
    "bits_iterate",
    "stopping_check",
    "run",
    "mixture_at",
    "wilson_oracle",
    "write_history",
    "read_history",
    "fmt",
]


def fmt(v) -> str:
    return f"{float(v):.17g}"


@dataclass(frozen=True)
class DesignSpace:
    """Box in raw units with the model-coordinate transform.

    Normalized dimensions are min-max mapped to ``[0, 1]``; the others are
    multiplied by ``z_scale`` (default 10, so a unit posterior length scale
    spans a tenth of the composition range).
    """

    lower: tuple = (0.0, 350.0)
    upper: tuple = (1.0, 367.0)
    names: tuple = ("z", "T")
    normalize: tuple = (False, True)
    z_scale: float = 10.0

    def __post_init__(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ConfigurationError(f"invalid bounds {self.lower} .. {self.upper}")
        if not self.z_scale > 0:
            raise ConfigurationError("z_scale must be positive")

    @property
    def dim(self) -> int:
        return len(self.lower)

    def _affine(self):
        lo, hi = np.asarray(self.lower, float), np.asarray(self.upper, float)
        off = np.where(self.normalize, lo, 0.0)
        scale = np.where(self.normalize, 1.0 / (hi - lo), self.z_scale)
        return off, scale

    def to_model(self, raw):
        off, scale = self._affine()
        return (np.asarray(raw, dtype=float) - off) * scale

    def to_raw(self, model):
        off, scale = self._affine()
        return np.asarray(model, dtype=float) / scale + off

    def model_bounds(self):
        lo, hi = self.to_model(self.lower), self.to_model(self.upper)
        return list(zip(lo.tolist(), hi.tolist()))

    def grid(self, n: int):
        """``n x n`` raw grid, ``z`` varying fastest."""
        axes = [np.linspace(a, b, n) for a, b in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="xy")
        return np.column_stack([m.ravel() for m in mesh])

    def clip(self, raw):
        return np.clip(raw, self.lower, self.upper)


@dataclass(frozen=True)
class RunConfig:
    """Everything a case-study run depends on (JSON serializable)."""

    schema_version: int = 1
    seed: int = 0
    n_init: int = 10
    max_iters: int = 10
    min_iters: int = 10
    S: int = 15
    restarts: int = 15
    screen: int = 50
    estimator: str = "taylor2"
    n_realizations: int = 50
    grid_n: int = 50
    noise_var: float = 0.01
    mean_const: float = 0.0
    tol_rmse: float = 0.05
    tol_mae: float = 0.05
    kernel_family: str = "SE"
    space: DesignSpace = field(default_factory=DesignSpace)
    hmc: HMCConfig = field(default_factory=HMCConfig)
    priors: tuple = DEFAULT_PRIORS
    system_path: str = ""
    output_dir: str = "history"
    column: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.estimator not in ent.ESTIMATORS:
            raise ConfigurationError(f"unknown estimator {self.estimator!r}")
        if self.min_iters < 0:
            raise ConfigurationError("min_iters must be nonnegative")
        if self.n_init < 2 or self.max_iters < 0 or self.S < 1 or self.restarts < 1:
            raise ConfigurationError("n_init >= 2, max_iters >= 0, S >= 1, restarts >= 1 required")
        if self.schema_version != 1:
            raise ConfigurationError(f"unsupported schema_version {self.schema_version}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["priors"] = [asdict(p) for p in self.priors]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "space" in d:
                d["space"] = DesignSpace(**{k: tuple(v) if isinstance(v, list) else v
                                            for k, v in d["space"].items()})
            if "hmc" in d:
                d["hmc"] = HMCConfig(**d["hmc"])
            if "priors" in d:
                d["priors"] = tuple(Prior(**p) for p in d["priors"])
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None
        return cls(**d)

    def kernel_template(self) -> KernelSpec:
        return KernelSpec(family=Family(self.kernel_family),
                          length_scales=(1.0,) * (len(self.priors) - 1))


@dataclass
class IterationRecord:
    iteration: int
    train_X: np.ndarray            # raw units
    train_y: np.ndarray
    selected: np.ndarray           # raw units
    observation: float
    max_entropy: float
    grid_max_entropy: float
    rmse_train: np.ndarray
    mae_train: np.ndarray
    rmse_test: np.ndarray
    mae_test: np.ndarray
    rhat: np.ndarray
    acceptance: np.ndarray
    hyper_mean: np.ndarray
    seed: int
    chains: ChainSet | None = None
    entropy_grid: np.ndarray | None = None   # (m, 3): z, T, H

    @property
    def min_information(self) -> float:
        return -self.max_entropy


@dataclass
class DesignHistory:
    config: RunConfig
    init_X: np.ndarray
    init_y: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    records: list = field(default_factory=list)

    @property
    def test(self):
        return self.init_X[self.test_idx], self.init_y[self.test_idx]

    def training_set(self):
        """Current raw training inputs and outputs (initial + acquired)."""
        X = self.init_X[self.train_idx]
        y = self.init_y[self.train_idx]
        for r in self.records:
            X = np.vstack([X, r.selected[None]])
            y = np.append(y, r.observation)
        return X, y

    @property
    def n_iterations(self) -> int:
        return len(self.records)


def lhs_init(n: int, space: DesignSpace, seed=0):
    """Latin hypercube design of ``n`` raw points inside the box."""
    if n < 1:
        raise InputError("n must be at least 1")
    u = qmc.LatinHypercube(d=space.dim, seed=np.random.default_rng(seed)).random(n)
    return qmc.scale(u, space.lower, space.upper)


def split_train_test(points, seed=0):
    """Random half split; an odd count puts the extra point in train.

    Returns index arrays ``(train, test)``, each sorted.
    """
    n = len(points)
    if n < 2:
        raise InputError("need at least two points to split")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = (n + 1) // 2
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def _stats(mix: MixturePosterior, model_pts):
    mus, vs = mix.component_predictions(model_pts)
    return mus, np.maximum(vs, 1e-300)


def entropy_field(mix: MixturePosterior, grid_model, estimator: str = "taylor2"):
    """Entropy of the predictive mixture at each model-coordinate point."""
    grid_model = np.atleast_2d(np.asarray(grid_model, dtype=float))
    if grid_model.shape[0] == 0:
        raise InputError("grid must be nonempty")
    mus, vs = _stats(mix, grid_model)
    return np.atleast_1d(ent.estimate(mus, vs, estimator))


def maximize_entropy(mix: MixturePosterior, space: DesignSpace, restarts: int = 15,
                     seed=0, estimator: str = "taylor2", screen: int = 50):
    """Multi-start bounded maximization of the predictive entropy.

    L-BFGS-B (finite-difference gradients) is started from ``restarts``
    scrambled Sobol points in model coordinates. When ``screen > 0`` the
    entropy is also evaluated on a ``screen x screen`` grid and one more
    ascent starts from the best grid point, so the result never falls below
    the grid maximum. Returns the raw-unit maximizer and the entropy there.
    """
    if restarts < 1:
        raise InputError("restarts must be at least 1")
    if screen < 0 or screen == 1:
        raise InputError("screen must be 0 or at least 2")
    bounds = space.model_bounds()
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    sob = qmc.Sobol(d=space.dim, scramble=True, seed=np.random.default_rng(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)   # non power-of-two sample size
        starts = lo + sob.random(restarts) * (hi - lo)

    def neg(x):
        return -float(entropy_field(mix, x[None], estimator)[0])

    best_x, best_v = None, -math.inf
    if screen:
        pts = space.to_model(space.grid(screen))
        H = entropy_field(mix, pts, estimator)
        if np.any(np.isfinite(H)):
            starts = np.vstack([starts, pts[np.nanargmax(np.where(np.isfinite(H), H, np.nan))]])
    start_vals = -np.array([neg(s) for s in starts])
    for s0, v0 in zip(starts, start_vals):
        if v0 > best_v:
            best_x, best_v = s0, v0
        try:
            res = minimize(neg, s0, method="L-BFGS-B", bounds=bounds)
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
            log.warning("restart from %s failed: %s", s0, exc)
            continue
        x = np.clip(res.x, lo, hi)
        v = -neg(x)
        if np.isfinite(v) and v > best_v:
            best_x, best_v = x, v
    if best_x is None or not np.isfinite(best_v):
        raise NumericalError("entropy maximization failed from every start")
    return space.clip(space.to_raw(best_x)), best_v


def rmse_mae(mix: MixturePosterior, dataset: Dataset, n_realizations: int = 50, seed=0):
    """RMSE and MAE of ``n_realizations`` posterior draws against ``dataset.y``.

    Each realization picks one component uniformly, then draws independent
    Gaussian values from that component's marginals at every input.
    """
    if dataset.n == 0:
        raise InputError("dataset must be nonempty")
    mus, vs = mix.component_predictions(dataset.X)
    rng = np.random.default_rng(seed)
    rmse = np.empty(n_realizations)
    mae = np.empty(n_realizations)
    for k in range(n_realizations):
        s = rng.integers(0, mix.S)
        f = mus[s] + np.sqrt(vs[s]) * rng.standard_normal(dataset.n)
        e = f - dataset.y
        rmse[k] = math.sqrt(np.mean(e * e))
        mae[k] = np.mean(np.abs(e))
    return rmse, mae


def wilson_oracle(system) -> Callable:
    """``(z, T) -> ln gamma_PrOH`` from the Wilson model."""
    from .thermo import wilson_gamma

    def oracle(x):
        g1, _ = wilson_gamma(float(x[0]), float(x[1]), system)
        return math.log(g1)
    return oracle


def _seed(config: RunConfig, *tags) -> int:
    return int(np.random.SeedSequence([config.seed, *tags]).generate_state(1)[0])


def initialize(config: RunConfig, oracle: Callable) -> DesignHistory:
    """LHS design, oracle evaluations, and the train/test split."""
    X = lhs_init(config.n_init, config.space, _seed(config, 1))
    y = np.array([oracle(x) for x in X])
    tr, te = split_train_test(X, _seed(config, 2))
    return DesignHistory(config, X, y, tr, te)


def mixture_at(config: RunConfig, train_X, train_y, draws) -> MixturePosterior:
    data = Dataset(config.space.to_model(train_X), train_y)
    return from_draws(data, config.kernel_template(), draws, config.noise_var, config.mean_const)


def bits_iterate(history: DesignHistory, oracle: Callable, config: RunConfig | None = None,
                 keep_grid: bool = True) -> DesignHistory:
    """Run one calibrate / evaluate / acquire / augment cycle in place."""
    config = config or history.config
    k = history.n_iterations + 1
    X, y = history.training_set()
    space = config.space
    data = Dataset(space.to_model(X), y)
    it_seed = _seed(config, 100, k)
    hmc_cfg = replace(config.hmc, seed=it_seed)
    chains = sample_hyperparameters(data, config.kernel_template(), config.priors, hmc_cfg,
                                    config.noise_var, config.mean_const)
    draws = select_components(chains, config.S)
    mix = from_draws(data, config.kernel_template(), draws, config.noise_var, config.mean_const)

    tX, ty = history.test
    rng_tag = _seed(config, 200, k)
    r_tr, m_tr = rmse_mae(mix, data, config.n_realizations, rng_tag)
    r_te, m_te = rmse_mae(mix, Dataset(space.to_model(tX), ty), config.n_realizations, rng_tag + 1)

    grid_raw = space.grid(config.grid_n)
    H = entropy_field(mix, space.to_model(grid_raw), config.estimator)
    x_star, h_star = maximize_entropy(mix, space, config.restarts, _seed(config, 300, k),
                                      config.estimator, config.screen)
    obs = float(oracle(x_star))
    flat = chains.draws.reshape(-1, chains.draws.shape[-1])
    # R-hat is undefined for one chain; diagnose rejects such histories
    rhat = chains.rhat() if chains.num_chains > 1 else np.full(flat.shape[1], np.nan)
    rec = IterationRecord(
        iteration=k, train_X=X, train_y=y, selected=np.asarray(x_star, float), observation=obs,
        max_entropy=float(h_star), grid_max_entropy=float(H.max()),
        rmse_train=r_tr, mae_train=m_tr, rmse_test=r_te, mae_test=m_te,
        rhat=rhat, acceptance=chains.acceptance_rate, hyper_mean=flat.mean(axis=0),
        seed=it_seed, chains=chains,
        entropy_grid=np.column_stack([grid_raw, H]) if keep_grid else None,
    )
    history.records.append(rec)
    log.info("iteration %d: x*=%s H=%.4f rhat=%s", k, np.round(x_star, 4), h_star,
             np.round(rec.rhat, 3))
    return history


def stopping_check(history: DesignHistory, config: RunConfig | None = None) -> bool:
    """True once the train/test median-error gaps close or the budget is spent."""
    config = config or history.config
    if history.n_iterations < 1:
        raise InputError("stopping_check needs at least one recorded iteration")
    if history.n_iterations >= config.max_iters:
        return True
    r = history.records[-1]
    gap_rmse = abs(np.median(r.rmse_test) - np.median(r.rmse_train))
    gap_mae = abs(np.median(r.mae_test) - np.median(r.mae_train))
    return bool(gap_rmse < config.tol_rmse and gap_mae < config.tol_mae)


def run(config: RunConfig, oracle: Callable, keep_grid: bool = True) -> DesignHistory:
    """Initialize and iterate until :func:`stopping_check` fires.

    The gap test is only honored once ``min_iters`` iterations are done
    (capped by ``max_iters``); set ``min_iters=1`` for early stopping.
    """
    history = initialize(config, oracle)
    if config.max_iters == 0:
        return history
    floor = min(config.min_iters, config.max_iters)
    while True:
        bits_iterate(history, oracle, config, keep_grid)
        if history.n_iterations >= floor and stopping_check(history, config):
            return history


# --------------------------------------------------------------------------- persistence

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


_SAMPLE_STATS = ("rmse_train", "mae_train", "rmse_test", "mae_test")


def write_history(directory, history: DesignHistory):
    """Persist a history as ``design.csv``, ``metrics.csv``, per-iteration
    ``entropy_grid_<k>.csv`` / ``chains_<k>.csv``, and ``history.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = [p.name for p in history.config.priors]
    rows = []
    for i in range(len(history.init_X)):
        split = "train" if i in set(history.train_idx.tolist()) else "test"
        rows.append([0, *map(fmt, history.init_X[i]), fmt(history.init_y[i]), split])
    for r in history.records:
        rows.append([r.iteration, *map(fmt, r.selected), fmt(r.observation), "train"])
    _write_csv(d / "design.csv", ["iteration", "z", "T", "log_gamma", "split"], rows)

    rows = []
    for r in history.records:
        rows.append([r.iteration, "max_entropy", fmt(r.max_entropy)])
        rows.append([r.iteration, "min_information", fmt(r.min_information)])
        rows.append([r.iteration, "grid_max_entropy", fmt(r.grid_max_entropy)])
        for s in _SAMPLE_STATS:
            rows.extend([r.iteration, s, fmt(v)] for v in getattr(r, s))
        for nm, v in zip(names, r.rhat):
            rows.append([r.iteration, f"rhat_{nm}", fmt(v)])
        for c, v in enumerate(r.acceptance):
            rows.append([r.iteration, f"acceptance_chain{c}", fmt(v)])
        for nm, v in zip(names, r.hyper_mean):
            rows.append([r.iteration, f"mean_{nm}", fmt(v)])
    _write_csv(d / "metrics.csv", ["iteration", "statistic", "value"], rows)

    for r in history.records:
        if r.entropy_grid is not None:
            _write_csv(d / f"entropy_grid_{r.iteration}.csv", ["z", "T", "H"],
                       [[fmt(v) for v in row] for row in r.entropy_grid])
        if r.chains is not None:
            write_chains_csv(d / f"chains_{r.iteration}.csv", r.chains, names)

    meta = {
        "config": history.config.to_dict(),
        "train_idx": history.train_idx.tolist(),
        "test_idx": history.test_idx.tolist(),
        "iterations": [
            {"iteration": r.iteration, "seed": r.seed,
             "selected": [fmt(v) for v in r.selected], "observation": fmt(r.observation)}
            for r in history.records
        ],
    }
    with open(d / "history.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_history(directory) -> DesignHistory:
    """Inverse of :func:`write_history`."""
    d = Path(directory)
    if not (d / "history.json").exists():
        raise InputError(f"no history.json in {d}")
    with open(d / "history.json") as fh:
        meta = json.load(fh)
    config = RunConfig.from_dict(meta["config"])
    _, rows = _read_csv(d / "design.csv")
    init = [r for r in rows if int(r[0]) == 0]
    init_X = np.array([[float(r[1]), float(r[2])] for r in init])
    init_y = np.array([float(r[3]) for r in init])
    history = DesignHistory(config, init_X, init_y, np.array(meta["train_idx"], dtype=int),
                            np.array(meta["test_idx"], dtype=int))
    _, mrows = _read_csv(d / "metrics.csv")
    stats: dict = {}
    for it, name, val in mrows:
        stats.setdefault(int(it), {}).setdefault(name, []).append(float(val))
    names = [p.name for p in config.priors]
    for item in meta["iterations"]:
        k = item["iteration"]
        X, y = history.training_set()
        st = stats[k]
        grid_path = d / f"entropy_grid_{k}.csv"
        grid = None
        if grid_path.exists():
            _, g = _read_csv(grid_path)
            grid = np.array(g, dtype=float)
        chains_path = d / f"chains_{k}.csv"
        chains = read_chains_csv(chains_path)[0] if chains_path.exists() else None
        n_chain = sum(1 for s in st if s.startswith("acceptance_chain"))
        history.records.append(IterationRecord(
            iteration=k, train_X=X, train_y=y,
            selected=np.array([float(v) for v in item["selected"]]),
            observation=float(item["observation"]),
            max_entropy=st["max_entropy"][0], grid_max_entropy=st["grid_max_entropy"][0],
            rmse_train=np.array(st["rmse_train"]), mae_train=np.array(st["mae_train"]),
            rmse_test=np.array(st["rmse_test"]), mae_test=np.array(st["mae_test"]),
            rhat=np.array([st[f"rhat_{n}"][0] for n in names]),
            acceptance=np.array([st[f"acceptance_chain{c}"][0] for c in range(n_chain)]),
            hyper_mean=np.array([st[f"mean_{n}"][0] for n in names]),
            seed=int(item["seed"]), chains=chains, entropy_grid=grid,
        ))
    return history
