"""``bits`` command line: run the design loop and emit plot-ready CSV/JSON.

Exit codes: 0 success, 2 configuration or input problem, 3 numerical
failure or infeasible specification. Failures print one JSON error record
on stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
from dataclasses import replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import design, distillation, thermo
from .errors import ConfigurationError, InputError, NumericalError, SpecificationError
from .inference import gelman_rubin, read_chains_csv, select_components

log = logging.getLogger("bitsgaps")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL = 0, 2, 3
MAP_BINS = 256


# --------------------------------------------------------------------------- config

def load_config(path) -> design.RunConfig:
    """Read a JSON run config; relative paths resolve against its directory.

    ``BITS_SEED`` in the environment overrides ``seed``.
    """
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict) or "schema_version" not in raw:
        raise ConfigurationError(f"{p}: config must be an object with a schema_version field")
    base = p.parent
    for key in ("system_path", "output_dir"):
        if raw.get(key) and not Path(raw[key]).is_absolute():
            raw[key] = str(base / raw[key])
    if "BITS_SEED" in os.environ:
        try:
            raw["seed"] = int(os.environ["BITS_SEED"])
        except ValueError:
            raise ConfigurationError("BITS_SEED must be an integer") from None
    cfg = design.RunConfig.from_dict(raw)
    if cfg.system_path and not Path(cfg.system_path).is_file():
        raise InputError(f"system file not found: {cfg.system_path}")
    return cfg


def _system(cfg: design.RunConfig) -> thermo.BinarySystem:
    return thermo.load_system(cfg.system_path) if cfg.system_path else thermo.default_system()


def _column_spec(cfg: design.RunConfig) -> distillation.ColumnSpec:
    try:
        return distillation.ColumnSpec(**cfg.column)
    except TypeError as exc:
        raise ConfigurationError(f"column: {exc}") from None


@contextlib.contextmanager
def _locked(directory: Path):
    directory.mkdir(parents=True, exist_ok=True)
    lock = directory / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise InputError(f"{directory} is locked by another process ({lock})") from None
    try:
        os.close(fd)
        yield directory
    finally:
        lock.unlink(missing_ok=True)


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# --------------------------------------------------------------------------- commands

def cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out or cfg.output_dir)
    oracle = design.wilson_oracle(_system(cfg))
    with _locked(out):
        history = design.run(cfg, oracle)
        design.write_history(out, history)
    print(json.dumps({"output_dir": str(out), "iterations": history.n_iterations}))
    return EXIT_OK


def _surrogate_providers(cfg, history_dir, iteration, n, seed):
    """One ``ln gamma1`` provider per realization: a randomly chosen
    component's posterior mean at the requested iteration."""
    hist = design.read_history(history_dir)
    recs = {r.iteration: r for r in hist.records}
    if iteration not in recs:
        raise InputError(f"iteration {iteration} not in history {history_dir} "
                         f"(have {sorted(recs)})")
    rec = recs[iteration]
    if rec.chains is None:
        raise InputError(f"chains_{iteration}.csv missing in {history_dir}")
    mix = design.mixture_at(hist.config, rec.train_X, rec.train_y,
                            select_components(rec.chains, hist.config.S))
    space = hist.config.space
    pick = np.random.default_rng(seed).integers(0, mix.S, size=n)
    from .gp import predict

    def make(comp):
        def ln_g1(z, T):
            pts = space.to_model(np.column_stack([np.ravel(z), np.ravel(T)]))
            return np.asarray(predict(comp, pts)[0])
        return thermo.log_gamma1_provider(ln_g1)
    return [make(mix.components[s]) for s in pick]


def cmd_phase(args) -> int:
    cfg = load_config(args.config)
    system = _system(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    z = np.linspace(0.0, 1.0, args.points)
    prov = args.provider
    if prov == "wilson":
        providers, tag = [thermo.wilson_provider(system)], "wilson"
    elif prov == "ideal":
        providers, tag = [thermo.ideal_provider], "ideal"
    elif prov.startswith("surrogate:"):
        try:
            k = int(prov.split(":", 1)[1])
        except ValueError:
            raise ConfigurationError(f"bad provider {prov!r}; use surrogate:<iter>") from None
        hist_dir = Path(args.history or cfg.output_dir)
        providers = _surrogate_providers(cfg, hist_dir, k, args.samples, cfg.seed)
        tag = f"surrogate{k}"
    else:
        raise ConfigurationError(f"unknown provider {prov!r}")
    written = []
    for r, provider in enumerate(providers):
        rows = thermo.phase_table(z, provider, system)
        suffix = tag if len(providers) == 1 and not tag.startswith("surrogate") else f"{tag}_{r:03d}"
        txy = out / f"txy_{suffix}.csv"
        thermo.write_phase_csv(txy, rows)
        _write_rows(out / f"xy_{suffix}.csv", ["x (mol frac)", "y (mol frac)"],
                    [[f"{a:.6f}", f"{b:.6f}"] for a, _, b in rows])
        written.append(str(txy))
    print(json.dumps({"files": len(written), "output_dir": str(out)}))
    return EXIT_OK


def default_curve_path() -> Path:
    return Path(str(resources.files("bitsgaps.data") / "reference_txy.csv"))


def cmd_column(args) -> int:
    cfg = load_config(args.config)
    spec = _column_spec(cfg)
    path = Path(args.curve) if args.curve else default_curve_path()
    if not path.is_file():
        raise InputError(f"curve file not found: {path}")
    curve = distillation.build_equilibrium(thermo.read_phase_csv(path))
    prof = distillation.step_stages(spec, curve)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = distillation.column_report(spec, prof)
    report["curve"] = str(path)
    report["balances"] = distillation.check_balances(spec, prof)
    (out / "column_report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    distillation.write_stage_csv(out / "stages.csv", {args.label: prof})
    distillation.write_operating_csv(out / "operating_lines.csv", spec)
    print(json.dumps({"n_stages": prof.n_stages, "feed_stage": spec.n_F,
                      "feasible": prof.feasible}))
    return EXIT_OK


def _map_and_ci(x):
    counts, edges = np.histogram(x, bins=MAP_BINS, range=(x.min(), x.max()))
    j = int(np.argmax(counts))
    lo, hi = np.percentile(x, [2.5, 97.5])
    return 0.5 * (edges[j] + edges[j + 1]), lo, hi


def cmd_diagnose(args) -> int:
    hist_dir = Path(args.history)
    files = sorted(hist_dir.glob("chains_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if args.iter is not None:
        files = [f for f in files if int(f.stem.split("_")[1]) == args.iter]
    if not files:
        raise InputError(f"no chain files in {hist_dir}")
    out = Path(args.out or hist_dir / "diagnostics")
    out.mkdir(parents=True, exist_ok=True)
    fmt = design.fmt
    rhat_rows, all_ok = [], True
    for f in files:
        k = int(f.stem.split("_")[1])
        chains, names = read_chains_csv(f)
        if chains.num_chains < 2:
            raise InputError(f"{f}: R-hat needs at least two chains, found {chains.num_chains}")
        C, K, p = chains.draws.shape
        _write_rows(out / f"trace_{k}.csv", ["chain", "iteration", *names],
                    [[c, i, *map(fmt, chains.draws[c, i])] for c in range(C) for i in range(K)])
        flat = chains.draws.reshape(-1, p)
        _write_rows(out / f"joint_{k}.csv", list(names), [list(map(fmt, row)) for row in flat])
        summary = []
        for j, name in enumerate(names):
            rh = gelman_rubin(chains.draws[:, :, j])
            mode, lo, hi = _map_and_ci(flat[:, j])
            summary.append([name, fmt(mode), fmt(lo), fmt(hi), fmt(flat[:, j].mean()), fmt(rh)])
            rhat_rows.append([k, name, fmt(rh)])
            all_ok &= bool(rh < 1.2)
        _write_rows(out / f"summary_{k}.csv",
                    ["name", "map", "ci_lower", "ci_upper", "mean", "rhat"], summary)
    _write_rows(out / "rhat.csv", ["iteration", "name", "rhat"], rhat_rows)
    print(json.dumps({"iterations": len(files), "all_rhat_below_1.2": all_ok,
                      "output_dir": str(out)}))
    return EXIT_OK


def cmd_entropy_map(args) -> int:
    hist = design.read_history(args.history)
    recs = {r.iteration: r for r in hist.records}
    if args.iter not in recs:
        raise InputError(f"iteration {args.iter} not in history (have {sorted(recs)})")
    rec = recs[args.iter]
    if rec.chains is None:
        raise InputError(f"chains_{args.iter}.csv missing in {args.history}")
    if args.grid < 2:
        raise InputError("--grid must be at least 2")
    cfg = hist.config
    mix = design.mixture_at(cfg, rec.train_X, rec.train_y, select_components(rec.chains, cfg.S))
    pts = cfg.space.grid(args.grid)
    H = design.entropy_field(mix, cfg.space.to_model(pts), args.estimator or cfg.estimator)
    out = Path(args.out or Path(args.history) / f"entropy_map_{args.iter}.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    _write_rows(out, ["z", "T", "H"], [[design.fmt(a), design.fmt(b), design.fmt(h)]
                                       for (a, b), h in zip(pts, H)])
    print(json.dumps({"file": str(out), "max_entropy": float(H.max())}))
    return EXIT_OK


# --------------------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bits", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the sequential design loop")
    p.add_argument("config")
    p.add_argument("--out", help="history directory (default: config output_dir)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("phase", help="bubble-point phase diagram data")
    p.add_argument("config")
    p.add_argument("--provider", default="wilson",
                   help="wilson, ideal or surrogate:<iteration>")
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--points", type=int, default=51)
    p.add_argument("--history", help="history directory for surrogate providers")
    p.add_argument("--out", default="phase")
    p.set_defaults(func=cmd_phase)

    p = sub.add_parser("column", help="McCabe-Thiele stage stepping")
    p.add_argument("config")
    p.add_argument("--curve", help="phase CSV (x, T, y); default: packaged table")
    p.add_argument("--label", default="curve")
    p.add_argument("--out", default="column")
    p.set_defaults(func=cmd_column)

    p = sub.add_parser("diagnose", help="HMC traces, marginals and R-hat")
    p.add_argument("history")
    p.add_argument("--iter", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("entropy-map", help="entropy field at one iteration")
    p.add_argument("history")
    p.add_argument("--iter", type=int, required=True)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--estimator", choices=sorted(design.ent.ESTIMATORS))
    p.add_argument("--out")
    p.set_defaults(func=cmd_entropy_map)
    return ap


def _fail(code: int, exc: BaseException) -> int:
    print(json.dumps({"error": type(exc).__name__, "message": str(exc), "exit_code": code}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NumericalError, SpecificationError, np.linalg.LinAlgError) as exc:
        return _fail(EXIT_NUMERICAL, exc)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_INPUT, exc)


if __name__ == "__main__":
    sys.exit(main())
