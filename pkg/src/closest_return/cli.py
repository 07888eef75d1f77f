"""Experiment driver and command-line entry point.

Each experiment writes ``data.csv``, ``summary.json`` and ``manifest.json``
into ``<output_dir>/<experiment>-<seed>/``.  Data and summary depend only on
the config (never on the worker count); the manifest adds wall time and
SHA-256 digests of the other two files.
"""
from __future__ import annotations

import argparse
import hashlib
import sys
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import density as D
from . import extremes as X
from . import mixing as M
from . import tower as T
from ._io import write_csv, write_json
from .config import EXPERIMENTS, ExperimentConfig, load_config
from .errors import ConfigError, InsufficientDataError
from .maps import invariant_samples, orbit_samples
from .orbit import fixed_reference, self_return
from .seeding import STREAM_REFERENCE, STREAM_SAMPLES, derive_seed, seed_path

__all__ = ["ResultManifest", "run_experiment", "derive_seed", "main", "OBSERVABLES"]

EXACT_TARGET_BINS = 10_000


def _identity(x):
    return x


def _square(x):
    return x * x


def _cos2pi(x):
    return np.cos(2 * np.pi * x)


def _sin2pi(x):
    return np.sin(2 * np.pi * x)


def _constant(x):
    return np.ones_like(x)


OBSERVABLES = {"identity": _identity, "square": _square, "cos2pi": _cos2pi,
               "sin2pi": _sin2pi, "constant": _constant}


@dataclass
class ResultManifest:
    config: dict
    version: str
    wall_time: float
    files: list  # [{"name", "sha256", "bytes"}]
    summary: dict

    @property
    def digests(self) -> dict:
        return {f["name"]: f["sha256"] for f in self.files}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _fit_summary(points):
    try:
        fit = M.fit_decay(points)
    except InsufficientDataError:
        return None
    return {"kind": fit.kind, "rate": fit.rate, "intercept": fit.intercept}


def _density_for(cfg: ExperimentConfig, fmap, source="auto"):
    if source == "auto":
        source = "exact" if fmap.exact_density is not None else "ulam"
    if source == "exact":
        return D.exact_density_estimate(fmap, EXACT_TARGET_BINS), source
    if source == "ulam":
        est = D.ulam_density(fmap, cfg.estimator["m"], cfg.estimator["samples_per_cell"],
                             seed_path(cfg.seed, STREAM_REFERENCE, 1))
        return est, source
    raise ConfigError("options.density_source", "must be auto, exact or ulam")


# -- runners: each writes data.csv and returns the summary ---------------------

def _run_law(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    opts = cfg.options
    if cfg.experiment == "law_fixed":
        mode = fixed_reference(opts["x_ref"])
    else:
        mode = self_return()
    cdf = X.empirical_law(fmap, mode, cfg.ensemble, cfg.n, cfg.seed, workers, cfg.estimator["burn_in"])
    extra = {}
    if cfg.experiment == "law_fixed":
        target = X.GumbelTarget.fixed(cdf.h_ref)
    else:
        dens, source = _density_for(cfg, fmap, opts["density_source"])
        mu = None
        if opts["target_samples"]:
            mu = invariant_samples(fmap, opts["target_samples"], seed_path(cfg.seed, STREAM_REFERENCE, 2))
        target = X.GumbelTarget.integrated(dens, mu)
        extra = {"density_source": source, "target_samples": opts["target_samples"]}
    comp = X.compare_law(cdf, target, cfg.s_grid())
    comp.to_csv(data)
    return {**comp.summary, **extra, "target": target.kind, "x_ref": cdf.x_ref, "h_ref": cdf.h_ref,
            "samples": cdf.size, "warnings": cdf.warnings}


def _run_density(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    est = cfg.estimator
    method = cfg.options["method"]
    if method == "birkhoff":
        h = D.birkhoff_histogram(fmap, cfg.n, cfg.options["burn_in"], est["bins"], cfg.seed)
    elif method in ("ulam", "ulam_exact"):
        h = D.ulam_density(fmap, est["m"], est["samples_per_cell"], cfg.seed,
                           "exact" if method == "ulam_exact" else "sampling")
    elif method == "exact":
        h = D.exact_density_estimate(fmap, est["bins"])
    else:
        raise ConfigError("options.method", "must be birkhoff, ulam, ulam_exact or exact")
    h.to_csv(data)
    summary = {"map": fmap.family, "method": method, "bins": h.bins, "min": float(h.values.min()),
               "max": float(h.values.max()), "total_mass": h.total_mass(),
               "tail_exponent": D.tail_exponent(h), "seed": cfg.seed}
    if fmap.exact_density is not None:
        summary["l1_to_exact"] = D.l1_distance(h, fmap.exact_density)
    return summary


def _run_tower(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    opts = cfg.options
    tower = T.build_first_return_tower(fmap, tuple(opts["base"]), opts["r_max"])
    tail = T.return_tail(tower, fit_from=opts["fit_from"])
    write_csv(data, ("k", "lambda_R_gt_k", "relative"),
              zip(range(len(tail.values)), tail.values, tail.relative))
    summary = {"map": fmap.family, "base": list(tower.base), "r_max": tower.r_max,
               "branches": len(tower.branches), "coverage": tower.coverage, "gcd": tower.gcd,
               "markov": tower.is_markov, "censored_mass": tower.censored_mass,
               "fit_kind": tail.fit_kind, "fit_rate": tail.fit_rate,
               "tail_halving_check": T.tail_sum_check(tail), "seed": cfg.seed}
    if opts["regularity_pairs"]:
        rep = T.check_regularity(tower, fmap, opts["regularity_pairs"], cfg.seed)
        summary["regularity"] = rep._asdict()
    return summary


def _run_recurrence(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    o = cfg.options
    kind = o["set"]
    rows = []
    dens = None
    if kind == "F":
        dens, _ = _density_for(cfg, fmap)
    for i, k in enumerate(o["ks"]):
        seed = derive_seed(cfg.seed, i)
        if kind == "cal_E":
            est = M.measure_cal_E(fmap, k, o["eps"], o["samples"], seed, workers)
        elif kind == "E":
            est = M.measure_E_k(fmap, k, o["samples"], seed, workers)
        elif kind == "F":
            est = M.measure_F_k(fmap, dens, k, o["psi"], o["rho"], o["samples"], o["inner_samples"],
                                seed, workers)
        else:
            raise ConfigError("options.set", "must be cal_E, E or F")
        rows.append((k, est.measure_hat, est.half_width, est.indeterminate))
    write_csv(data, ("k", "estimate", "half_width", "indeterminate"), rows)
    return {"map": fmap.family, "set": kind, "ks": list(o["ks"]), "estimates": [r[1] for r in rows],
            "half_widths": [r[2] for r in rows], "fit": _fit_summary([(r[0], r[1]) for r in rows]),
            "seed": cfg.seed}


def _run_correlation(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    o = cfg.options
    try:
        g1, g2 = OBSERVABLES[o["observable_1"]], OBSERVABLES[o["observable_2"]]
    except KeyError as exc:
        raise ConfigError("options.observable", f"unknown observable {exc}; known: {', '.join(OBSERVABLES)}")
    ccfg = M.CorrelationConfig(g1, g2, o["lags"], o["samples"], o["holder_exponent"], o["mollifier_eta"])
    rows = M.correlation_alpha(fmap, ccfg, cfg.seed, workers, cfg.estimator["burn_in"])
    write_csv(data, ("lag", "estimate", "half_width"), rows)
    return {"map": fmap.family, "lags": [r[0] for r in rows], "alpha": [r[1] for r in rows],
            "half_widths": [r[2] for r in rows], "fit": _fit_summary([(r[0], r[1]) for r in rows]),
            "seed": cfg.seed}


_BLOCK_COLUMNS = ("v", "u", "p_exceed", "p_z_n", "p_z_m", "pair_sum", "e_term", "first_diff",
                  "first_bound", "second_diff", "second_bound", "first_holds", "second_holds")


def _run_blocking(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    o = cfg.options
    if o["mode"] not in ("fixed_reference", "self_return"):
        raise ConfigError("options.mode", "must be fixed_reference or self_return")
    mode = fixed_reference() if o["mode"] == "fixed_reference" else self_return()
    reports = X.blocking_diagnostic(fmap, mode, list(o["v"]), cfg.n, cfg.ensemble, cfg.seed,
                                    p=o["p"], workers=workers, burn_in=cfg.estimator["burn_in"])
    write_csv(data, _BLOCK_COLUMNS, [
        (r.v, r.u, r.p_exceed.value, r.p_z_n.value, r.p_z_m.value, r.pair_sum.value, r.e_term.value,
         r.first_diff.value, r.first_bound.value, r.second_diff.value, r.second_bound.value,
         r.first_holds, r.second_holds) for r in reports])
    return {"map": fmap.family, "mode": o["mode"], "seed": cfg.seed, "reports": [r.summary() for r in reports],
            "all_hold": all(r.first_holds and r.second_holds for r in reports)}


def _run_singularity(cfg: ExperimentConfig, data: Path, workers: int) -> dict:
    fmap = cfg.map_spec()
    o = cfg.options
    samples = orbit_samples(fmap, o["mu_samples"], seed_path(cfg.seed, STREAM_SAMPLES))
    im = M.interval_masses(fmap, samples, o["intervals"], cfg.seed, o["anchor"])
    theta, C = M.singularity_exponent(fmap, o["mu_samples"], o["intervals"], cfg.seed, o["anchor"],
                                      min_count=o["min_count"], quantile=o["quantile"], samples=samples)
    write_csv(data, ("left", "length", "mass", "count"), zip(im.lo, im.length, im.mass, im.count))
    return {"map": fmap.family, "anchor": o["anchor"], "theta_hat": theta, "C_hat": C, "seed": cfg.seed}


_RUNNERS = {
    "law_fixed": _run_law, "law_self": _run_law, "density": _run_density, "tower_census": _run_tower,
    "recurrence_scan": _run_recurrence, "correlation_scan": _run_correlation,
    "blocking_diagnostic": _run_blocking, "singularity_scan": _run_singularity,
}


def run_experiment(cfg: ExperimentConfig, workers: Optional[int] = None) -> ResultManifest:
    """Run one configured experiment and persist its outputs."""
    workers = cfg.workers if workers is None else workers
    start = time.perf_counter()
    out = cfg.run_dir
    out.mkdir(parents=True, exist_ok=True)
    data, summ = out / "data.csv", out / "summary.json"
    summary = _RUNNERS[cfg.experiment](cfg, data, workers)
    summary["experiment"] = cfg.experiment
    write_json(summ, summary)
    files = [{"name": p.name, "sha256": _sha256(p), "bytes": p.stat().st_size} for p in (data, summ)]
    manifest = ResultManifest(cfg.to_dict(), __version__, time.perf_counter() - start, files, summary)
    write_json(out / "manifest.json", asdict(manifest))
    return manifest


# -- command line -------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="closest-return", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", type=Path, help="TOML or JSON config file")
        p.add_argument("--seed", type=int, help="root seed (overrides the config)")
        p.add_argument("--workers", type=int, help="worker processes (does not change results)")
        p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p = sub.add_parser("acceptance", help="run the acceptance criteria and print pass/fail lines")
    p.add_argument("--only", help="comma-separated criterion numbers, e.g. 1,4,7")
    p.add_argument("--workers", type=int, default=1)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "acceptance":
        from .acceptance import run_all
        only = [int(c) for c in args.only.split(",")] if args.only else None
        results = run_all(only, workers=args.workers)
        return 0 if all(r.passed for r in results) else 1
    overrides = {"seed": args.seed, "workers": args.workers,
                 "output_dir": str(args.out) if args.out else None}
    try:
        if args.config:
            cfg = load_config(args.config, **overrides)
            if cfg.experiment != args.command:
                raise ConfigError("experiment", f"config says {cfg.experiment!r}, command is {args.command!r}")
        else:
            cfg = ExperimentConfig.from_dict({"experiment": args.command},
                                             **{k: v for k, v in overrides.items() if v is not None})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run_experiment(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report with context, nonzero exit
        print(f"{cfg.experiment} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {cfg.run_dir}")
    for key in ("ks", "fit_kind", "fit_rate", "theta_hat", "all_hold"):
        if key in manifest.summary:
            print(f"  {key} = {manifest.summary[key]}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
