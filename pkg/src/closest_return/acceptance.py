"""Acceptance criteria 1-10 as runnable checks.

Each check returns a :class:`Result`; ``run_all`` prints one PASS/FAIL line
per criterion.  Tolerances are fixed here and never relaxed by callers.
"""
from __future__ import annotations

import math
import tempfile
import time
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from . import density as D
from . import extremes as X
from . import maps as Mp
from . import mixing as M
from . import tower as T
from .config import ExperimentConfig
from .orbit import closest_return_series, fixed_reference, self_return
from .seeding import rng

SEED = 42
N = 100_000
ENSEMBLE = 20_000


@dataclass
class Result:
    number: int
    title: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}: {self.detail}"


def criterion_1(workers: int = 1) -> Result:
    cdf = X.empirical_law(Mp.doubling(), self_return(), ENSEMBLE, N, SEED, workers)
    ks = X.ks_distance(cdf, lambda s: X.target_fixed(1.0, s))
    return Result(1, "self-return law, doubling", ks <= 0.02, f"KS = {ks:.4f} (<= 0.02), excluded {cdf.excluded}")


def criterion_2(workers: int = 1) -> Result:
    cdf = X.empirical_law(Mp.doubling(), fixed_reference(), ENSEMBLE, N, SEED, workers)
    ks = X.ks_distance(cdf, lambda s: X.target_fixed(1.0, s))
    ok = ks <= 0.02 and cdf.h_ref == 1.0
    return Result(2, "fixed-reference law, doubling", ok,
                  f"KS = {ks:.4f} (<= 0.02) at x_ref = {cdf.x_ref:.6f}, h(x_ref) = {cdf.h_ref}")


def criterion_3(workers: int = 1) -> Result:
    lg = Mp.logistic()
    cdf = X.empirical_law(lg, self_return(), ENSEMBLE, N, SEED, workers)
    exact = X.GumbelTarget.integrated(D.exact_density_estimate(lg, 10_000))
    ks = X.ks_distance(cdf, exact)
    ulam = D.ulam_density(lg, 1024, seed=SEED)
    mu = Mp.invariant_samples(lg, 1_000_000, SEED)
    grid = X.DEFAULT_GRID
    gap = float(np.abs(X.target_integrated(ulam, grid, mu) - exact(grid)).max())
    ok = ks <= 0.04 and gap <= 0.01
    return Result(3, "self-return law, logistic a=4", ok,
                  f"KS = {ks:.4f} (<= 0.04); Ulam m=1024 target vs exact sup = {gap:.4f} (<= 0.01)")


def criterion_4(workers: int = 1) -> Result:
    d = Mp.doubling()
    errs = []
    for k in (1, 2, 5, 10):
        est = M.measure_cal_E(d, k, 1e-3, 1_000_000, SEED + k, workers)
        errs.append(abs(est.measure_hat / 2e-3 - 1.0))
    worst = max(errs)
    return Result(4, "recurrence sets cal_E_k(1e-3), doubling", worst <= 0.10,
                  "relative errors " + ", ".join(f"{e:.3f}" for e in errs) + " (<= 0.10)")


def criterion_5(workers: int = 1) -> Result:
    cfg = M.CorrelationConfig(_identity, _identity, range(1, 7), 10_000_000)
    rows = M.correlation_alpha(Mp.doubling(), cfg, SEED, workers)
    errs = [abs(a / (2.0**-n / 12) - 1.0) for n, a, _ in rows]
    return Result(5, "correlation decay, doubling", max(errs) <= 0.15,
                  "relative errors " + ", ".join(f"{e:.3f}" for e in errs) + " (<= 0.15)")


def _identity(x):
    return x


def criterion_6(workers: int = 1) -> Result:
    d = Mp.doubling()
    tw = T.build_first_return_tower(d, (0.0, 0.5), 64)
    tail = T.return_tail(tw)
    k = np.arange(21)
    err = float(np.abs(tail.relative[:21] - 2.0**-k).max())
    rate_err = abs(-tail.fit_rate / math.log(2) - 1.0)
    pm = Mp.pomeau_manneville(0.5)
    pm_tail = T.return_tail(T.build_first_return_tower(pm, (0.5, 1.0), 1000))
    ok = (err <= 1e-9 and tail.fit_kind == "exponential" and rate_err <= 0.05
          and pm_tail.fit_kind == "polynomial" and -2.4 <= pm_tail.fit_rate <= -1.6)
    return Result(6, "tower census", ok,
                  f"doubling max|tail - 2^-k| = {err:.1e}, {tail.fit_kind} rate {tail.fit_rate:.4f}; "
                  f"PM {pm_tail.fit_kind} slope {pm_tail.fit_rate:.3f}")


def criterion_7(workers: int = 1) -> Result:
    d = Mp.doubling()
    tw = T.build_first_return_tower(d, (0.0, 0.5), 64)
    # f^R is affine and onto on every branch, so Lebesgue is its invariant measure
    mu0 = D.DensityEstimate("exact", np.linspace(0.0, 0.5, 101), np.full(100, 2.0))
    rec = T.reconstruct_measure(tw, d, mu0, 100)
    l1 = D.l1_distance(rec, lambda x: np.ones_like(x))
    return Result(7, "measure reconstruction from the tower", l1 <= 0.05, f"L1 to uniform = {l1:.2e} (<= 0.05)")


def criterion_8(workers: int = 1) -> Result:
    g = rng(SEED)
    bad = 0
    for _ in range(100_000):
        k = int(g.integers(1, 12))
        x = g.integers(0, 5, size=k).astype(float)
        if not X.sandwich_check(x, float(g.integers(0, 5)) + 0.5 * float(g.integers(0, 2))).ok:
            bad += 1
    towers = [
        T.build_first_return_tower(Mp.doubling(), (0.0, 1.0), 10),
        T.build_first_return_tower(Mp.doubling(), (0.0, 0.5), 64),
        T.build_first_return_tower(Mp.tent(), (0.0, 0.5), 64),
        T.build_first_return_tower(Mp.logistic(), (0.25, 0.75), 200),
        T.build_first_return_tower(Mp.pomeau_manneville(0.5), (0.5, 1.0), 1000),
    ]
    tail_ok = all(T.tail_sum_check(T.return_tail(tw)) for tw in towers)
    hold = []
    for mode in (fixed_reference(), self_return()):
        for r in X.blocking_diagnostic(Mp.doubling(), mode, [-1.0, 0.0, 1.0], 10_000, 4000, SEED,
                                       workers=workers):
            hold.append(r.first_holds and r.second_holds)
    ok = bad == 0 and tail_ok and all(hold)
    return Result(8, "exact combinatorial suite", ok,
                  f"sandwich failures {bad}/100000; tail sum bound on {len(towers)} towers: {tail_ok}; "
                  f"blocking inequalities hold {sum(hold)}/{len(hold)}")


def _reduced_configs(out: str) -> List[ExperimentConfig]:
    base = {"seed": 7, "output_dir": out}
    return [
        ExperimentConfig("law_self", n=2000, ensemble=600, **base),
        ExperimentConfig("law_fixed", n=2000, ensemble=600, **base),
        ExperimentConfig("density", n=100_000, **base),
        ExperimentConfig("tower_census", options={"r_max": 30}, **base),
        ExperimentConfig("recurrence_scan", options={"samples": 200_000, "ks": [1, 2, 3, 4]}, **base),
        ExperimentConfig("correlation_scan", options={"samples": 200_000}, **base),
        ExperimentConfig("blocking_diagnostic", n=400, ensemble=1000, **base),
        ExperimentConfig("singularity_scan", options={"mu_samples": 100_000, "intervals": 200,
                                                       "min_count": 20}, **base),
    ]


def determinism_digests(worker_counts=(1, 2, 8)) -> dict:
    """experiment -> list of digest dicts, one per worker count."""
    from .cli import run_experiment
    out = {}
    for w in worker_counts:
        with tempfile.TemporaryDirectory() as tmp:
            for cfg in _reduced_configs(tmp):
                out.setdefault(cfg.experiment, []).append(run_experiment(cfg, workers=w).digests)
    return out


def criterion_9(workers: int = 1) -> Result:
    start = time.perf_counter()
    g = rng(SEED)
    mono = True
    for fmap in Mp.zoo().values():
        for _ in range(20):
            x0 = float(Mp.sample_point(fmap, int(g.integers(2**63))))
            s = closest_return_series(fmap, self_return(), x0, 50)
            mono &= bool(np.all(np.diff(s.z_values) >= 0))
    st = Mp.ExactDyadicState.random(5000, SEED)
    s = closest_return_series(Mp.doubling(), self_return(), st, 4000)
    mono &= bool(np.all(np.diff(s.z_values) >= 0))
    lg = Mp.logistic()
    ests = [D.birkhoff_histogram(Mp.doubling(), 100_000), D.ulam_density(lg, 256),
            D.exact_density_estimate(lg, 100), D.birkhoff_histogram(lg, 100_000)]
    norm = max(abs(e.total_mass() - 1.0) for e in ests)
    rows = max(float(np.abs(np.asarray(D.build_ulam_operator(f, 256).matrix.sum(axis=1)).ravel() - 1).max())
               for f in Mp.zoo().values())
    digests = determinism_digests()
    same = all(all(d == v[0] for d in v) for v in digests.values())
    elapsed = time.perf_counter() - start
    ok = mono and norm <= 1e-9 and rows <= 1e-12 and same and elapsed <= 120
    return Result(9, "property suite", ok,
                  f"Z_n monotone {mono}; mass error {norm:.1e}; Ulam row error {rows:.1e}; "
                  f"digests identical across 1/2/8 workers for {len(digests)} experiments: {same}; "
                  f"{elapsed:.0f} s (<= 120)")


def criterion_10(workers: int = 1) -> Result:
    td, _ = M.singularity_exponent(Mp.doubling(), 10_000_000, 1000, SEED)
    tl, _ = M.singularity_exponent(Mp.logistic(), 10_000_000, 1000, SEED, anchor="endpoints")
    ok = abs(td - 1.0) <= 0.05 and 0.4 <= tl <= 0.65
    return Result(10, "singularity exponent", ok,
                  f"doubling theta = {td:.3f} (1 +- 0.05); logistic endpoints theta = {tl:.3f} ([0.4, 0.65])")


CRITERIA: List[Callable[..., Result]] = [
    criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
    criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
]


def run_all(only: Optional[List[int]] = None, workers: int = 1, stream=print) -> List[Result]:
    results = []
    for i, check in enumerate(CRITERIA, start=1):
        if only and i not in only:
            continue
        try:
            r = check(workers)
        except Exception as exc:  # noqa: BLE001 - a crash is a failed criterion
            r = Result(i, check.__name__, False, f"raised {type(exc).__name__}: {exc}")
        stream(r.line())
        results.append(r)
    return results
