"""Empirical laws of normalized closest returns and their Gumbel-type targets.

The normalized maximum of one trajectory is Z_n - log n with
Z_n = max_{j<=n} -log d(x_ref, f^j y).  Its limit law is
exp(-2 h(x) e^{-s}) at a fixed reference point x, and the mu-average of that
expression when the reference is the starting point itself.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Union

import numpy as np

from . import _kernels as K
from ._io import write_csv, write_json
from .density import DensityEstimate, exact_density_estimate, ulam_density
from .errors import InsufficientDataError, NormalizationError
from .maps import DEFAULT_SAMPLE_BURN_IN, MapSpec, _check_domain, dyadic_words, sample_point, to_fixed64
from .orbit import ReturnMode, neg_log_distance, neg_log_fixed64
from .parallel import blocks, run_blocks
from .seeding import STREAM_REFERENCE, STREAM_START, rng, seed_path

DEFAULT_GRID = np.arange(-2.0, 6.0 + 1e-9, 0.25)
LAW_BLOCK = 256
HIT_WARNING_FRACTION = 0.01
NORMALIZATION_TOL = 1e-6


# -- empirical CDF ------------------------------------------------------------

@dataclass
class EmpiricalCdf:
    """Sorted normalized maxima Z_n - log n of an ensemble of trajectories."""

    samples: np.ndarray
    n_horizon: int
    excluded: int = 0
    warnings: List[str] = field(default_factory=list)
    x_ref: Optional[float] = None
    h_ref: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.sort(np.asarray(self.samples, dtype=float))

    @property
    def size(self) -> int:
        return len(self.samples)

    def __call__(self, s):
        """Right-continuous F(s) = #{samples <= s} / N."""
        if not self.size:
            raise InsufficientDataError("every trajectory was excluded; the empirical CDF is empty")
        return np.searchsorted(self.samples, s, side="right") / self.size

    def left(self, s):
        """Left limit F(s-) = #{samples < s} / N."""
        return np.searchsorted(self.samples, s, side="left") / self.size


# -- targets ------------------------------------------------------------------

def target_fixed(h_x: float, s):
    """exp(-2 h(x) e^{-s})."""
    if h_x < 0:
        raise ValueError("h_x must be nonnegative")
    return np.exp(-2.0 * h_x * np.exp(-np.asarray(s, dtype=float)))


def target_integrated(density: Union[DensityEstimate, Callable], s, mu_samples=None):
    """E_mu[exp(-2 e^{-s} h(X))] for the invariant density h.

    Without ``mu_samples`` the density must be a DensityEstimate and the
    expectation is the bin sum of exp(-2 e^{-s} h_i) h_i dx_i.  With
    ``mu_samples`` it is the sample mean of exp(-2 e^{-s} h(x_k)).
    """
    s = np.asarray(s, dtype=float)
    c = 2.0 * np.exp(-s)[..., None]
    if mu_samples is not None:
        with np.errstate(divide="ignore"):
            h = np.asarray(density(np.asarray(mu_samples, dtype=float)), dtype=float)
        return np.exp(-c * h).mean(axis=-1)
    if not isinstance(density, DensityEstimate):
        raise TypeError("histogram mode needs a DensityEstimate")
    mass = density.total_mass()
    if abs(mass - 1.0) > NORMALIZATION_TOL:
        raise NormalizationError(f"density integrates to {mass!r}, not 1")
    h = density.values
    return (np.exp(-c * h) * h * density.widths).sum(axis=-1)


@dataclass
class GumbelTarget:
    """Limit CDF: fixed intensity ``h_x`` or a mu-average over a density."""

    kind: str
    h_x: Optional[float] = None
    density: Optional[DensityEstimate] = None
    mu_samples: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind == "fixed":
            if self.h_x is None or self.h_x < 0:
                raise ValueError("fixed target needs h_x >= 0")
        elif self.kind == "integrated":
            if self.density is None:
                raise ValueError("integrated target needs a density")
        else:
            raise ValueError(f"unknown target kind {self.kind!r}")

    @classmethod
    def fixed(cls, h_x: float) -> "GumbelTarget":
        return cls("fixed", h_x=float(h_x))

    @classmethod
    def integrated(cls, density, mu_samples=None) -> "GumbelTarget":
        return cls("integrated", density=density, mu_samples=mu_samples)

    def __call__(self, s):
        if self.kind == "fixed":
            return target_fixed(self.h_x, s)
        return target_integrated(self.density, s, self.mu_samples)


def ks_distance(cdf: EmpiricalCdf, target: Callable, grid=DEFAULT_GRID) -> float:
    """max over the grid of |F_hat - F|, F_hat taken from both sides of each step.

    When the target is itself an empirical CDF its left limits are matched
    against ours.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be nonempty and sorted")
    f = np.asarray(target(grid), dtype=float)
    f_left = np.asarray(target.left(grid), dtype=float) if hasattr(target, "left") else f
    return float(max(np.abs(cdf(grid) - f).max(), np.abs(cdf.left(grid) - f_left).max()))


@dataclass
class LawComparison:
    grid: np.ndarray
    empirical: np.ndarray
    target: np.ndarray
    abs_diff: np.ndarray
    ks: float
    summary: dict

    def to_csv(self, path):
        write_csv(path, ("s", "empirical_F", "target_F", "abs_diff"),
                  zip(self.grid, self.empirical, self.target, self.abs_diff))

    def to_json(self, path):
        write_json(path, self.summary)


def compare_law(cdf: EmpiricalCdf, target: Callable, grid=DEFAULT_GRID) -> LawComparison:
    grid = np.asarray(grid, dtype=float)
    f = np.asarray(target(grid), dtype=float)
    emp = cdf(grid)
    diff = np.maximum(np.abs(emp - f), np.abs(cdf.left(grid) - f))
    ks = float(diff.max())
    summary = {key: cdf.meta.get(key) for key in ("map", "mode", "n", "ensemble", "seed")}
    summary.update(ks=ks, excluded=cdf.excluded)
    return LawComparison(grid, emp, f, diff, ks, summary)


# -- ensembles ----------------------------------------------------------------

def _reference(fmap: MapSpec, mode: ReturnMode, seed: int):
    """Fixed-mode reference point (drawn from mu unless supplied) and h there."""
    x_ref = mode.x_ref
    if x_ref is None:
        x_ref = sample_point(fmap, seed_path(seed, STREAM_REFERENCE))
    _check_domain(fmap, x_ref)
    if fmap.exact_density is not None:
        h = float(fmap.exact_density(np.array([x_ref]))[0])
    else:
        h = float(ulam_density(fmap, 1024, seed=seed_path(seed, STREAM_REFERENCE, 1))(x_ref))
    return float(x_ref), h


def _start_points(fmap: MapSpec, seed: int, start: int, stop: int, burn_in: int) -> np.ndarray:
    a, b = fmap.domain
    x0 = np.array([a + (b - a) * rng(seed_path(seed, STREAM_START, i)).random() for i in range(start, stop)])
    return K.burn(fmap.code, fmap.kernel_params, x0, burn_in)


def _law_block(fmap: MapSpec, self_mode: bool, x_ref, j0: int, n: int, seed: int,
               start: int, stop: int, burn_in: int):
    """Normalized maxima and exact-hit flags for trajectories start..stop-1."""
    out = np.empty(stop - start)
    hit = np.zeros(stop - start, dtype=bool)
    if fmap.is_dyadic:
        tent = fmap.family == "tent"
        ref = None if self_mode else to_fixed64(x_ref)
        for k, i in enumerate(range(start, stop)):
            words = dyadic_words(n + 64, rng(seed_path(seed, STREAM_START, i)))
            r = np.uint64(K.dyadic_value(words, 0, 0, tent)) if self_mode else ref
            d = K.dyadic_min_distance(words, 0, r, j0, n, tent)
            hit[k] = d == 0
            out[k] = neg_log_fixed64(d)
    else:
        ys = _start_points(fmap, seed, start, stop, burn_in)
        for k, y in enumerate(ys):
            r = y if self_mode else x_ref
            d = K.float_min_distance(fmap.code, fmap.kernel_params, y, r, j0, n)
            hit[k] = d == 0
            out[k] = neg_log_distance(d)
    return out - math.log(n), hit


def empirical_law(fmap: MapSpec, mode: ReturnMode, ensemble: int, n: int, seed: int,
                  workers: int = 1, burn_in: int = DEFAULT_SAMPLE_BURN_IN) -> EmpiricalCdf:
    """Empirical law of Z_n - log n over ``ensemble`` independent trajectories.

    Doubling and tent orbits run on the exact bit engine with a fresh random
    buffer per trajectory (a uniform start is an invariant start).  Other maps
    start from a burned-in uniform point.  Trajectories that hit the
    reference exactly are excluded and counted.
    """
    if ensemble < 100:
        raise ValueError("ensemble must be >= 100")
    if n < 1:
        raise ValueError("n must be >= 1")
    self_mode = mode.kind == "self_return"
    x_ref = h_ref = None
    if not self_mode:
        x_ref, h_ref = _reference(fmap, mode, seed)
    tasks = [(fmap, self_mode, x_ref, mode.first_index, n, seed, start, stop, burn_in)
             for _, start, stop in blocks(ensemble, LAW_BLOCK)]
    parts = run_blocks(_law_block, tasks, workers)
    values = np.concatenate([p[0] for p in parts])
    hits = np.concatenate([p[1] for p in parts])
    excluded = int(hits.sum())
    warnings = []
    if excluded > HIT_WARNING_FRACTION * ensemble:
        warnings.append(f"data quality: {excluded} of {ensemble} trajectories hit the reference exactly")
    meta = {"map": fmap.family, "mode": mode.kind, "n": n, "ensemble": ensemble, "seed": seed}
    return EmpiricalCdf(values[~hits], n, excluded, warnings, x_ref, h_ref, meta)


def target_for(fmap: MapSpec, cdf: EmpiricalCdf, density: Optional[DensityEstimate] = None,
               bins: int = 10_000) -> GumbelTarget:
    """Limit law matching an ensemble: fixed at h(x_ref), else integrated over h."""
    if cdf.h_ref is not None:
        return GumbelTarget.fixed(cdf.h_ref)
    if density is None:
        density = exact_density_estimate(fmap, bins) if fmap.exact_density is not None \
            else ulam_density(fmap, 1024)
    return GumbelTarget.integrated(density)


# -- blocking -----------------------------------------------------------------

@dataclass(frozen=True)
class BlockingScheme:
    """n = p q + r with block length p, gap s and q blocks."""

    n: int
    p: int
    q: int
    r: int
    s: int


def blocking_decomposition(n: int, p: Optional[int] = None) -> BlockingScheme:
    """p = floor(sqrt n), q, r from Euclidean division, s = floor((log n)^2)."""
    if n < 16:
        raise ValueError("n must be >= 16")
    if p is None:
        p = math.isqrt(n)
    if not 1 <= p <= n:
        raise ValueError("block length p must lie in [1, n]")
    q, r = divmod(n, p)
    return BlockingScheme(n, p, q, r, int(math.log(n) ** 2))


class Sandwich(tuple):
    __slots__ = ()

    def __new__(cls, lhs, mid, rhs, ok):
        return super().__new__(cls, (lhs, mid, rhs, ok))

    lhs = property(lambda self: self[0])
    mid = property(lambda self: self[1])
    rhs = property(lambda self: self[2])
    ok = property(lambda self: self[3])


def sandwich_check(x_values, u: float) -> Sandwich:
    """Both indicator inequalities of the inclusion-exclusion sandwich for Z_k.

    The double sum runs over ordered pairs l != j, so with c exceedances it
    equals c (c - 1).
    """
    x = np.asarray(x_values, dtype=float)
    if x.size < 1:
        raise ValueError("need k >= 1 values")
    c = int(np.count_nonzero(x > u))
    mid = int(x.max() > u)
    rhs = c - c * (c - 1)
    return Sandwich(c, mid, rhs, c >= mid >= rhs)


@dataclass
class Estimate:
    value: float
    half_width: float

    @classmethod
    def of(cls, per_trajectory) -> "Estimate":
        v = np.asarray(per_trajectory, dtype=float)
        return cls(float(v.mean()), float(3.0 * v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.inf)


@dataclass
class BlockingReport:
    """Both blocking inequalities at u = v + log n, with 3 sigma half-widths.

    First:  0 <= P(Z_r < u) - P(Z_{r+k} < u) <= k P(X > u)  with r = n.
    Second: |P(Z_n < u) - P(Z_m < u) + E| <= 2 p S + s P(X > u)  with
    m = n - p - s, S = sum_j P(X > u, X o f^j > u) and E the sum over the
    first block of exceedances followed by no exceedance in the last m.
    """

    scheme: BlockingScheme
    v: float
    u: float
    k: int
    m: int
    p_exceed: Estimate
    p_z_n: Estimate
    p_z_nk: Estimate
    p_z_m: Estimate
    pair_sum: Estimate
    e_term: Estimate
    first_diff: Estimate
    second_diff: Estimate
    ensemble: int
    warnings: List[str] = field(default_factory=list)

    @property
    def first_bound(self) -> Estimate:
        return Estimate(self.k * self.p_exceed.value, self.k * self.p_exceed.half_width)

    @property
    def second_bound(self) -> Estimate:
        s, p = self.scheme.s, self.scheme.p
        return Estimate(2 * p * self.pair_sum.value + s * self.p_exceed.value,
                        2 * p * self.pair_sum.half_width + s * self.p_exceed.half_width)

    @property
    def first_holds(self) -> bool:
        d, b = self.first_diff, self.first_bound
        return d.value >= -d.half_width and d.value - d.half_width <= b.value + b.half_width

    @property
    def second_holds(self) -> bool:
        d, b = self.second_diff, self.second_bound
        return abs(d.value) - d.half_width <= b.value + b.half_width

    def summary(self) -> dict:
        est = lambda e: {"value": e.value, "half_width": e.half_width}
        return {
            "n": self.scheme.n, "p": self.scheme.p, "q": self.scheme.q, "r": self.scheme.r,
            "s": self.scheme.s, "k": self.k, "m": self.m, "v": self.v, "u": self.u,
            "ensemble": self.ensemble, "p_exceed": est(self.p_exceed), "p_z_n": est(self.p_z_n),
            "p_z_m": est(self.p_z_m), "pair_sum": est(self.pair_sum), "e_term": est(self.e_term),
            "first_diff": est(self.first_diff), "first_bound": est(self.first_bound),
            "second_diff": est(self.second_diff), "second_bound": est(self.second_bound),
            "first_holds": self.first_holds, "second_holds": self.second_holds,
            "warnings": list(self.warnings),
        }


def _exceedances(fmap, self_mode, x_ref, length, seed, i, burn_in):
    """X_1..X_length of trajectory i (index 0 of the result is X_1)."""
    if fmap.is_dyadic:
        tent = fmap.family == "tent"
        words = dyadic_words(length + 64, rng(seed_path(seed, STREAM_START, i)))
        ref = np.uint64(K.dyadic_value(words, 0, 0, tent)) if self_mode else to_fixed64(x_ref)
        return neg_log_fixed64(K.dyadic_distances(words, 0, ref, length, tent)[1:])
    y = _start_points(fmap, seed, i, i + 1, burn_in)[0]
    ref = y if self_mode else x_ref
    return neg_log_distance(K.float_distances(fmap.code, fmap.kernel_params, y, ref, length)[1:])


def _blocking_block(fmap, self_mode, x_ref, us, scheme, k, m, seed, start, stop, burn_in):
    """Per-trajectory indicators for each level in ``us``; shape (levels, traj, 7)."""
    n, p, s = scheme.n, scheme.p, scheme.s
    length = max(n + k, n)
    out = np.zeros((len(us), stop - start, 7))
    for t, i in enumerate(range(start, stop)):
        x = _exceedances(fmap, self_mode, x_ref, length, seed, i, burn_in)
        for a, u in enumerate(us):
            ex = x > u
            first_n = ex[:n]
            pos = np.flatnonzero(first_n)
            z_n = not pos.size
            z_nk = not ex[:n + k].any()
            z_m = not ex[:m].any()
            # stationary averages along the trajectory
            p_exc = pos.size / n
            lag = np.subtract.outer(pos, pos)
            pairs = np.count_nonzero((lag > 0) & (lag <= p) & (pos[None, :] < n - p)) / (n - p)
            # exceedances in the first block, none in the last m of the horizon
            e_term = np.count_nonzero(pos < p) * (not ex[p + s:p + s + m].any())
            out[a, t] = (p_exc, z_n, z_nk, z_m, pairs, e_term, z_n - z_m + e_term)
    return out


def blocking_diagnostic(fmap: MapSpec, mode: ReturnMode, v, n: int, ensemble: int, seed: int,
                        p: Optional[int] = None, k: Optional[int] = None, workers: int = 1,
                        burn_in: int = DEFAULT_SAMPLE_BURN_IN):
    """Monte Carlo check of both blocking inequalities at u = v + log n.

    ``v`` may be a sequence, in which case the same trajectories serve every
    level and a list of reports is returned.  ``k`` defaults to q (p + s) - n,
    the horizon extension used to pass from Z_n to Z_{q(p+s)}.
    """
    if ensemble < 1000:
        raise ValueError("ensemble must be >= 1000")
    scheme = blocking_decomposition(n, p)
    if k is None:
        k = max(scheme.q * (scheme.p + scheme.s) - n, 0)
    if k < 0:
        raise ValueError("k must be >= 0")
    m = n - scheme.p - scheme.s
    if m < 1:
        raise ValueError("n too small for one block plus gap")
    vs = np.atleast_1d(np.asarray(v, dtype=float))
    us = vs + math.log(n)
    self_mode = mode.kind == "self_return"
    x_ref = None
    if not self_mode:
        x_ref, _ = _reference(fmap, mode, seed)
    tasks = [(fmap, self_mode, x_ref, us, scheme, k, m, seed, start, stop, burn_in)
             for _, start, stop in blocks(ensemble, LAW_BLOCK)]
    data = np.concatenate(run_blocks(_blocking_block, tasks, workers), axis=1)
    reports = []
    for a, (vv, u) in enumerate(zip(vs, us)):
        d = data[a]
        warnings = []
        if not d[:, 0].any():
            warnings.append(f"insufficient exceedances: no X_j > u = {u:.6g} in the ensemble")
        reports.append(BlockingReport(
            scheme, float(vv), float(u), k, m,
            p_exceed=Estimate.of(d[:, 0]), p_z_n=Estimate.of(d[:, 1]), p_z_nk=Estimate.of(d[:, 2]),
            p_z_m=Estimate.of(d[:, 3]), pair_sum=Estimate.of(d[:, 4]), e_term=Estimate.of(d[:, 5]),
            first_diff=Estimate.of(d[:, 1] - d[:, 2]), second_diff=Estimate.of(d[:, 6]),
            ensemble=ensemble, warnings=warnings))
    return reports if np.ndim(v) else reports[0]
