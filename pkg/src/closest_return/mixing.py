"""Recurrence-set measures, the measure-regularity exponent and correlation decay.

All estimators average over independent mu-distributed points, one per
trajectory.  Doubling and tent points are random bit buffers, so their
orbits are exact; other maps use burned-in uniform starts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog

from . import _kernels as K
from .density import DensityEstimate
from .errors import DegenerateError, InsufficientDataError
from .fitting import DecayFit, fit_decay
from .maps import DEFAULT_SAMPLE_BURN_IN, MapSpec, orbit_samples
from .parallel import run_blocks
from .seeding import STREAM_INNER, STREAM_INTERVALS, STREAM_SAMPLES, rng, seed_path

__all__ = [
    "RecurrenceEstimate", "CorrelationConfig", "Mollifier", "measure_cal_E", "measure_E_k",
    "measure_F_k", "e_k_horizon", "e_k_mask", "interval_masses", "singularity_exponent", "correlation_alpha",
    "covariance_estimate", "mollify_indicator", "fit_decay", "DecayFit",
]

BLOCK = 1 << 16
BLOCK_WORDS = 1 << 22  # cap on uint64 words held per block of dyadic buffers
MAX_NESTED = 10**9


@dataclass
class RecurrenceEstimate:
    set_kind: str
    measure_hat: float
    half_width: float
    sample_count: int
    params: dict = field(default_factory=dict)
    indeterminate: int = 0

    def __post_init__(self):
        if not 0.0 <= self.measure_hat <= 1.0:
            raise ValueError("measure_hat must lie in [0, 1]")
        if self.half_width < 0:
            raise ValueError("half_width must be nonnegative")


def _bernoulli(kind, hits: int, count: int, params) -> RecurrenceEstimate:
    p = hits / count
    return RecurrenceEstimate(kind, p, 3.0 * math.sqrt(p * (1.0 - p) / count), count, params)


# -- sample blocks ------------------------------------------------------------

def _rows_per_block(nbits: int) -> int:
    nw = nbits // 64 + 2
    return max(1, min(BLOCK, BLOCK_WORDS // nw))


def _dyadic_block(rows: int, nbits: int, seed: int) -> np.ndarray:
    """``rows`` independent uniform bit buffers, each good for offsets < nbits."""
    nw = nbits // 64 + 2
    return rng(seed).integers(0, 2**64, size=(rows, nw), dtype=np.uint64, endpoint=False)


def _float_block(fmap: MapSpec, rows: int, seed: int, burn_in: int) -> np.ndarray:
    a, b = fmap.domain
    return K.burn(fmap.code, fmap.kernel_params, a + (b - a) * rng(seed).random(rows), burn_in)


def _plan(count: int, rows: int):
    return [(b, start, min(start + rows, count)) for b, start in enumerate(range(0, count, rows))]


def _to_unit(v) -> np.ndarray:
    return (np.asarray(v, dtype=np.uint64) >> np.uint64(11)).astype(np.float64) * 2.0**-53


# -- recurrence sets ----------------------------------------------------------

def _cal_e_block(fmap, k, eps, seed, b, start, stop, burn_in):
    rows = stop - start
    s = seed_path(seed, STREAM_SAMPLES, b)
    if fmap.is_dyadic:
        vals = K.dyadic_iterates(_dyadic_block(rows, k + 64, s), np.array([0, k]), fmap.family == "tent")
        # exact 64-bit difference, compared in units of 2^-64
        diff = np.where(vals[:, 0] > vals[:, 1], vals[:, 0] - vals[:, 1], vals[:, 1] - vals[:, 0])
        return int(np.count_nonzero(diff.astype(np.float64) * 2.0**-64 < eps))
    x = _float_block(fmap, rows, s, burn_in)
    y = K.float_iterates(fmap.code, fmap.kernel_params, x, np.array([k]))[:, 0]
    return int(np.count_nonzero(np.abs(x - y) < eps))


def measure_cal_E(fmap: MapSpec, k: int, eps: float, samples: int, seed: int, workers: int = 1,
                  burn_in: int = DEFAULT_SAMPLE_BURN_IN) -> RecurrenceEstimate:
    """mu{x : |x - f^k(x)| < eps} by Monte Carlo."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    if samples < 10_000:
        raise ValueError("samples must be >= 10^4")
    params = {"k": k, "eps": eps}
    if eps >= fmap.length:
        return RecurrenceEstimate("cal_E", 1.0, 0.0, samples, params)
    tasks = [(fmap, k, eps, seed, b, start, stop, burn_in)
             for b, start, stop in _plan(samples, _rows_per_block(k + 64))]
    return _bernoulli("cal_E", sum(run_blocks(_cal_e_block, tasks, workers)), samples, params)


def e_k_horizon(k: float) -> int:
    """floor((log k)^5), natural log; 0 when k <= 1."""
    return int(math.log(k) ** 5) if k > 1 else 0


def e_k_mask(fmap: MapSpec, k: float, block) -> np.ndarray:
    """Membership in E_k for a block of points.

    ``block`` is a (rows, words) uint64 buffer matrix for dyadic maps, or a
    float array of points otherwise.  A point belongs to E_k when
    |y - f^j(y)| <= 1/k for some 1 <= j <= floor((log k)^5).
    """
    J = e_k_horizon(k)
    if J == 0:
        return np.zeros(len(block), dtype=bool)
    if fmap.is_dyadic:
        block = np.ascontiguousarray(block, dtype=np.uint64)
        if block.shape[1] * 64 < J + 64:
            raise ValueError(f"buffers hold {block.shape[1] * 64} bits, E_k needs {J + 64}")
        thr = np.uint64(min(int(2.0**64 / k), 2**64 - 1))
        return K.dyadic_self_return(block, J, thr, fmap.family == "tent")
    return K.float_self_return(fmap.code, fmap.kernel_params, np.asarray(block, dtype=float), J, 1.0 / k)


def _e_k_block(fmap, k, seed, b, start, stop, burn_in):
    rows = stop - start
    s = seed_path(seed, STREAM_SAMPLES, b)
    if fmap.is_dyadic:
        pts = _dyadic_block(rows, e_k_horizon(k) + 64, s)
    else:
        pts = _float_block(fmap, rows, s, burn_in)
    return int(np.count_nonzero(e_k_mask(fmap, k, pts)))


def measure_E_k(fmap: MapSpec, k: int, samples: int, seed: int, workers: int = 1,
                burn_in: int = DEFAULT_SAMPLE_BURN_IN) -> RecurrenceEstimate:
    """mu(E_k): points returning within 1/k of themselves by time floor((log k)^5)."""
    if k < 3:
        raise ValueError("k must be >= 3")
    if samples < 1:
        raise ValueError("samples must be positive")
    J = e_k_horizon(k)
    tasks = [(fmap, k, seed, b, start, stop, burn_in)
             for b, start, stop in _plan(samples, _rows_per_block(J + 64))]
    params = {"k": k, "horizon": J}
    return _bernoulli("E", sum(run_blocks(_e_k_block, tasks, workers)), samples, params)


def _inverse_cdf(density: DensityEstimate, p) -> np.ndarray:
    cum = np.concatenate([[0.0], np.cumsum(density.masses)])
    p = np.clip(p, 0.0, cum[-1])
    i = np.clip(np.searchsorted(cum, p, side="right") - 1, 0, density.bins - 1)
    v = density.values[i]
    with np.errstate(divide="ignore", invalid="ignore"):
        x = density.edges[i] + np.where(v > 0, (p - cum[i]) / v, 0.0)
    return np.clip(x, density.edges[i], density.edges[i + 1])


def _f_k_block(fmap, density, K_, radius, threshold, inner, seed, b, start, stop):
    """For outer points start..stop-1: (exceeds threshold, indeterminate) counts."""
    a, bb = fmap.domain
    J = e_k_horizon(K_)
    g = rng(seed_path(seed, STREAM_SAMPLES, b))
    xs = a + (bb - a) * g.random(stop - start)
    exceed = indeterminate = 0
    for i, x in enumerate(xs):
        lo, hi = max(a, x - radius), min(bb, x + radius)
        mass = float(density.cdf(hi) - density.cdf(lo))
        if J == 0 or mass <= 0:
            est, hw = 0.0, 0.0
        else:
            gi = rng(seed_path(seed, STREAM_INNER, start + i))
            if fmap.is_dyadic:
                # mu = lambda here; place uniform points of the window in the leading word
                words = _dyadic_block(inner, J + 64, seed_path(seed, STREAM_INNER, start + i, 1))
                lo64, hi64 = int(lo * 2.0**64), min(int(hi * 2.0**64), 2**64 - 1)
                words[:, 0] = gi.integers(lo64, hi64, size=inner, dtype=np.uint64, endpoint=True)
                pts = words
            else:
                u = density.cdf(lo) + mass * gi.random(inner)
                pts = _inverse_cdf(density, u)
            frac = float(np.count_nonzero(e_k_mask(fmap, K_, pts))) / inner
            est = mass * frac
            hw = 3.0 * mass * math.sqrt(frac * (1.0 - frac) / inner)
        exceed += est >= threshold
        indeterminate += hw > threshold
    return exceed, indeterminate


def measure_F_k(fmap: MapSpec, density: DensityEstimate, k: int, psi: float = 1.0, rho: float = 0.25,
                outer_samples: int = 1000, inner_samples: int = 1000, seed: int = 0,
                workers: int = 1) -> RecurrenceEstimate:
    """Lebesgue measure of F_k = {x : mu([x - k^-psi, x + k^-psi] cap E_K) >= 2 k^-(1+rho) psi}.

    K = ceil(k^psi).  The inner measure is mu(window) from ``density`` times
    the fraction of mu-distributed window points lying in E_K.  Points whose
    inner 3 sigma half-width exceeds the threshold are counted as
    indeterminate.
    """
    if psi <= 0 or rho <= 0:
        raise ValueError("psi and rho must be positive")
    if k < 1:
        raise ValueError("k must be >= 1")
    if outer_samples * inner_samples > MAX_NESTED:
        raise ValueError("nested budget outer_samples * inner_samples exceeds 10^9")
    K_ = math.ceil(k ** psi)
    radius = k ** -psi
    threshold = 2.0 * k ** (-(1.0 + rho) * psi)
    tasks = [(fmap, density, K_, radius, threshold, inner_samples, seed, b, start, stop)
             for b, start, stop in _plan(outer_samples, 256)]
    parts = run_blocks(_f_k_block, tasks, workers)
    est = _bernoulli("F", sum(p[0] for p in parts), outer_samples,
                     {"k": k, "psi": psi, "rho": rho, "K": K_, "radius": radius, "threshold": threshold})
    est.indeterminate = int(sum(p[1] for p in parts))
    return est


# -- measure regularity -------------------------------------------------------

def _quantile_line(x, y, tau: float):
    """(slope, intercept) minimizing the check loss at quantile tau."""
    n = len(x)
    # variables: a, b (free), u+ (n), u- (n);  y - a - b x = u+ - u-
    c = np.concatenate([[0.0, 0.0], np.full(n, tau), np.full(n, 1.0 - tau)])
    A = np.hstack([np.ones((n, 1)), x[:, None], np.eye(n), -np.eye(n)])
    bounds = [(None, None), (None, None)] + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A, b_eq=y, bounds=bounds, method="highs")
    if not res.success:
        raise InsufficientDataError(f"quantile regression failed: {res.message}")
    return float(res.x[1]), float(res.x[0])


@dataclass
class IntervalMasses:
    lo: np.ndarray
    length: np.ndarray
    mass: np.ndarray
    count: np.ndarray
    sample_size: int


def interval_masses(fmap: MapSpec, samples, intervals: int, seed: int, anchor: str = "random",
                    lengths=(1e-6, 1e-1)) -> IntervalMasses:
    """Empirical mu(I) for random intervals with log-uniform lengths.

    ``anchor="endpoints"`` attaches each interval to a domain endpoint
    instead of placing it uniformly.
    """
    if anchor not in ("random", "endpoints"):
        raise ValueError(f"unknown anchor {anchor!r}")
    pts = np.sort(np.asarray(samples, dtype=float))
    a, b = fmap.domain
    g = rng(seed_path(seed, STREAM_INTERVALS))
    ell = np.exp(g.uniform(np.log(lengths[0]), np.log(lengths[1]), intervals)) * (b - a)
    if anchor == "random":
        lo = a + (b - a - ell) * g.random(intervals)
    else:
        lo = np.where(g.random(intervals) < 0.5, a, b - ell)
    counts = np.searchsorted(pts, lo + ell, side="right") - np.searchsorted(pts, lo, side="left")
    return IntervalMasses(lo, ell, counts / len(pts), counts, len(pts))


def singularity_exponent(fmap: MapSpec, mu_samples: int, intervals: int, seed: int,
                         anchor: str = "random", lengths=(1e-6, 1e-1), min_count: int = 400,
                         quantile: float = 0.99, samples=None):
    """(theta_hat, C_hat) from the upper envelope of log mu(I) against log |I|.

    mu(I) is the fraction of ``mu_samples`` orbit points inside I.  Intervals
    with fewer than ``min_count`` points are dropped, which removes the
    counting noise that would otherwise flatten the envelope at small
    lengths.
    """
    if intervals < 100:
        raise ValueError("intervals must be >= 100")
    if samples is None:
        samples = orbit_samples(fmap, mu_samples, seed_path(seed, STREAM_SAMPLES))
    im = interval_masses(fmap, samples, intervals, seed, anchor, lengths)
    keep = im.count >= max(min_count, 1)
    if keep.sum() < 10:
        raise InsufficientDataError(f"only {int(keep.sum())} intervals carry enough mass")
    slope, intercept = _quantile_line(np.log(im.length[keep]), np.log(im.mass[keep]), quantile)
    return slope, math.exp(intercept)


# -- correlations -------------------------------------------------------------

@dataclass
class CorrelationConfig:
    observable_1: Callable
    observable_2: Callable
    lags: Sequence[int]
    samples: int = 10**6
    holder_exponent: float = 1.0
    mollifier_eta: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.holder_exponent <= 1.0:
            raise ValueError("holder_exponent must lie in (0, 1]")
        if self.mollifier_eta <= 0:
            raise ValueError("mollifier_eta must be positive")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        self.lags = [int(n) for n in self.lags]
        if any(n < 0 for n in self.lags):
            raise ValueError("lags must be nonnegative")


def covariance_estimate(a, b):
    """|sample covariance| with a 3 sigma half-width from the centered product.

    Returns (alpha_hat, half_width).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    prod = (a - a.mean()) * (b - b.mean())
    return abs(float(prod.mean())), 3.0 * float(prod.std(ddof=1)) / math.sqrt(len(a))


def _moments(x, y):
    """Sufficient sums for the covariance and its centered-product variance."""
    return np.array([len(x), x.sum(), y.sum(), (x * y).sum(), (x * x).sum(), (y * y).sum(),
                     (x * x * y).sum(), (x * y * y).sum(), (x * x * y * y).sum()])


def _alpha_from_moments(m):
    """Covariance and 3 sigma half-width from merged moment sums."""
    n, sx, sy, sxy, sxx, syy, sxxy, sxyy, sxxyy = m
    mx, my = sx / n, sy / n
    cov = sxy / n - mx * my
    # E[((x - mx)(y - my))^2] expanded in raw moments
    e2 = (sxxyy - 2 * my * sxxy - 2 * mx * sxyy + my * my * sxx + mx * mx * syy
          + 4 * mx * my * sxy) / n - 3 * mx * mx * my * my
    var = max(e2 - cov * cov, 0.0) * n / (n - 1)
    return abs(cov), 3.0 * math.sqrt(var / n)


def _correlation_block(fmap, g1, g2, lags, seed, b, start, stop, burn_in):
    rows = stop - start
    s = seed_path(seed, STREAM_SAMPLES, b)
    js = np.array(sorted(set([0] + list(lags))), dtype=np.int64)
    if fmap.is_dyadic:
        vals = _to_unit(K.dyadic_iterates(_dyadic_block(rows, int(js[-1]) + 64, s), js, fmap.family == "tent"))
    else:
        vals = K.float_iterates(fmap.code, fmap.kernel_params, _float_block(fmap, rows, s, burn_in), js)
    col = {int(j): c for c, j in enumerate(js)}
    x = np.asarray(g1(vals[:, 0]), dtype=float)
    return [_moments(x, np.asarray(g2(vals[:, col[n]]), dtype=float)) for n in lags]


def correlation_alpha(fmap: MapSpec, cfg: CorrelationConfig, seed: int, workers: int = 1,
                      burn_in: int = DEFAULT_SAMPLE_BURN_IN):
    """[(n, alpha_hat, half_width)] with alpha(n) = |cov_mu(g1, g2 o f^n)|.

    The per-block moment sums merge additively, so the result does not depend
    on how the blocks are distributed.
    """
    tasks = [(fmap, cfg.observable_1, cfg.observable_2, cfg.lags, seed, b, start, stop, burn_in)
             for b, start, stop in _plan(cfg.samples, _rows_per_block(max(cfg.lags, default=0) + 64))]
    parts = run_blocks(_correlation_block, tasks, workers)
    out = []
    for i, n in enumerate(cfg.lags):
        alpha, hw = _alpha_from_moments(sum(p[i] for p in parts))
        out.append((n, alpha, hw))
    return out


# -- mollifier ----------------------------------------------------------------

@dataclass(frozen=True)
class Mollifier:
    """Trapezoid below the indicator of [lo, hi] with ramps of width ``ramp``."""

    lo: float
    hi: float
    ramp: float

    @property
    def lipschitz(self) -> float:
        return 1.0 / self.ramp

    @property
    def deficit(self) -> float:
        """Integral of 1_I - phi: two triangles of area ramp / 2."""
        return self.ramp

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        up = (x - self.lo) / self.ramp
        down = (self.hi - x) / self.ramp
        return np.clip(np.minimum(up, down), 0.0, 1.0)


def mollify_indicator(interval, eta: float) -> Mollifier:
    """Lipschitz minorant of 1_I with ramps of width |I|^(1+eta)."""
    lo, hi = float(interval[0]), float(interval[1])
    length = hi - lo
    if length <= 0:
        raise ValueError("interval must have positive length")
    if eta <= 0:
        raise ValueError("eta must be positive")
    ramp = length ** (1.0 + eta)
    if ramp >= length / 2:
        raise DegenerateError(f"ramp width {ramp!r} is at least half of |I| = {length!r}")
    return Mollifier(lo, hi, ramp)
