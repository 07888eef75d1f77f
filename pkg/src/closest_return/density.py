"""Invariant density estimates: Birkhoff histograms, Ulam's method, closed forms."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from ._io import write_csv
from .errors import ConvergenceError, DegenerateOrbitError
from .maps import MapSpec, dyadic_words
from .seeding import rng

DEFAULT_BURN_IN = 10_000
DEFAULT_SAMPLES_PER_CELL = 100


@dataclass
class DensityEstimate:
    """Piecewise-constant density on uniform bins (or a closed form for ``exact``)."""

    method: str
    edges: np.ndarray
    values: np.ndarray
    source_meta: dict = field(default_factory=dict)
    closed_form: Optional[Callable] = field(default=None, repr=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if len(self.edges) != len(self.values) + 1:
            raise ValueError("need len(edges) == len(values) + 1")
        if np.any(self.values < 0):
            raise ValueError("density values must be nonnegative")

    @property
    def bins(self) -> int:
        return len(self.values)

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    @property
    def masses(self) -> np.ndarray:
        return self.values * self.widths

    def total_mass(self) -> float:
        return float(self.masses.sum())

    def __call__(self, x):
        return eval_density(self, x)

    def cdf(self, x):
        """mu([edges[0], x]) of the piecewise-constant density."""
        x = np.clip(np.asarray(x, dtype=float), self.edges[0], self.edges[-1])
        cum = np.concatenate([[0.0], np.cumsum(self.masses)])
        i = np.clip(np.searchsorted(self.edges, x, side="right") - 1, 0, self.bins - 1)
        return cum[i] + self.values[i] * (x - self.edges[i])

    def to_csv(self, path):
        write_csv(path, ("bin_left", "bin_right", "density"),
                  zip(self.edges[:-1], self.edges[1:], self.values))


def _normalized(method, edges, weights, meta, closed_form=None) -> DensityEstimate:
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if total <= 0:
        raise DegenerateOrbitError("no mass to normalize")
    values = weights / total / np.diff(edges)
    return DensityEstimate(method, edges, values, meta, closed_form)


def histogram_from_samples(samples, bins: int, domain=(0.0, 1.0), method="birkhoff") -> DensityEstimate:
    """Normalized histogram of arbitrary samples (orbit points or i.i.d. draws)."""
    edges = np.linspace(domain[0], domain[1], bins + 1)
    counts, _ = np.histogram(np.clip(samples, domain[0], domain[1]), bins=edges)
    return _normalized(method, edges, counts, {"samples": int(len(samples))})


def birkhoff_histogram(fmap: MapSpec, orbit_length: int, burn_in: int = DEFAULT_BURN_IN,
                       bins: int = 100, seed: int = 0, x0: Optional[float] = None) -> DensityEstimate:
    """Histogram of one orbit of length ``orbit_length`` after ``burn_in`` steps.

    Dyadic maps use the exact bit engine.  Raises :class:`DegenerateOrbitError`
    when a floating-point orbit stalls on a fixed point.
    """
    if orbit_length < 10 * bins:
        raise ValueError("orbit_length must be at least 10 * bins")
    a, b = fmap.domain
    edges = np.linspace(a, b, bins + 1)
    g = rng(seed)
    if fmap.is_dyadic and x0 is None:
        words = dyadic_words(burn_in + orbit_length + 64, g)
        counts = K.dyadic_histogram(words, burn_in, orbit_length, bins, fmap.family == "tent")
    else:
        start = a + (b - a) * g.random() if x0 is None else float(x0)
        counts, stalled = K.float_histogram(fmap.code, fmap.kernel_params, start, burn_in,
                                            orbit_length, a, b, bins)
        if stalled > orbit_length // 2:
            raise DegenerateOrbitError(f"orbit from {start!r} is trapped ({stalled} stalled steps)")
    meta = {"orbit_length": orbit_length, "burn_in": burn_in, "seed": seed}
    return _normalized("birkhoff", edges, counts, meta)


@dataclass
class UlamOperator:
    m: int
    edges: np.ndarray
    matrix: np.ndarray  # row-stochastic, P[i, j] ~ lambda(cell_i and f^-1 cell_j) / lambda(cell_i)

    def push(self, v: np.ndarray) -> np.ndarray:
        return v @ self.matrix


def _ulam_sampled(fmap, m, samples_per_cell, seed):
    a, b = fmap.domain
    edges = np.linspace(a, b, m + 1)
    g = rng(seed)
    offsets = (np.arange(samples_per_cell) + g.random((m, samples_per_cell))) / samples_per_cell
    xs = edges[:-1, None] + offsets * np.diff(edges)[:, None]
    ys = K.burn(fmap.code, fmap.kernel_params, xs.ravel(), 1)
    cols = np.clip(((ys - a) / (b - a) * m).astype(np.int64), 0, m - 1)
    rows = np.repeat(np.arange(m), samples_per_cell)
    counts = np.bincount(rows * m + cols, minlength=m * m).reshape(m, m)
    return edges, counts / samples_per_cell


def _ulam_exact(fmap, m):
    """Transition masses from exact preimages of cells under each monotone lap."""
    a, b = fmap.domain
    edges = np.linspace(a, b, m + 1)
    P = np.zeros((m, m))
    for li, lap in enumerate(fmap.laps):
        i_lo = max(int(np.searchsorted(edges, lap.lo, side="right")) - 1, 0)
        i_hi = min(int(np.searchsorted(edges, lap.hi, side="left")), m)
        for i in range(i_lo, i_hi):
            lo, hi = max(edges[i], lap.lo), min(edges[i + 1], lap.hi)
            if hi <= lo:
                continue
            y0, y1 = sorted((fmap.lap_forward(li, lo), fmap.lap_forward(li, hi)))
            y0, y1 = max(y0, a), min(y1, b)
            j_lo = max(int(np.searchsorted(edges, y0, side="right")) - 1, 0)
            j_hi = min(int(np.searchsorted(edges, y1, side="left")), m)
            for j in range(j_lo, j_hi):
                c0, c1 = max(edges[j], y0), min(edges[j + 1], y1)
                if c1 > c0:
                    p0, p1 = fmap.lap_inverse(li, c0), fmap.lap_inverse(li, c1)
                    P[i, j] += abs(p1 - p0)
    P /= np.diff(edges)[:, None]
    return edges, P / P.sum(axis=1, keepdims=True)


def build_ulam_operator(fmap: MapSpec, m: int, samples_per_cell: int = DEFAULT_SAMPLES_PER_CELL,
                        seed: int = 0, method: str = "sampling") -> UlamOperator:
    """Ulam discretization on m uniform cells.

    ``sampling`` uses stratified jittered points in each cell; ``exact``
    integrates each cell's preimages through the map's monotone laps.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if method == "sampling":
        edges, P = _ulam_sampled(fmap, m, samples_per_cell, seed)
    elif method == "exact":
        edges, P = _ulam_exact(fmap, m)
    else:
        raise ValueError(f"unknown Ulam method {method!r}")
    return UlamOperator(m, edges, P)


def stationary_vector(op: UlamOperator, tol: float = 1e-12, max_iter: int = 100_000) -> np.ndarray:
    """Leading left fixed vector by power iteration from the uniform vector."""
    v = np.full(op.m, 1.0 / op.m)
    residual = np.inf
    for _ in range(max_iter):
        w = op.push(v)
        w /= w.sum()
        residual = np.abs(w - v).sum()
        v = w
        if residual < tol:
            return v
    raise ConvergenceError("Ulam power iteration did not converge", residual)


def ulam_density(fmap: MapSpec, m: int, samples_per_cell: int = DEFAULT_SAMPLES_PER_CELL,
                 seed: int = 0, method: str = "sampling") -> DensityEstimate:
    op = build_ulam_operator(fmap, m, samples_per_cell, seed, method)
    v = stationary_vector(op)
    meta = {"m": m, "samples_per_cell": samples_per_cell, "ulam_method": method, "seed": seed}
    return _normalized("ulam", op.edges, v, meta)


def exact_density_estimate(fmap: MapSpec, bins: int = 100) -> DensityEstimate:
    """Bin averages of the closed-form density; pointwise evaluation uses the closed form."""
    if fmap.exact_density is None or fmap.exact_cdf is None:
        raise ValueError(f"{fmap.family} has no closed-form invariant density")
    edges = np.linspace(fmap.domain[0], fmap.domain[1], bins + 1)
    masses = np.diff(fmap.exact_cdf(edges))
    return _normalized("exact", edges, masses, {"family": fmap.family}, fmap.exact_density)


def eval_density(est: DensityEstimate, x):
    """Pointwise h(x); piecewise-constant lookup unless a closed form is attached."""
    x = np.asarray(x, dtype=float)
    if est.closed_form is not None:
        return est.closed_form(x)
    i = np.clip(np.searchsorted(est.edges, x, side="right") - 1, 0, est.bins - 1)
    out = est.values[i]
    return float(out) if out.ndim == 0 else out


def l1_distance(p: DensityEstimate, q, window=None, points: int = 20_001) -> float:
    """L1 distance between two densities over ``window`` (defaults to p's support).

    ``q`` may be a DensityEstimate or any callable density.
    """
    lo, hi = window if window is not None else (p.edges[0], p.edges[-1])
    # midpoint rule on a fine grid; piecewise-constant inputs make this accurate
    xs = lo + (np.arange(points) + 0.5) * (hi - lo) / points
    return float(np.abs(eval_density(p, xs) - np.asarray(q(xs))).sum() * (hi - lo) / points)


def tail_exponent(est: DensityEstimate, upper_fraction: float = 0.2) -> float:
    """Slope kappa of lambda(h > t) ~ t^-kappa over the largest bin values.

    h lies in L^p for p < kappa, which is the diagnostic reported in place of
    certifying a specific p.  Returns inf for an essentially bounded histogram.
    """
    vals = np.sort(est.values)[::-1]
    k = max(int(len(vals) * upper_fraction), 4)
    top = vals[:k]
    if top[0] <= top[-1] * (1 + 1e-9):
        return float("inf")
    width = est.widths.mean()
    level_mass = np.arange(1, k + 1) * width
    slope = np.polyfit(np.log(top), np.log(level_mass), 1)[0]
    return float(-slope)
