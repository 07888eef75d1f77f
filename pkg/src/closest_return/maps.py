"""The interval-map zoo, orbit evaluation, and the exact dyadic bit engine."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
from scipy import integrate, optimize

from . import _kernels as K
from .errors import BreakPointError, BufferExhaustedError, DomainError
from .seeding import rng, seed_path

FAMILIES = ("doubling", "tent", "logistic", "pomeau_manneville", "piecewise_linear")
_CODES = {name: i for i, name in enumerate(FAMILIES)}
DYADIC = ("doubling", "tent")

BREAK_TOL = 1e-13
_GRID = 10_001


class Lap(NamedTuple):
    """A maximal interval on which the map is continuous and strictly monotone."""

    lo: float
    hi: float
    increasing: bool


def _uniform_density(x):
    return np.ones_like(np.asarray(x, dtype=float))


def _uniform_cdf(x):
    return np.asarray(x, dtype=float)


def _logistic4_density(x):
    x = np.asarray(x, dtype=float)
    return 1.0 / (np.pi * np.sqrt(x * (1.0 - x)))


def _logistic4_cdf(x):
    return 2.0 / np.pi * np.arcsin(np.sqrt(np.clip(x, 0.0, 1.0)))


def _pm_cut(gamma):
    return optimize.brentq(lambda c: c + c ** (1.0 + gamma) - 1.0, 0.0, 1.0, xtol=1e-17, rtol=1e-15)


@dataclass(frozen=True)
class MapSpec:
    """An interval map f: [a, b] -> [a, b].

    Build instances with the family constructors (:func:`doubling`,
    :func:`logistic`, ...) rather than directly; they fill in the derived
    fields.  Construction checks that f maps a dense grid into the domain,
    that ``deriv_bound`` dominates |f'| on the grid, and that the exact
    density (if any) integrates to one.
    """

    family: str
    params: tuple = ()
    domain: tuple = (0.0, 1.0)
    deriv_bound: float = 0.0
    smoothness: str = "smooth"
    exact_density: Optional[Callable] = field(default=None, compare=False, repr=False)
    exact_cdf: Optional[Callable] = field(default=None, compare=False, repr=False)
    breaks: tuple = ()  # points where f or f' is discontinuous
    turning: tuple = ()  # smooth critical points separating monotone laps

    def __post_init__(self):
        if self.family not in _CODES:
            raise ValueError(f"unknown map family {self.family!r}")
        a, b = self.domain
        if not a < b:
            raise ValueError("domain must satisfy a < b")
        xs = np.linspace(a, b, _GRID)
        ys = np.array([K.step(self.code, self.kernel_params, x) for x in xs])
        if ys.min() < a - 1e-12 or ys.max() > b + 1e-12:
            raise ValueError(f"{self.family} does not map {self.domain} into itself")
        interior = xs[np.all(np.abs(xs[:, None] - np.asarray(self.breaks + (np.inf,))[None, :]) > 1e-9, axis=1)]
        slopes = np.abs([self._derivative(x) for x in interior])
        if slopes.max() > self.deriv_bound + 1e-9:
            raise ValueError(f"deriv_bound {self.deriv_bound} < max |f'| = {slopes.max()}")
        if self.exact_density is not None:
            total, _ = integrate.quad(lambda x: float(self.exact_density(x)), a, b, limit=200)
            if abs(total - 1.0) > 1e-6:
                raise ValueError(f"exact density integrates to {total}, not 1")

    @property
    def code(self) -> int:
        return _CODES[self.family]

    @property
    def kernel_params(self) -> np.ndarray:
        return np.asarray(self.params, dtype=np.float64)

    @property
    def is_dyadic(self) -> bool:
        return self.family in DYADIC

    @property
    def length(self) -> float:
        return self.domain[1] - self.domain[0]

    # -- laps -----------------------------------------------------------
    @property
    def laps(self) -> tuple:
        a, b = self.domain
        edges = (a,) + tuple(sorted(self.breaks + self.turning)) + (b,)
        out = []
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid = 0.5 * (lo + hi)
            out.append(Lap(lo, hi, self._derivative(mid) > 0))
        return tuple(out)

    def lap_forward(self, i: int, x: float) -> float:
        """f restricted to lap ``i``, extended continuously to its endpoints."""
        fam, p = self.family, self.params
        if fam == "doubling":
            return 2.0 * x - i
        if fam == "tent":
            return 2.0 * x if i == 0 else 2.0 - 2.0 * x
        if fam == "logistic":
            return p[0] * x * (1.0 - x)
        if fam == "pomeau_manneville":
            return x + x ** (1.0 + p[0]) - i
        lo, hi, yl, yr = self._piece(i)
        return yl + (x - lo) * (yr - yl) / (hi - lo)

    def lap_inverse(self, i: int, y: float) -> float:
        """Inverse of :meth:`lap_forward`; ``y`` must lie in the lap's image."""
        fam, p = self.family, self.params
        if fam == "doubling":
            return 0.5 * (y + i)
        if fam == "tent":
            return 0.5 * y if i == 0 else 1.0 - 0.5 * y
        if fam == "logistic":
            t = min(max(4.0 * y / p[0], 0.0), 1.0)
            root = math.sqrt(1.0 - t)
            return t / (2.0 * (1.0 + root)) if i == 0 else 0.5 * (1.0 + root)
        if fam == "pomeau_manneville":
            return _pm_inverse(p[0], y + i, self.breaks[0] if i == 0 else 1.0)
        lo, hi, yl, yr = self._piece(i)
        return lo + (y - yl) * (hi - lo) / (yr - yl)

    def _piece(self, i):
        m = int(self.params[0])
        return (self.params[1 + i], self.params[2 + i],
                self.params[2 + m + 2 * i], self.params[3 + m + 2 * i])

    def _derivative(self, x: float) -> float:
        fam, p = self.family, self.params
        if fam == "doubling":
            return 2.0
        if fam == "tent":
            return 2.0 if x < 0.5 else -2.0
        if fam == "logistic":
            return p[0] * (1.0 - 2.0 * x)
        if fam == "pomeau_manneville":
            return 1.0 + (1.0 + p[0]) * x ** p[0]
        m = int(p[0])
        i = int(np.searchsorted(np.asarray(p[2:1 + m]), x, side="right"))
        lo, hi, yl, yr = self._piece(i)
        return (yr - yl) / (hi - lo)


def _pm_inverse(gamma, target, start):
    # g(x) = x + x^(1+gamma) is convex increasing; Newton from above is monotone.
    x = start
    for _ in range(100):
        g = x + x ** (1.0 + gamma) - target
        dx = g / (1.0 + (1.0 + gamma) * x**gamma)
        x -= dx
        if abs(dx) <= 1e-17 + 1e-16 * x:
            break
    return max(x, 0.0)


# -- constructors -------------------------------------------------------------

def doubling() -> MapSpec:
    return MapSpec("doubling", (), (0.0, 1.0), 2.0, "piecewise-linear",
                   _uniform_density, _uniform_cdf, (0.5,))


def tent() -> MapSpec:
    return MapSpec("tent", (), (0.0, 1.0), 2.0, "piecewise-linear",
                   _uniform_density, _uniform_cdf, (0.5,))


def logistic(a: float = 4.0) -> MapSpec:
    if not 0.0 < a <= 4.0:
        raise ValueError("logistic parameter must lie in (0, 4]")
    dens, cdf = (_logistic4_density, _logistic4_cdf) if a == 4.0 else (None, None)
    return MapSpec("logistic", (float(a),), (0.0, 1.0), float(a), "smooth", dens, cdf, (), (0.5,))


def pomeau_manneville(gamma: float = 0.5) -> MapSpec:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    return MapSpec("pomeau_manneville", (float(gamma),), (0.0, 1.0), 2.0 + gamma, "smooth",
                   None, None, (_pm_cut(gamma),))


def piecewise_linear(breaks: Sequence[float], left_values: Sequence[float],
                     right_values: Sequence[float]) -> MapSpec:
    """Map that is affine on each [breaks[i], breaks[i+1]] from left_values[i] to right_values[i]."""
    breaks = [float(b) for b in breaks]
    m = len(breaks) - 1
    if m < 1 or len(left_values) != m or len(right_values) != m:
        raise ValueError("need len(breaks) - 1 == len(left_values) == len(right_values) >= 1")
    if any(b1 <= b0 for b0, b1 in zip(breaks, breaks[1:])):
        raise ValueError("breaks must be strictly increasing")
    vals = []
    for yl, yr in zip(left_values, right_values):
        if yl == yr:
            raise ValueError("constant pieces are not allowed")
        vals += [float(yl), float(yr)]
    slope = max(abs(r - l) / (b1 - b0) for l, r, b0, b1 in zip(left_values, right_values, breaks, breaks[1:]))
    params = (float(m),) + tuple(breaks) + tuple(vals)
    return MapSpec("piecewise_linear", params, (breaks[0], breaks[-1]), slope, "piecewise-linear",
                   None, None, tuple(breaks[1:-1]))


def make_map(family: str, params: Sequence[float] = ()) -> MapSpec:
    """Build a zoo map from a family name and parameter list (config entry point)."""
    params = list(params)
    if family == "doubling":
        return doubling()
    if family == "tent":
        return tent()
    if family == "logistic":
        return logistic(*params[:1])
    if family == "pomeau_manneville":
        return pomeau_manneville(*params[:1])
    if family == "piecewise_linear":
        m = (len(params) - 1) // 3
        return piecewise_linear(params[:m + 1], params[m + 1::2], params[m + 2::2])
    raise ValueError(f"unknown map family {family!r}")


def zoo() -> dict:
    return {"doubling": doubling(), "tent": tent(), "logistic": logistic(4.0),
            "pomeau_manneville": pomeau_manneville(0.5)}


# -- evaluation ---------------------------------------------------------------

def _check_domain(fmap: MapSpec, x: float):
    a, b = fmap.domain
    if not a <= x <= b:
        raise DomainError(f"x = {x!r} outside {fmap.domain}")


def eval_step(fmap: MapSpec, x: float) -> float:
    _check_domain(fmap, x)
    return float(K.step(fmap.code, fmap.kernel_params, float(x)))


def eval_derivative(fmap: MapSpec, x: float) -> float:
    _check_domain(fmap, x)
    for c in fmap.breaks:
        if abs(x - c) <= BREAK_TOL:
            raise BreakPointError(f"{fmap.family} is not differentiable at {c!r}")
    return float(fmap._derivative(float(x)))


def iterate(fmap: MapSpec, x: float, n: int) -> np.ndarray:
    """Floating-point orbit x, f(x), ..., f^n(x)."""
    _check_domain(fmap, x)
    return K.orbit(fmap.code, fmap.kernel_params, float(x), int(n))


# -- exact dyadic engine --------------------------------------------------------

def _pack(bits) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.uint8)
    nwords = len(bits) // 64 + 2
    padded = np.zeros(nwords * 64, dtype=np.uint8)
    padded[:len(bits)] = bits
    return np.packbits(padded).view(">u8").astype(np.uint64)


def dyadic_words(nbits: int, generator: np.random.Generator) -> np.ndarray:
    """Random packed buffer with room for 64-bit reads at every offset < nbits."""
    return generator.integers(0, 2**64, size=nbits // 64 + 2, dtype=np.uint64, endpoint=False)


def to_fixed64(x: float) -> np.uint64:
    """Fixed-point representation of x in [0, 1] with 64 fractional bits."""
    if x >= 1.0:
        return np.uint64(2**64 - 1)
    return np.uint64(int(x * 2.0**64))


def from_fixed64(v) -> float:
    """v * 2^-64 truncated to 53 significant bits (never rounds up to 1)."""
    n = int(v)
    drop = max(n.bit_length() - 53, 0)
    return float(n >> drop << drop) * 2.0**-64


@dataclass(frozen=True)
class ExactDyadicState:
    """A binary expansion x = sum_i bits[cursor + i] 2^-(i+1) held exactly.

    The doubling map is a shift of this buffer, so ``f^j(x)`` is read off at
    offset ``cursor + j`` without touching the bits.
    """

    words: np.ndarray = field(repr=False)
    cursor: int = 0
    nbits: int = 0

    @classmethod
    def from_bits(cls, bits) -> "ExactDyadicState":
        return cls(_pack(bits), 0, len(bits))

    @classmethod
    def random(cls, nbits: int, seed: int) -> "ExactDyadicState":
        return cls(dyadic_words(nbits, rng(seed)), 0, nbits)

    @classmethod
    def from_float(cls, x: float, nbits: int, seed: Optional[int] = None) -> "ExactDyadicState":
        """First 64 bits from ``x``; the tail is random when ``seed`` is given, zero otherwise."""
        if not 0.0 <= x < 1.0:
            raise DomainError("dyadic states represent points of [0, 1)")
        words = dyadic_words(nbits, rng(seed)) if seed is not None else np.zeros(nbits // 64 + 2, np.uint64)
        words[0] = to_fixed64(x)
        return cls(words, 0, nbits)

    @property
    def remaining(self) -> int:
        return self.nbits - self.cursor

    def advance(self, j: int) -> "ExactDyadicState":
        return replace(self, cursor=self.cursor + j)

    def fixed64(self, j: int = 0, family: str = "doubling") -> np.uint64:
        if j < 0 or self.cursor + j + 64 > self.nbits:
            raise BufferExhaustedError(
                f"iterate {j} needs {self.cursor + j + 64} bits, state holds {self.nbits}")
        return np.uint64(K.dyadic_value(self.words, self.cursor, j, family == "tent"))

    def value(self) -> float:
        return from_fixed64(self.fixed64(0))


def exact_dyadic_orbit(state: ExactDyadicState, j: int, family: str = "doubling") -> float:
    """f^j(x) for the doubling (default) or tent map, read from 64 bits at offset cursor + j."""
    if family not in DYADIC:
        raise ValueError("exact orbits exist only for the doubling and tent maps")
    return from_fixed64(state.fixed64(j, family))


# -- sampling -----------------------------------------------------------------

DEFAULT_SAMPLE_BURN_IN = 1000
SAMPLE_BLOCK = 1 << 16


def sample_point(fmap: MapSpec, rng_seed: int, mode: str = "invariant",
                 burn_in: int = DEFAULT_SAMPLE_BURN_IN) -> float:
    """One typical point: uniform (``lebesgue``) or the end of a burn-in orbit (``invariant``)."""
    g = rng(rng_seed)
    a, b = fmap.domain
    if mode == "lebesgue":
        return a + (b - a) * g.random()
    if mode != "invariant":
        raise ValueError(f"unknown sampling mode {mode!r}")
    if fmap.is_dyadic:
        state = ExactDyadicState.random(burn_in + 64, rng_seed)
        return exact_dyadic_orbit(state, burn_in, fmap.family)
    x0 = a + (b - a) * g.random()
    return float(K.burn(fmap.code, fmap.kernel_params, np.array([x0]), burn_in)[0])


def invariant_samples(fmap: MapSpec, count: int, seed: int,
                      burn_in: int = DEFAULT_SAMPLE_BURN_IN) -> np.ndarray:
    """``count`` independent approximately mu-distributed points.

    Work is cut into fixed blocks with their own derived seeds, so the result
    does not depend on how the caller shards it.
    """
    out = np.empty(count)
    a, b = fmap.domain
    for blk, start in enumerate(range(0, count, SAMPLE_BLOCK)):
        stop = min(start + SAMPLE_BLOCK, count)
        g = rng(seed_path(seed, blk))
        if fmap.is_dyadic:
            # shifting a random buffer by burn_in discards bits that never reach
            # the 64-bit window, so the invariant draw is a fresh random window
            w = g.integers(0, 2**64, size=stop - start, dtype=np.uint64, endpoint=False)
            if fmap.family == "tent":
                flip = g.integers(0, 2, size=stop - start, dtype=np.uint64)
                w = np.where(flip == 1, ~w, w)
            out[start:stop] = (w >> np.uint64(11)).astype(np.float64) * 2.0**-53
        else:
            x0 = a + (b - a) * g.random(stop - start)
            out[start:stop] = K.burn(fmap.code, fmap.kernel_params, x0, burn_in)
    return out


def orbit_samples(fmap: MapSpec, count: int, seed: int, per_orbit: int = 1000,
                  burn_in: int = DEFAULT_SAMPLE_BURN_IN) -> np.ndarray:
    """Approximately mu-distributed points gathered along several independent orbits."""
    norbits = -(-count // per_orbit)
    starts = invariant_samples(fmap, norbits, seed, burn_in)
    out = np.empty(norbits * per_orbit)
    for i, x0 in enumerate(starts):
        if fmap.is_dyadic:
            words = dyadic_words(per_orbit + 64, rng(seed_path(seed, 1 << 32, i)))
            vals = K.dyadic_distances(words, 0, np.uint64(0), per_orbit - 1, fmap.family == "tent")
            out[i * per_orbit:(i + 1) * per_orbit] = (vals >> np.uint64(11)).astype(np.float64) * 2.0**-53
        else:
            out[i * per_orbit:(i + 1) * per_orbit] = K.orbit(fmap.code, fmap.kernel_params, x0, per_orbit - 1)
    return out[:count]


def exact_density_at(fmap: MapSpec, x) -> np.ndarray:
    if fmap.exact_density is None:
        raise ValueError(f"{fmap.family} has no closed-form invariant density")
    return fmap.exact_density(x)
