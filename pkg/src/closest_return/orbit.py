"""Closest-return series X_j = -log d(x, f^j y) and their running maxima."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

import numpy as np

from . import _kernels as K
from .maps import ExactDyadicState, MapSpec, _check_domain, from_fixed64, to_fixed64

X_MAX = 745.0  # -log of the smallest positive subnormal double, rounded up
_LOG2_64 = 64.0 * math.log(2.0)


@dataclass(frozen=True)
class ReturnMode:
    """Which reference point the orbit is compared against.

    ``fixed_reference`` compares f^j(y) with a fixed ``x_ref``; ``self_return``
    compares f^j(x) with the starting point x and always starts at j = 1.
    """

    kind: str = "self_return"
    x_ref: Optional[float] = None
    include_j0: bool = False

    def __post_init__(self):
        if self.kind not in ("fixed_reference", "self_return"):
            raise ValueError(f"unknown return mode {self.kind!r}")
        if self.kind == "self_return" and self.include_j0:
            raise ValueError("self_return never includes j = 0 (X_0 would be infinite)")

    @property
    def first_index(self) -> int:
        return 0 if self.include_j0 else 1


def fixed_reference(x_ref: Optional[float] = None, include_j0: bool = False) -> ReturnMode:
    return ReturnMode("fixed_reference", x_ref, include_j0)


def self_return() -> ReturnMode:
    return ReturnMode("self_return")


@dataclass
class ClosestReturnSeries:
    mode: ReturnMode
    x_ref: float
    n: int
    x_values: np.ndarray  # X_j for j = first_index..n
    z_values: np.ndarray  # Z_1..Z_n
    argmax_j: int
    hit_exact: bool


class NormalizedMaximum(NamedTuple):
    value: float
    flagged: bool


def neg_log_distance(d) -> np.ndarray:
    """-log d with exact coincidences clamped to X_MAX."""
    d = np.asarray(d, dtype=float)
    with np.errstate(divide="ignore"):
        x = -np.log(d)
    return np.minimum(x, X_MAX)


def neg_log_fixed64(diff) -> np.ndarray:
    """-log(diff * 2^-64) for 64-bit integer distances."""
    diff = np.asarray(diff, dtype=np.uint64)
    with np.errstate(divide="ignore"):
        x = _LOG2_64 - np.log(diff.astype(np.float64))
    return np.minimum(x, X_MAX)


def _distances(fmap: MapSpec, mode: ReturnMode, start, n: int):
    """Distances d_j for j = 0..n, either float or 64-bit integer, and x_ref."""
    if fmap.is_dyadic:
        if not isinstance(start, ExactDyadicState):
            if n > 52:
                raise ValueError("dyadic orbits longer than 52 steps need an ExactDyadicState start")
            start = ExactDyadicState.from_float(float(start), n + 64)
        start.fixed64(n, fmap.family)  # raises if the buffer is too short
        tent = fmap.family == "tent"
        if mode.kind == "self_return":
            ref = start.fixed64(0)
        else:
            _check_domain(fmap, mode.x_ref)
            ref = to_fixed64(mode.x_ref)
        d = K.dyadic_distances(start.words, start.cursor, ref, n, tent)
        return d, from_fixed64(ref), True
    y0 = start.value() if isinstance(start, ExactDyadicState) else float(start)
    _check_domain(fmap, y0)
    if mode.kind == "self_return":
        ref = y0
    else:
        _check_domain(fmap, mode.x_ref)
        ref = float(mode.x_ref)
    return K.float_distances(fmap.code, fmap.kernel_params, y0, ref, n), ref, False


def closest_return_series(fmap: MapSpec, mode: ReturnMode,
                          start: Union[float, ExactDyadicState], n: int) -> ClosestReturnSeries:
    """X_j = -log|x_ref - f^j(start)| (natural log) and Z_k = max of X_j up to k.

    Dyadic maps are iterated exactly; pass an :class:`ExactDyadicState` with at
    least n + 64 bits for orbits longer than 52 steps.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if mode.kind == "fixed_reference" and mode.x_ref is None:
        raise ValueError("fixed_reference mode needs x_ref")
    d, ref, exact = _distances(fmap, mode, start, n)
    x = neg_log_fixed64(d) if exact else neg_log_distance(d)
    j0 = mode.first_index
    x = x[j0:]
    running = np.maximum.accumulate(x)
    z = running if j0 == 1 else running[1:]
    hit = bool(np.any(d[j0:] == 0))
    return ClosestReturnSeries(mode, ref, n, x, z, int(np.argmax(x)) + j0, hit)


def normalized_maximum(series: ClosestReturnSeries) -> NormalizedMaximum:
    """Z_n - log n, flagged when an exact coincidence was clamped."""
    return NormalizedMaximum(float(series.z_values[-1]) - math.log(series.n), series.hit_exact)
