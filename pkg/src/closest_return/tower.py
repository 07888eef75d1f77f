"""First-return Young towers over a base interval, and numerical checks of
the Markov, contraction and distortion hypotheses."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import reduce
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels as K
from ._io import write_csv
from .density import DensityEstimate, _normalized
from .errors import DegenerateError, EmptyTowerError, GapError, InsufficientDataError
from .fitting import fit_decay
from .maps import MapSpec, orbit_samples
from .seeding import rng

ENDPOINT_TOL = 1e-12


class Branch(NamedTuple):
    left: float
    right: float
    R: int
    full: bool  # f^R maps the branch onto the whole base
    chain: tuple = ()  # laps visited by the branch before returning

    @property
    def length(self) -> float:
        return self.right - self.left


@dataclass(frozen=True)
class TowerPartition:
    base: tuple
    branches: tuple
    censored_mass: float
    r_max: int
    beta: Optional[float] = None
    C: Optional[float] = None
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def base_length(self) -> float:
        return self.base[1] - self.base[0]

    @property
    def coverage(self) -> float:
        return sum(b.length for b in self.branches) / self.base_length

    @property
    def gcd(self) -> int:
        return reduce(math.gcd, (b.R for b in self.branches), 0)

    @property
    def is_markov(self) -> bool:
        return all(b.full for b in self.branches)

    @property
    def lefts(self) -> np.ndarray:
        return np.array([b.left for b in self.branches])

    def with_regularity(self, beta: float, C: float) -> "TowerPartition":
        return replace(self, beta=beta, C=C)

    def to_csv(self, path):
        write_csv(path, ("branch_left", "branch_right", "R"),
                  ((b.left, b.right, b.R) for b in self.branches))


class _Piece(NamedTuple):
    y_lo: float  # image of the piece under f^k
    y_hi: float
    x_at_lo: float  # point of the base mapped to y_lo
    x_at_hi: float
    chain: tuple  # laps visited so far


def _pullback(fmap, chain, y):
    for li in reversed(chain):
        y = fmap.lap_inverse(li, y)
    return y


def build_first_return_tower(fmap: MapSpec, base, R_max: int = 200, grid: int = 1000,
                             max_pieces: int = 100_000) -> TowerPartition:
    """First-return partition of ``base`` up to return time ``R_max``.

    The base is pushed forward lap by lap: every piece of the base whose
    image under f^k avoids the base is cut at lap boundaries and base
    endpoints, and cut points are pulled back through the visited inverse laps,
    so branch endpoints come out at the accuracy of the inverse branches rather
    than of a grid.  Pieces still travelling at ``R_max`` are censored.
    ``grid`` probe points are then spread over the branches to confirm
    monotonicity and the endpoint bijection (recorded in ``diagnostics``).
    """
    b0, b1 = float(base[0]), float(base[1])
    a, b = fmap.domain
    if not (a <= b0 < b1 <= b):
        raise ValueError(f"base {base} not inside domain {fmap.domain}")
    laps = fmap.laps
    active = [_Piece(b0, b1, b0, b1, ())]
    branches = []
    truncated = False
    for k in range(1, R_max + 1):
        nxt = []
        for pc in active:
            for li, lap in enumerate(laps):
                lo, hi = max(pc.y_lo, lap.lo), min(pc.y_hi, lap.hi)
                if not hi > lo:
                    continue
                x_lo = pc.x_at_lo if lo == pc.y_lo else _pullback(fmap, pc.chain, lo)
                x_hi = pc.x_at_hi if hi == pc.y_hi else _pullback(fmap, pc.chain, hi)
                f_lo = min(max(fmap.lap_forward(li, lo), a), b)
                f_hi = min(max(fmap.lap_forward(li, hi), a), b)
                if not lap.increasing:
                    f_lo, f_hi, x_lo, x_hi = f_hi, f_lo, x_hi, x_lo
                chain = pc.chain + (li,)

                def seg(u, v):
                    xu = x_lo if u == f_lo else _pullback(fmap, chain, u)
                    xv = x_hi if v == f_hi else _pullback(fmap, chain, v)
                    return xu, xv

                if f_lo < b0:
                    v = min(f_hi, b0)
                    xu, xv = seg(f_lo, v)
                    if xu != xv:
                        nxt.append(_Piece(f_lo, v, xu, xv, chain))
                in_lo, in_hi = max(f_lo, b0), min(f_hi, b1)
                if in_hi > in_lo:
                    xu, xv = seg(in_lo, in_hi)
                    if xu != xv:
                        full = in_lo <= b0 + ENDPOINT_TOL and in_hi >= b1 - ENDPOINT_TOL
                        branches.append(Branch(min(xu, xv), max(xu, xv), k, full, chain))
                if f_hi > b1:
                    u = max(f_lo, b1)
                    xu, xv = seg(u, f_hi)
                    if xu != xv:
                        nxt.append(_Piece(u, f_hi, xu, xv, chain))
        active = nxt
        if not active:
            break
        if len(active) > max_pieces:
            truncated = True
            break
    if not branches:
        raise EmptyTowerError(f"no return to {base} up to R = {R_max}")
    censored = sum(abs(p.x_at_hi - p.x_at_lo) for p in active)
    branches.sort(key=lambda br: br.left)
    tower = TowerPartition((b0, b1), tuple(branches), censored, R_max)
    tower.diagnostics.update(_probe(tower, fmap, grid), truncated=truncated,
                             active_at_cutoff=len(active))
    return tower


def _forward_chain(fmap, chain, x):
    for li in chain:
        x = fmap.lap_forward(li, x)
    return x


def _probe(tower: TowerPartition, fmap: MapSpec, grid: int) -> dict:
    """Check the endpoint bijection and monotonicity of f^R along each full branch.

    Iterates follow the branch's own lap chain, so endpoints sitting on a
    discontinuity use the one-sided limit from inside the branch.  Floating
    evaluation of f^R amplifies rounding by roughly |base| / |branch|, so only
    branches wider than ``1e-6 * |base|`` are probed.
    """
    full = [br for br in tower.branches if br.full]
    if not full:
        return {"endpoint_error": None, "monotone": None, "probed": 0}
    b0, b1 = tower.base
    err, monotone, probed = 0.0, True, 0
    wide = [br for br in full if br.length > 1e-6 * tower.base_length]
    per = max(grid // max(len(wide), 1), 3)
    for br in wide:
        ends = sorted(_forward_chain(fmap, br.chain, x) for x in (br.left, br.right))
        err = max(err, abs(ends[0] - b0), abs(ends[1] - b1))
        xs = np.linspace(br.left, br.right, per + 2)[1:-1]
        ys = np.array([_forward_chain(fmap, br.chain, x) for x in xs])
        dy = np.diff(ys)
        monotone &= bool(np.all(dy > 0) or np.all(dy < 0))
        probed += 1
    return {"endpoint_error": float(err), "monotone": monotone, "probed": probed}


@dataclass
class ReturnTail:
    values: np.ndarray  # values[k] = lambda(R > k), k = 0..k_max
    fit_kind: str
    fit_rate: float
    branch_R: np.ndarray
    branch_length: np.ndarray
    censored_mass: float
    base_length: float

    @property
    def k_max(self) -> int:
        return len(self.values) - 1

    @property
    def relative(self) -> np.ndarray:
        return self.values / self.base_length

    def to_csv(self, path):
        write_csv(path, ("k", "lambda_R_gt_k"), enumerate(self.values))


def return_tail(tower: TowerPartition, censored_mass: Optional[float] = None,
                fit_from: Optional[int] = None) -> ReturnTail:
    """Tail lambda(R > k) from branch lengths, with censored mass added throughout.

    The decay fit uses k >= ``fit_from`` (default: k_max // 20, at least 1) to
    keep the pre-asymptotic head out of the classification.  A tail that
    vanishes identically is classified exponential with rate -inf.
    """
    cm = tower.censored_mass if censored_mass is None else censored_mass
    R = np.array([b.R for b in tower.branches])
    L = np.array([b.length for b in tower.branches])
    k_max = tower.r_max
    ks = np.arange(k_max + 1)
    # lambda(R > k) = sum of lengths with R > k
    by_r = np.bincount(R, weights=L, minlength=k_max + 2)
    values = by_r[::-1].cumsum()[::-1][1:k_max + 2] + cm
    if cm == 0 and R.max() < k_max and np.all(values[R.max():] == 0):
        nz = np.flatnonzero(values > 0)
        if len(nz) < 4:
            return ReturnTail(values, "exponential", -math.inf, R, L, cm, tower.base_length)
    if len(np.unique(R)) < 4:
        raise InsufficientDataError("fewer than 4 distinct return times")
    start = max(1, k_max // 20) if fit_from is None else fit_from
    sel = ks >= start
    fit = fit_decay(np.column_stack([ks[sel], values[sel]]))
    return ReturnTail(values, fit.kind, fit.rate, R, L, cm, tower.base_length)


def tail_sum_check(tail: ReturnTail, slack: float = 1e-12) -> bool:
    """Check sum_{R_l > k} R_l lambda(L_l) against both tail bounds for k <= k_max / 2."""
    v = tail.values
    suffix = np.concatenate([v[::-1].cumsum()[::-1], [0.0]])  # suffix[q] = sum_{s >= q} v[s]
    R, L = tail.branch_R, tail.branch_length
    for k in range(tail.k_max // 2 + 1):
        lhs = float(np.sum(R[R > k] * L[R > k]))
        first = 2.0 * suffix[math.ceil(k / 2)]
        second = suffix[k] + k * v[k]
        if lhs > min(first, second) + slack:
            return False
    return True


# -- induced dynamics ---------------------------------------------------------

def branch_index(tower: TowerPartition, x: float) -> int:
    i = int(np.searchsorted(tower.lefts, x, side="right")) - 1
    if i < 0 or x > tower.branches[i].right + 1e-15:
        raise GapError(f"{x!r} lies in no branch of the tower")
    return i


def induced_step(tower: TowerPartition, fmap: MapSpec, x: float):
    """(f^R(x), branch index) for the branch containing x, clamped into the base."""
    i = branch_index(tower, x)
    y = K.orbit(fmap.code, fmap.kernel_params, x, tower.branches[i].R)[-1]
    b0, b1 = tower.base
    if y < b0 and y > b0 - 1e-9:
        y = b0
    if y > b1 and y < b1 + 1e-9:
        y = b1
    return y, i


def separation_time(tower: TowerPartition, fmap: MapSpec, x: float, y: float, cap: int = 64) -> int:
    """Smallest m >= 0 with F^m(x), F^m(y) in different branches (F the induced map), or cap."""
    for m in range(cap):
        ix, iy = branch_index(tower, x), branch_index(tower, y)
        if ix != iy:
            return m
        x, _ = induced_step(tower, fmap, x)
        y, _ = induced_step(tower, fmap, y)
    return cap


def _log_induced_derivative(tower, fmap, x):
    i = branch_index(tower, x)
    pts = K.orbit(fmap.code, fmap.kernel_params, x, tower.branches[i].R)[:-1]
    fp = np.abs([fmap._derivative(t) for t in pts])
    if np.any(fp < 1e-300):
        return None
    return float(np.log(fp).sum())


class RegularityReport(NamedTuple):
    beta_hat: float
    C_hat: float
    max_violation: float
    pairs_used: int
    resampled: int
    unseparated: int
    max_distortion: float


def check_regularity(tower: TowerPartition, fmap: MapSpec, pairs: int = 1000, seed: int = 0,
                     cap: int = 40, C_margin: float = 1.01) -> RegularityReport:
    """Fit contraction/distortion constants (beta, C) on random same-branch pairs.

    n counts induced-map steps.  For each pair with separation time s the
    contraction terms |F^n x - F^n y| (0 <= n <= s) and the distortion terms
    |sum_{i=k}^{n} log|F'(F^i x)| - log|F'(F^i y)|| (0 <= k <= n < s, both
    orbits still in a common branch) are collected.  C_hat is ``C_margin``
    times the largest beta-free term (contraction at n = s, distortion at
    n = s - 1); beta_hat is then the smallest beta making every term obey
    term <= C_hat beta^(s - n).
    """
    if pairs < 100:
        raise ValueError("pairs must be >= 100")
    g = rng(seed)
    lengths = np.array([b.length for b in tower.branches])
    probs = lengths / lengths.sum()
    terms = []  # (value, s - n)
    used = resampled = unseparated = 0
    base_level = 0.0
    max_dist = 0.0
    attempts = 0
    while used < pairs and attempts < 50 * pairs:
        attempts += 1
        br = tower.branches[g.choice(len(probs), p=probs)]
        x = br.left + g.random() * br.length
        delta = br.length * 10.0 ** (-12.0 * g.random())
        y = x + (delta if g.random() < 0.5 else -delta)
        if not br.left < y < br.right or x == y:
            continue
        s = separation_time(tower, fmap, x, y, cap)
        if s >= cap:
            unseparated += 1
            continue
        xs, ys, lx, ly = [x], [y], [], []
        ok = True
        for n in range(s + 1):
            if n < s:
                dx, dy = _log_induced_derivative(tower, fmap, xs[-1]), _log_induced_derivative(tower, fmap, ys[-1])
                if dx is None or dy is None:
                    ok = False
                    break
                lx.append(dx)
                ly.append(dy)
                xs.append(induced_step(tower, fmap, xs[-1])[0])
                ys.append(induced_step(tower, fmap, ys[-1])[0])
        if not ok:
            resampled += 1
            continue
        used += 1
        gaps = np.abs(np.array(xs) - np.array(ys))
        base_level = max(base_level, gaps[s])
        for n in range(s):
            terms.append((gaps[n], s - n))
        if s >= 1:
            diff = np.array(lx) - np.array(ly)
            for n in range(s):
                # max over k <= n of |sum_{i=k}^{n} diff_i|
                partial = np.abs(np.cumsum(diff[: n + 1][::-1]))
                dmax = float(partial.max())
                max_dist = max(max_dist, dmax)
                if n == s - 1:
                    base_level = max(base_level, dmax)
                else:
                    terms.append((dmax, s - n))
    if used == 0:
        raise InsufficientDataError("no usable pairs")
    C_hat = C_margin * base_level if base_level > 0 else C_margin * tower.base_length
    vals = np.array([t[0] for t in terms]) if terms else np.zeros(0)
    expo = np.array([t[1] for t in terms]) if terms else np.ones(0)
    beta = float(np.max((vals / C_hat) ** (1.0 / expo))) if len(vals) else 0.0
    beta = max(beta, 1e-12)
    beta = float(np.nextafter(beta, 2.0))
    viol = float(np.max(vals - C_hat * beta**expo)) if len(vals) else 0.0
    return RegularityReport(beta, C_hat, viol, used, resampled, unseparated, max_dist)


def reconstruct_measure(tower: TowerPartition, fmap: MapSpec, mu0: DensityEstimate, bins: int = 100,
                        point_steps: int = 5_000_000) -> DensityEstimate:
    """Spread an f^R-invariant measure on the base along branch orbits.

    For each branch l and 0 <= j < R_l the restriction of mu0 to the branch
    is pushed forward j steps on stratified quadrature points and binned; the
    total is divided by Z = sum_l R_l mu0(branch_l).  Branch l gets about
    ``point_steps * mu0(branch_l) / Z`` points, clamped to [8, 20 * bins],
    which spends the iteration budget where the mass is.
    """
    a, b = fmap.domain
    masses = np.array([float(mu0.cdf(br.right) - mu0.cdf(br.left)) for br in tower.branches])
    Rs = np.array([br.R for br in tower.branches])
    Z = float(np.sum(Rs * masses))
    if Z < 1e-12:
        raise DegenerateError(f"normalizer Z = {Z!r} is degenerate")
    cap = 20 * bins
    xs, ws, rs = [], [], []
    for br, mass in zip(tower.branches, masses):
        if mass <= 0:
            continue
        M = int(min(cap, max(8, round(point_steps * mass / Z))))
        pts = br.left + (np.arange(M) + 0.5) / M * br.length
        h = np.asarray(mu0(pts), dtype=float)
        if h.sum() <= 0:
            continue
        xs.append(pts)
        ws.append(h / h.sum() * mass)
        rs.append(np.full(M, br.R))
    x, w, r = np.concatenate(xs), np.concatenate(ws), np.concatenate(rs)
    acc = np.zeros(bins)
    for j in range(int(r.max())):
        alive = r > j
        if not alive.all():
            x, w, r = x[alive], w[alive], r[alive]
        idx = np.clip(((x - a) / (b - a) * bins).astype(np.int64), 0, bins - 1)
        acc += np.bincount(idx, weights=w, minlength=bins)
        x = K.burn(fmap.code, fmap.kernel_params, x, 1)
    edges = np.linspace(a, b, bins + 1)
    return DensityEstimate("tower", edges, acc / Z / np.diff(edges), {"Z": Z, "bins": bins})


def induced_birkhoff_density(tower: TowerPartition, fmap: MapSpec, orbit_length: int, bins: int = 100,
                             seed: int = 0, per_orbit: int = 100_000) -> DensityEstimate:
    """Histogram on the base of the f^R-invariant measure.

    The visits of an f-orbit to the base are exactly an orbit of the
    first-return map, so their histogram is a Birkhoff average for it.
    """
    lo, hi = tower.base
    pts = orbit_samples(fmap, orbit_length, seed, per_orbit=per_orbit)
    pts = pts[(pts >= lo) & (pts <= hi)]
    if pts.size == 0:
        raise DegenerateError("the orbit never visited the base")
    edges = np.linspace(lo, hi, bins + 1)
    counts, _ = np.histogram(pts, bins=edges)
    return _normalized("induced_birkhoff", edges, counts, {"visits": int(pts.size)})
