"""Compiled inner loops for orbit iteration.

Map families are dispatched by an integer code so one compiled function
serves the whole zoo.  Dyadic orbits work on packed bit buffers: bit 0 of
the state is the most significant bit of ``words[0]``.
"""
import numba
import numpy as np

DOUBLING, TENT, LOGISTIC, POMEAU_MANNEVILLE, PIECEWISE_LINEAR = range(5)

_ALL_ONES = np.uint64(0xFFFFFFFFFFFFFFFF)
TWO_M64 = 2.0**-64


@numba.njit(cache=True)
def step(code, p, x):
    if code == DOUBLING:
        y = 2.0 * x
        return y - np.floor(y)
    if code == TENT:
        if x < 0.5:
            return 2.0 * x
        return 2.0 - 2.0 * x
    if code == LOGISTIC:
        return p[0] * x * (1.0 - x)
    if code == POMEAU_MANNEVILLE:
        y = x + x ** (1.0 + p[0])
        return y - np.floor(y)
    # piecewise linear: p = [npieces, breaks(npieces+1), (y_left, y_right) * npieces]
    m = int(p[0])
    i = 0
    while i < m - 1 and x >= p[2 + i]:
        i += 1
    lo = p[1 + i]
    hi = p[2 + i]
    yl = p[2 + m + 2 * i]
    yr = p[3 + m + 2 * i]
    return yl + (x - lo) * (yr - yl) / (hi - lo)


@numba.njit(cache=True)
def orbit(code, p, x0, n):
    out = np.empty(n + 1)
    x = x0
    out[0] = x
    for j in range(1, n + 1):
        x = step(code, p, x)
        out[j] = x
    return out


@numba.njit(cache=True)
def burn(code, p, xs, nsteps):
    out = xs.copy()
    for i in range(out.shape[0]):
        x = out[i]
        for _ in range(nsteps):
            x = step(code, p, x)
        out[i] = x
    return out


@numba.njit(cache=True)
def float_distances(code, p, y0, ref, n):
    """|ref - f^j(y0)| for j = 0..n."""
    out = np.empty(n + 1)
    y = y0
    out[0] = abs(ref - y)
    for j in range(1, n + 1):
        y = step(code, p, y)
        out[j] = abs(ref - y)
    return out


@numba.njit(cache=True)
def float_min_distance(code, p, y0, ref, j0, n):
    best = np.inf
    y = y0
    if j0 == 0:
        best = abs(ref - y)
    for j in range(1, n + 1):
        y = step(code, p, y)
        d = abs(ref - y)
        if d < best:
            best = d
    return best


@numba.njit(cache=True)
def float_histogram(code, p, x0, nburn, length, a, b, bins):
    """Histogram counts of an orbit segment, plus the number of stalled steps."""
    counts = np.zeros(bins, dtype=np.int64)
    x = x0
    for _ in range(nburn):
        x = step(code, p, x)
    width = b - a
    stalled = 0
    for _ in range(length):
        k = int((x - a) / width * bins)
        if k >= bins:
            k = bins - 1
        elif k < 0:
            k = 0
        counts[k] += 1
        y = step(code, p, x)
        if y == x:
            stalled += 1
        x = y
    return counts, stalled


@numba.njit(cache=True)
def window(words, j):
    """The 64 bits starting at bit offset j."""
    wi = j >> 6
    b = j & 63
    if b == 0:
        return words[wi]
    return (words[wi] << np.uint64(b)) | (words[wi + 1] >> np.uint64(64 - b))


@numba.njit(cache=True)
def bit(words, j):
    return (words[j >> 6] >> np.uint64(63 - (j & 63))) & np.uint64(1)


@numba.njit(cache=True)
def dyadic_value(words, offset, j, tent):
    """64-bit fixed-point value of f^j(x), x being the state read at ``offset``."""
    w = window(words, offset + j)
    if tent and j > 0 and bit(words, offset + j - 1) == 1:
        return w ^ _ALL_ONES
    return w


@numba.njit(cache=True)
def _absdiff(u, v):
    if u > v:
        return u - v
    return v - u


@numba.njit(cache=True)
def dyadic_min_distance(words, offset, ref, j0, n, tent):
    """Smallest |ref - f^j(x)| over j0 <= j <= n as a 64-bit integer."""
    best = _ALL_ONES
    for j in range(j0, n + 1):
        d = _absdiff(dyadic_value(words, offset, j, tent), ref)
        if d < best:
            best = d
    return best


@numba.njit(cache=True)
def dyadic_distances(words, offset, ref, n, tent):
    """|ref - f^j(x)| for j = 0..n as 64-bit integers."""
    out = np.empty(n + 1, dtype=np.uint64)
    for j in range(n + 1):
        out[j] = _absdiff(dyadic_value(words, offset, j, tent), ref)
    return out


@numba.njit(cache=True)
def dyadic_histogram(words, offset, length, bins, tent):
    counts = np.zeros(bins, dtype=np.int64)
    for j in range(length):
        v = dyadic_value(words, offset, j, tent) >> np.uint64(11)
        k = int(v * 2.0**-53 * bins)
        if k >= bins:
            k = bins - 1
        counts[k] += 1
    return counts


@numba.njit(cache=True)
def dyadic_iterates(words2d, js, tent):
    """Row-wise 64-bit values of f^j(x) for every j in ``js``."""
    rows = words2d.shape[0]
    out = np.empty((rows, js.shape[0]), dtype=np.uint64)
    for r in range(rows):
        for c in range(js.shape[0]):
            out[r, c] = dyadic_value(words2d[r], 0, js[c], tent)
    return out


@numba.njit(cache=True)
def dyadic_self_return(words2d, j_hi, thr, tent):
    """Row-wise: does some 1 <= j <= j_hi give |x - f^j(x)| <= thr (64-bit units)."""
    rows = words2d.shape[0]
    out = np.zeros(rows, dtype=np.bool_)
    for r in range(rows):
        w = words2d[r]
        x = dyadic_value(w, 0, 0, tent)
        for j in range(1, j_hi + 1):
            if _absdiff(dyadic_value(w, 0, j, tent), x) <= thr:
                out[r] = True
                break
    return out


@numba.njit(cache=True)
def float_self_return(code, p, xs, j_hi, thr):
    out = np.zeros(xs.shape[0], dtype=np.bool_)
    for r in range(xs.shape[0]):
        x0 = xs[r]
        x = x0
        for j in range(1, j_hi + 1):
            x = step(code, p, x)
            if abs(x - x0) <= thr:
                out[r] = True
                break
    return out


@numba.njit(cache=True)
def float_iterates(code, p, xs, js):
    """Row-wise f^j(x) for increasing ``js``."""
    out = np.empty((xs.shape[0], js.shape[0]))
    for r in range(xs.shape[0]):
        x = xs[r]
        j = 0
        for c in range(js.shape[0]):
            while j < js[c]:
                x = step(code, p, x)
                j += 1
            out[r, c] = x
    return out
