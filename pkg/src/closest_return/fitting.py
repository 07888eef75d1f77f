"""Exponential-versus-polynomial decay classification."""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import InsufficientDataError


class DecayFit(NamedTuple):
    kind: str  # "exponential" or "polynomial"
    rate: float  # slope of log v against k (exponential) or log k (polynomial)
    intercept: float
    residual_exponential: float
    residual_polynomial: float


def _lstsq(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sum((A @ coef - y) ** 2))
    return coef[0], coef[1], resid


def fit_decay(points) -> DecayFit:
    """Least squares of log v on k and on log k; the smaller residual wins.

    Nonpositive values are dropped.  At least four positive points are needed.
    """
    pts = np.asarray(list(points), dtype=float).reshape(-1, 2)
    pts = pts[(pts[:, 1] > 0) & (pts[:, 0] > 0)]
    if len(pts) < 4:
        raise InsufficientDataError(f"need >= 4 positive points, got {len(pts)}")
    k, logv = pts[:, 0], np.log(pts[:, 1])
    se, ie, re = _lstsq(k, logv)
    sp, ip, rp = _lstsq(np.log(k), logv)
    if re <= rp:
        return DecayFit("exponential", float(se), float(ie), re, rp)
    return DecayFit("polynomial", float(sp), float(ip), re, rp)
