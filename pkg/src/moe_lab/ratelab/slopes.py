from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from ..errors import FitError


class SlopeFit(NamedTuple):
    slope: float
    intercept: float
    r2: float


def fit_slope(points) -> SlopeFit:
    """Least-squares line through ``(log n, log err)``.

    Points with non-finite or non-positive error are dropped; at least three
    must remain.
    """
    pts = [(float(n), float(e)) for n, e in points if n > 0 and math.isfinite(e) and e > 0]
    if len(pts) < 3:
        raise FitError(f"need at least 3 positive points, got {len(pts)}")
    lx = np.log([p[0] for p in pts])
    ly = np.log([p[1] for p in pts])
    mx, my = lx.mean(), ly.mean()
    cx, cy = lx - mx, ly - my
    sxx = float(cx @ cx)
    if sxx == 0:
        raise FitError("all sample sizes are identical")
    slope = float(cx @ cy) / sxx
    intercept = my - slope * mx
    resid = cy - slope * cx
    syy = float(cy @ cy)
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return SlopeFit(slope, float(intercept), r2)
