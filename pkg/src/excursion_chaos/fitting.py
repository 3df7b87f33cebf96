"""Power-law fitting on log-log axes and dyadic-block smoothing."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LogLogFit:
    slope: float
    intercept: float
    stderr: float
    r_squared: float
    residual_max: float
    n: int


def loglog_fit(x, y) -> LogLogFit:
    """Ordinary least squares of ``log y`` on ``log x``.

    ``r_squared`` is reported as 0 when ``log y`` has no spread at all
    (relative to machine precision), since nothing is explained then.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two matching points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - (slope * lx + intercept)
    ss_res = float(resid @ resid)
    centred = ly - ly.mean()
    ss_tot = float(centred @ centred)
    if np.ptp(ly) <= 1e-12 * max(1.0, float(np.max(np.abs(ly)))):
        r2 = 0.0
    else:
        r2 = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    n = lx.size
    sxx = float(((lx - lx.mean()) ** 2).sum())
    stderr = float(np.sqrt(ss_res / (n - 2) / sxx)) if n > 2 and sxx > 0 else 0.0
    return LogLogFit(
        slope=float(slope),
        intercept=float(intercept),
        stderr=stderr,
        r_squared=r2,
        residual_max=float(np.max(np.abs(resid))),
        n=n,
    )


def dyadic_block_means(orders, values, q_min: int = 1, q_max: int | None = None,
                       require_complete: bool = True):
    """Average ``values`` over geometric windows ``[2^k, 2^(k+1))``.

    Only blocks lying inside ``[q_min, q_max]`` are used. With
    ``require_complete`` a block must contain every integer order it spans.
    Returns ``(centres, means)`` where each centre is ``2^(k + 1/2)``.
    """
    orders = np.asarray(orders)
    values = np.asarray(values, dtype=float)
    if q_max is None:
        q_max = int(orders.max()) if orders.size else 0
    centres, means = [], []
    k = max(0, int(np.ceil(np.log2(max(q_min, 1)))))
    while 2 ** (k + 1) - 1 <= q_max:
        lo, hi = 2**k, 2 ** (k + 1)
        mask = (orders >= lo) & (orders < hi)
        count = int(mask.sum())
        if count and (not require_complete or count == hi - lo):
            centres.append(2 ** (k + 0.5))
            means.append(float(values[mask].mean()))
        k += 1
    return np.array(centres), np.array(means)
