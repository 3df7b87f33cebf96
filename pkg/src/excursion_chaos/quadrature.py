"""Adaptive Gauss-Legendre panel quadrature for vector-valued integrands.

All panels of one refinement sweep are evaluated in a single call to the
integrand, so ``f`` must accept a 1-D array of nodes and return an array
whose last axis matches it. Leading axes (e.g. one per Hermite order or per
moment order) are integrated simultaneously, each against its own tolerance.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import AccuracyError

_EPS = np.finfo(float).eps


@lru_cache(maxsize=None)
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1]."""
    return np.polynomial.legendre.leggauss(n)


def integrate(
    f,
    breakpoints,
    *,
    abs_tol: float = 1e-13,
    rel_tol: float = 1e-10,
    order: int = 16,
    max_panels: int = 50_000,
):
    """Integrate ``f`` over ``[breakpoints[0], breakpoints[-1]]``.

    Each panel is integrated with an ``order``-point and a ``2*order``-point
    rule; their difference is the panel error estimate. Panels whose error
    exceeds their length-proportional share of the target are bisected.

    Returns ``(value, error)`` with the leading shape of ``f``'s output.
    Raises :class:`AccuracyError` when ``max_panels`` is exceeded.
    """
    edges = np.asarray(breakpoints, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("breakpoints must be a strictly increasing sequence")
    length = edges[-1] - edges[0]
    min_width = 64 * _EPS * max(abs(edges[0]), abs(edges[-1]), length)

    xn, wn = gauss_legendre(order)
    x2, w2 = gauss_legendre(2 * order)
    ref = np.concatenate([xn, x2])

    a, b = edges[:-1], edges[1:]
    done_val = done_err = 0.0
    total_panels = a.size
    while True:
        mid = 0.5 * (a + b)
        half = 0.5 * (b - a)
        nodes = (mid[:, None] + half[:, None] * ref).ravel()
        vals = np.asarray(f(nodes), dtype=float)
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("integrand returned non-finite values")
        vals = vals.reshape(vals.shape[:-1] + (a.size, ref.size))
        low = (vals[..., :order] @ wn) * half
        high = (vals[..., order:] @ w2) * half
        mag = (np.abs(vals[..., order:]) @ w2) * half
        err = np.abs(high - low)

        value = done_val + high.sum(axis=-1)
        error = done_err + err.sum(axis=-1)
        target = np.maximum(abs_tol, rel_tol * np.abs(value))
        if np.all(error <= target):
            return value, error

        share = target[..., None] * (b - a) / length
        ok = (err <= share) | (err <= 100 * _EPS * mag) | (half[None] * 2 <= min_width)
        if ok.ndim > 1:
            ok = ok.reshape(-1, a.size).all(axis=0)
        if ok.all():
            return value, error
        done_val = done_val + high[..., ok].sum(axis=-1)
        done_err = done_err + err[..., ok].sum(axis=-1)

        bad_a, bad_b = a[~ok], b[~ok]
        centre = 0.5 * (bad_a + bad_b)
        a = np.concatenate([bad_a, centre])
        b = np.concatenate([centre, bad_b])
        total_panels += bad_a.size
        if total_panels > max_panels:
            raise AccuracyError(
                f"panel budget of {max_panels} exhausted", achieved=float(np.max(error))
            )
