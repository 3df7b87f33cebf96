"""Probabilists' Hermite polynomials in scaled form and chaos coefficients.

Everything is expressed through ``e_q(x) = H_q(x) / sqrt(q!)``, which obeys

    e_{q+1}(x) = (x e_q(x) - sqrt(q) e_{q-1}(x)) / sqrt(q + 1)

and stays O(exp(x^2 / 4)) instead of growing like sqrt(q!). For a function
``phi`` with expansion ``sum a_q H_q`` we store ``b_q = a_q sqrt(q!)``, so
that ``||phi||^2 = sum b_q^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, ndtr

from .errors import InvalidInputError
from .fitting import LogLogFit, dyadic_block_means, loglog_fit
from .quadrature import integrate

_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
_RESCALE = 1e150


@dataclass(frozen=True)
class ScaledHermiteValues:
    point: float
    max_order: int
    values: np.ndarray


@dataclass(frozen=True)
class CoefficientSequence:
    """Scaled chaos coefficients ``b_0..b_Q`` of a function."""

    max_order: int
    scaled_coeffs: np.ndarray
    source: str
    l2_norm_sq: float
    level: float | None = None
    errors: np.ndarray | None = field(default=None, repr=False)

    @property
    def coeffs(self) -> np.ndarray:
        """Raw coefficients ``a_q = b_q / sqrt(q!)`` (underflow to 0 is expected)."""
        b = self.scaled_coeffs
        q = np.arange(b.size)
        with np.errstate(divide="ignore"):
            log_abs = np.log(np.abs(b)) - 0.5 * gammaln(q + 1)
        return np.sign(b) * np.exp(log_abs)

    def energies(self) -> np.ndarray:
        """``q! a_q^2 = b_q^2``."""
        return self.scaled_coeffs**2

    def remainders(self) -> np.ndarray:
        """Parseval remainder ``||phi||^2 - sum_{k<=q} b_k^2`` for each q."""
        return self.l2_norm_sq - np.cumsum(self.energies())

    def tail_fit(self, q_min: int = 16) -> LogLogFit:
        """Log-log slope of dyadic-block averages of ``b_q^2``."""
        q = np.arange(self.max_order + 1)
        centres, means = dyadic_block_means(q, self.energies(), q_min, self.max_order)
        return loglog_fit(centres, means)


def _check_order(Q) -> int:
    if isinstance(Q, bool) or int(Q) != Q or Q < 0:
        raise InvalidInputError(f"order must be a nonnegative integer, got {Q!r}")
    return int(Q)


def scaled_hermite_table(x, Q: int, weight=None) -> np.ndarray:
    """Return ``weight(x) * e_q(x)`` for ``q = 0..Q`` as an array of shape ``(Q+1,) + x.shape``.

    Passing the Gaussian density as ``weight`` keeps large ``|x|`` from
    overflowing: the weighted sequence decays instead of growing.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((Q + 1,) + x.shape)
    out[0] = 1.0 if weight is None else weight
    if Q >= 1:
        out[1] = x * out[0]
    for q in range(1, Q):
        out[q + 1] = (x * out[q] - math.sqrt(q) * out[q - 1]) / math.sqrt(q + 1)
    return out


def _log_scaled_recurrence(x: float, Q: int):
    """Scalar recurrence with periodic rescaling.

    Returns ``(mantissa, log_scale)`` with ``e_q(x) = mantissa[q] * exp(log_scale[q])``.
    """
    mant = np.empty(Q + 1)
    logs = np.empty(Q + 1)
    prev, cur, offset = 0.0, 1.0, 0.0
    mant[0], logs[0] = 1.0, 0.0
    for q in range(Q):
        prev, cur = cur, (x * cur - math.sqrt(q) * prev) / math.sqrt(q + 1)
        if abs(cur) > _RESCALE:
            prev /= _RESCALE
            cur /= _RESCALE
            offset += math.log(_RESCALE)
        mant[q + 1], logs[q + 1] = cur, offset
    return mant, logs


def hermite_scaled_eval(x: float, Q: int) -> ScaledHermiteValues:
    """Evaluate ``e_0(x)..e_Q(x)``."""
    Q = _check_order(Q)
    if not math.isfinite(x):
        raise InvalidInputError(f"x must be finite, got {x!r}")
    mant, logs = _log_scaled_recurrence(float(x), Q)
    if logs[-1] > 0:
        with np.errstate(over="ignore"):
            values = mant * np.exp(logs)
    else:
        values = mant
    return ScaledHermiteValues(point=float(x), max_order=Q, values=values)


def indicator_coefficients(u: float, Q: int) -> CoefficientSequence:
    """Chaos coefficients of ``1{x >= u}``.

    ``a_0 = 1 - Phi(u)`` and ``a_q = H_{q-1}(u) phi(u) / q!`` for ``q >= 1``,
    i.e. ``b_q = phi(u) e_{q-1}(u) / sqrt(q)``. The density factor is folded
    in on the log scale so very high levels do not underflow prematurely.
    """
    Q = _check_order(Q)
    if Q < 1:
        raise InvalidInputError("indicator expansion needs Q >= 1")
    if not math.isfinite(u):
        raise InvalidInputError(f"level must be finite, got {u!r}")
    tail = float(ndtr(-u))
    mant, logs = _log_scaled_recurrence(float(u), Q - 1)
    q = np.arange(1, Q + 1)
    log_phi = -0.5 * u * u - _LOG_SQRT_2PI
    with np.errstate(divide="ignore"):
        log_abs = np.log(np.abs(mant)) + logs + log_phi - 0.5 * np.log(q)
    b = np.empty(Q + 1)
    b[0] = tail
    b[1:] = np.sign(mant) * np.exp(log_abs)
    return CoefficientSequence(
        max_order=Q, scaled_coeffs=b, source="indicator", l2_norm_sq=tail, level=float(u)
    )


def coefficients_by_quadrature(f, Q: int, tol: float = 1e-10, *, radius: float = 10.0,
                               breakpoints=None, max_panels: int = 50_000) -> CoefficientSequence:
    """Chaos coefficients of a vectorized callable ``f`` by adaptive quadrature.

    Integrates ``f(x) e_q(x) phi(x)`` over ``[-radius, radius]``; interior
    ``breakpoints`` (kinks or jumps of ``f``) become panel edges. Every
    ``b_q`` and the squared norm carry an absolute error estimate ``<= tol``.
    """
    Q = _check_order(Q)
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    pts = [-radius, radius]
    if breakpoints is not None:
        pts += [float(p) for p in breakpoints if -radius < p < radius]
    edges = np.unique(np.linspace(-radius, radius, 17).tolist() + pts)

    def integrand(x):
        fx = np.asarray(f(x), dtype=float) * np.ones_like(x)
        dens = np.exp(-0.5 * x * x - _LOG_SQRT_2PI)
        rows = scaled_hermite_table(x, Q, weight=dens) * fx
        return np.vstack([rows, fx * fx * dens])

    value, error = integrate(integrand, edges, abs_tol=tol, rel_tol=0.0,
                             max_panels=max_panels)
    return CoefficientSequence(
        max_order=Q,
        scaled_coeffs=value[:-1],
        source="numerical",
        l2_norm_sq=float(value[-1]),
        errors=error[:-1],
    )


def hermite_covariance(q: int, p: int, rho: float) -> float:
    """``E[H_q(N1) H_p(N2)] = q! rho^q 1{p = q}`` for standard pairs with correlation ``rho``."""
    q, p = _check_order(q), _check_order(p)
    if not abs(rho) <= 1:
        raise InvalidInputError(f"|rho| must be at most 1, got {rho!r}")
    if p != q:
        return 0.0
    if q == 0:
        return 1.0
    if rho == 0:
        return 0.0
    sign = -1.0 if (rho < 0 and q % 2) else 1.0
    return sign * math.exp(math.lgamma(q + 1) + q * math.log(abs(rho)))
