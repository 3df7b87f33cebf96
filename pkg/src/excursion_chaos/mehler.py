"""Mehler's kernel, its Hermite expansion, and the indicator covariance.

The Hermite side always runs on scaled polynomials ``e_q = H_q / sqrt(q!)``
so that ``H_q(u) H_q(v) r^q / q! = e_q(u) e_q(v) r^q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import ndtr

from .errors import InvalidInputError, SingularParameterError
from .fitting import dyadic_block_means, loglog_fit
from .hermite import _check_order, _log_scaled_recurrence
from .quadrature import gauss_legendre

SLOPE_MARGIN = 0.1

_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class MehlerEvaluation:
    u: float
    v: float
    r: float
    closed_form: float
    series_value: float
    truncation_order: int
    truncation_error_bound: float


@dataclass(frozen=True)
class GammaSeriesDiagnostic:
    u: float
    gamma: float
    max_order: int
    partial_sum: float
    fitted_tail_slope: float
    verdict: str
    integral_value: float
    integral_finite: bool
    consistent: bool


def _check_r(r: float) -> float:
    if not abs(r) < 1:
        raise SingularParameterError(f"Mehler kernel needs |r| < 1, got {r!r}")
    return float(r)


def mehler_closed_form(u: float, v: float, r: float) -> float:
    r = _check_r(r)
    one_m = 1.0 - r * r
    return math.exp((2 * u * v * r - (u * u + v * v) * r * r) / (2 * one_m)) / math.sqrt(one_m)


def mehler_density_ratio(u: float, v: float, r: float) -> float:
    """Bivariate density with correlation ``r`` divided by the product of marginals."""
    r = _check_r(r)
    one_m = 1.0 - r * r
    joint = math.exp(-(u * u + v * v - 2 * u * v * r) / (2 * one_m)) / (2 * math.pi * math.sqrt(one_m))
    indep = math.exp(-0.5 * (u * u + v * v)) / (2 * math.pi)
    return joint / indep


def _log_scaled_values(x: float, Q: int) -> tuple[np.ndarray, np.ndarray]:
    mant, logs = _log_scaled_recurrence(x, Q)
    with np.errstate(divide="ignore"):
        return np.sign(mant), np.log(np.abs(mant)) + logs


def _tail_sum(log_term, start: int, chunk: int = 4096, max_terms: int = 10_000_000) -> float:
    """Sum ``exp(log_term(q))`` for ``q >= start``.

    Once consecutive term ratios drop below one and keep falling, the rest is
    bounded by a geometric series, which closes the sum.
    """
    total = 0.0
    q0 = start
    while q0 - start < max_terms:
        q = np.arange(q0, q0 + chunk, dtype=float)
        lt = log_term(q)
        if np.max(lt) > 700:
            return math.inf
        total += float(np.exp(lt).sum())
        ratio = math.exp(lt[-1] - lt[-2])
        if ratio < 1 and lt[-1] <= lt[-2]:
            return total + math.exp(lt[-1]) * ratio / (1 - ratio)
        q0 += chunk
    return math.inf


def mehler_series(u: float, v: float, r: float, Q: int) -> MehlerEvaluation:
    """Truncated Mehler formula ``sum_{q<=Q} e_q(u) e_q(v) r^q``.

    The error bound uses ``|e_q(x)| <= exp(|x| sqrt(q))``, summed over the
    omitted orders.
    """
    r = _check_r(r)
    Q = _check_order(Q)
    su, lu = _log_scaled_values(u, Q)
    sv, lv = _log_scaled_values(v, Q)
    q = np.arange(Q + 1)
    if r == 0:
        series = 1.0
        bound = 0.0
    else:
        sign = su * sv * np.where((r < 0) & (q % 2 == 1), -1.0, 1.0)
        series = float(math.fsum(sign * np.exp(lu + lv + q * math.log(abs(r)))))
        s = abs(u) + abs(v)
        lr = math.log(abs(r))
        bound = _tail_sum(lambda k: k * lr + s * np.sqrt(k), Q + 1)
    return MehlerEvaluation(
        u=float(u), v=float(v), r=r,
        closed_form=mehler_closed_form(u, v, r),
        series_value=series,
        truncation_order=Q,
        truncation_error_bound=bound,
    )


def indicator_covariance(u: float, v: float, r: float, Q: int) -> float:
    """``Cov(1{N1 >= u}, 1{N2 >= v})`` for correlation ``r``, from its Hermite series.

    Sums ``phi(u) phi(v) e_{q-1}(u) e_{q-1}(v) r^q / q`` over ``q = 1..Q``.
    """
    r = _check_r(r)
    Q = _check_order(Q)
    if Q < 1:
        raise InvalidInputError("indicator covariance needs Q >= 1")
    if r == 0:
        return 0.0
    su, lu = _log_scaled_values(u, Q - 1)
    sv, lv = _log_scaled_values(v, Q - 1)
    q = np.arange(1, Q + 1)
    log_dens = -0.5 * (u * u + v * v) - _LOG_2PI
    sign = su * sv * np.where((r < 0) & (q % 2 == 1), -1.0, 1.0)
    logs = lu + lv + log_dens + q * math.log(abs(r)) - np.log(q)
    return float(math.fsum(sign * np.exp(logs)))


def indicator_covariance_tail_bound(u: float, v: float, r: float, Q: int) -> float:
    """Bound on the terms of :func:`indicator_covariance` beyond order ``Q``."""
    r = _check_r(r)
    if r == 0:
        return 0.0
    s = abs(u) + abs(v)
    log_dens = -0.5 * (u * u + v * v) - _LOG_2PI
    lr = math.log(abs(r))
    return _tail_sum(lambda k: log_dens + k * lr + s * np.sqrt(k - 1) - np.log(k), Q + 1)


def orthant_probability(u: float, v: float, r: float) -> float:
    """``P(N1 >= u, N2 >= v)`` for a standard pair with correlation ``r``.

    Integrates the conditional tail of ``N2`` given ``N1 = x`` over ``x >= u``;
    no Hermite machinery is involved, so this serves as an independent check.
    """
    r = _check_r(r)
    if u == 0 and v == 0:
        return 0.25 + math.asin(r) / (2 * math.pi)
    sd = math.sqrt(1 - r * r)

    def integrand(x):
        return math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * ndtr((r * x - v) / sd)

    lo = max(u, -40.0)
    hi = max(lo, 40.0)
    pts = [v / r] if r and lo < v / r < hi else None
    value, _ = sp_integrate.quad(integrand, lo, hi, points=pts,
                                 epsabs=1e-15, epsrel=1e-13, limit=500)
    return value


def orthant_covariance(u: float, v: float, r: float) -> float:
    return orthant_probability(u, v, r) - float(ndtr(-u)) * float(ndtr(-v))


def _surrogate_integral(u: float, gamma: float, shells: int = 80):
    """``int_0^1 M_r(u, u) (1 - r)^(gamma - 1) dr`` split into dyadic shells in ``s = 1 - r``.

    Returns ``(value, finite)``. Shell contributions of an integrable
    endpoint singularity shrink geometrically; a limiting ratio ``>= 1``
    means the integral diverges.
    """
    x, w = gauss_legendre(40)
    hi = 2.0 ** -np.arange(shells)
    lo = hi / 2
    mid, half = (hi + lo) / 2, (hi - lo) / 2
    s = mid[:, None] + half[:, None] * x
    log_g = ((gamma - 1.5) * np.log(s) - 0.5 * np.log(2 - s)
             + u * u * (1 - s) / (2 - s))
    pieces = (np.exp(log_g) @ w) * half
    ratios = pieces[1:] / pieces[:-1]
    tail_ratio = float(ratios[-1])
    if tail_ratio >= 1 - 1e-3:
        return math.inf, False
    return float(pieces.sum() + pieces[-1] * tail_ratio / (1 - tail_ratio)), True


def slope_verdict(slope: float, margin: float = SLOPE_MARGIN) -> str:
    if slope < -1 - margin:
        return "converges"
    if slope > -1 + margin:
        return "diverges"
    return "inconclusive"


def gamma_series_diagnostic(u: float, gamma: float, Q: int, q_min: int = 16) -> GammaSeriesDiagnostic:
    """Decide summability of ``sum_q e_q(u)^2 q^(-gamma)`` from its tail slope.

    The q = 0 term is taken as 1. Terms are averaged over complete dyadic
    blocks from ``q_min`` up to ``Q`` before fitting. The Mehler-kernel
    integral surrogate is evaluated alongside as a cross-check.
    """
    Q = _check_order(Q)
    if Q < 64:
        raise InvalidInputError("need Q >= 64 for a tail fit")
    if not gamma > 0:
        raise InvalidInputError(f"gamma must be positive, got {gamma!r}")
    su, lu = _log_scaled_values(u, Q)
    q = np.arange(1, Q + 1)
    terms = np.exp(2 * lu[1:] - gamma * np.log(q))
    partial = 1.0 + math.fsum(terms)
    centres, means = dyadic_block_means(q, terms, q_min, Q)
    slope = loglog_fit(centres, means).slope
    verdict = slope_verdict(slope)
    value, finite = _surrogate_integral(u, gamma)
    consistent = verdict == "inconclusive" or (verdict == "converges") == finite
    return GammaSeriesDiagnostic(
        u=float(u), gamma=float(gamma), max_order=Q, partial_sum=partial,
        fitted_tail_slope=slope, verdict=verdict, integral_value=value,
        integral_finite=finite, consistent=consistent,
    )
