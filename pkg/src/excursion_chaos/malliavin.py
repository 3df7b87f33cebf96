"""Chaotic variance spectra and Malliavin-regularity verdicts.

For ``Y = int phi(B_x) mu(dx)`` the q-th chaos has variance
``b_q^2 m_q`` with ``b_q`` the scaled Hermite coefficient of ``phi`` and
``m_q`` the covariance moment. ``Y`` has p square-integrable Malliavin
derivatives iff ``sum_q q^p b_q^2 m_q`` converges; convergence is judged
from the log-log slope of dyadic-block averages of the terms.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .errors import InputMismatchError, InvalidInputError
from .fitting import dyadic_block_means, loglog_fit
from .hermite import CoefficientSequence, indicator_coefficients
from .mehler import SLOPE_MARGIN
from .models import EuclideanStationaryModel, SphericalIsotropicModel, check_local_conditions
from .moments import MomentSequence, compute_moments, default_orders, estimate_beta

MIN_BLOCKS = 4


@dataclass(frozen=True)
class ChaosSpectrum:
    orders: np.ndarray
    variances: np.ndarray
    errors: np.ndarray
    coefficient_source: str
    moment_source: str
    measure_mass: float
    l2_norm_sq: float


class Membership(NamedTuple):
    verdict: str
    slope: float


@dataclass
class RegularityReport:
    beta_hat: float
    p_star: float
    memberships: list
    term_slope_expected: float
    level: float
    d: int
    model_tag: str
    windows: dict
    beta_stderr: float
    beta_r_squared: float
    beta_inconclusive: bool
    sufficiency_threshold: float
    alpha_hat: float | None = None
    alpha_p_star: float | None = None
    note: str = ""

    def verdict(self, p: int) -> str:
        for m in self.memberships:
            if m["p"] == p:
                return m["verdict"]
        raise KeyError(p)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RegularityReport":
        return cls(**data)

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _membership_verdict(slope: float) -> str:
    if slope < -1 - SLOPE_MARGIN:
        return "in"
    if slope > -1 + SLOPE_MARGIN:
        return "out"
    return "boundary"


def chaos_spectrum(coeffs: CoefficientSequence, moments: MomentSequence) -> ChaosSpectrum:
    """Variances ``b_q^2 m_q`` at every order known to both inputs (``q >= 1``)."""
    mask = (moments.orders >= 1) & (moments.orders <= coeffs.max_order)
    q = moments.orders[mask]
    if q.size < 6:
        raise InputMismatchError(
            f"coefficients (Q={coeffs.max_order}) and moments share only {q.size} orders")
    b = coeffs.scaled_coeffs[q]
    m = moments.moments[mask]
    b_err = coeffs.errors[q] if coeffs.errors is not None else np.zeros_like(b)
    err = b * b * moments.errors[mask] + 2 * np.abs(b) * b_err * np.abs(m)
    return ChaosSpectrum(
        orders=q, variances=b * b * m, errors=err,
        coefficient_source=coeffs.source if coeffs.level is None else f"{coeffs.source}(u={coeffs.level:g})",
        moment_source=moments.model_tag, measure_mass=moments.measure_mass,
        l2_norm_sq=coeffs.l2_norm_sq,
    )


def _block_fit(spectrum: ChaosSpectrum, p: int, q_min: int, q_max: int | None):
    q = spectrum.orders
    terms = q.astype(float) ** p * spectrum.variances
    centres, means = dyadic_block_means(q, terms, q_min, q_max)
    return centres, means


def membership_verdict(spectrum: ChaosSpectrum, p: int, q_min: int = 16,
                       q_max: int | None = None) -> Membership:
    """Slope test for ``sum_q q^p Var(Y[q]) < inf``.

    ``in`` if the fitted slope is below ``-1.1``, ``out`` above ``-0.9``,
    ``boundary`` in between. A spectrum that vanishes on the whole tail is
    ``in`` with slope ``-inf``.
    """
    if p < 0 or int(p) != p:
        raise InvalidInputError("p must be a nonnegative integer")
    centres, means = _block_fit(spectrum, p, q_min, q_max)
    if means.size and np.all(means == 0):
        return Membership("in", -math.inf)
    if means.size < MIN_BLOCKS:
        raise InvalidInputError(
            f"need {MIN_BLOCKS} complete dyadic blocks in the tail, found {means.size}")
    if np.any(means <= 0):
        raise InvalidInputError("nonpositive block averages; use absolute moments")
    slope = loglog_fit(centres, means).slope
    return Membership(_membership_verdict(slope), slope)


def total_variance(spectrum: ChaosSpectrum, Q: int, q_min: int = 16) -> tuple[float, float]:
    """Partial sum of ``Var(Y[q])`` over ``1 <= q <= Q`` and an extrapolated tail.

    The tail is ``A Q^(s+1) / (-s-1)`` from the block slope ``s`` on
    ``[q_min, Q]``; it is infinite if ``s >= -1``.
    """
    q = spectrum.orders
    needed = np.arange(1, Q + 1)
    if not np.all(np.isin(needed, q)):
        raise InvalidInputError(f"spectrum does not cover every order in 1..{Q}")
    inside = (q >= 1) & (q <= Q)
    value = math.fsum(spectrum.variances[inside])
    beyond = spectrum.variances[q > Q]
    if beyond.size and np.all(beyond == 0):
        return value, 0.0
    centres, means = dyadic_block_means(q, spectrum.variances, q_min, Q)
    if means.size < 2 or np.any(means <= 0):
        return value, math.inf
    fit = loglog_fit(centres, means)
    s = fit.slope
    if s >= -1:
        return value, math.inf
    amplitude = math.exp(fit.intercept)
    return value, amplitude * Q ** (s + 1) / (-s - 1)


def _alpha_estimate(model, epsilon: float):
    if isinstance(model, (EuclideanStationaryModel, SphericalIsotropicModel)):
        return check_local_conditions(model, epsilon=epsilon).alpha_hat
    return None


def regularity_report(model, u: float = 0.0, Q: int | None = None, orders=None, *,
                      q_min: int = 64, q_max: int = 8192, beta_window=None, tol: float = 1e-10,
                      alpha_epsilon: float = 1e-3, moments: MomentSequence | None = None,
                      p_max: int | None = None) -> RegularityReport:
    """Indicator coefficients, moments, beta and per-p verdicts for ``V(u)``.

    Moments are needed at every integer order of the verdict window
    ``[q_min, q_max]`` because the coefficients oscillate; beta is fitted on
    the log-spaced subset (``orders`` or the default grid) inside
    ``beta_window``. A precomputed ``moments`` table can be passed in.
    Verdicts cover ``p = 0..p_max``, by default ``max(1, ceil(p*)) + 1``.
    """
    if Q is None:
        Q = q_max
    dense = np.arange(q_min, q_max + 1)
    grid = default_orders(q_min, q_max) if orders is None else np.asarray(orders, dtype=int)
    if moments is None:
        moments = compute_moments(model, np.union1d(dense, grid), tol=tol)
    coeffs = indicator_coefficients(u, Q)
    spectrum = chaos_spectrum(coeffs, moments)

    sel = np.isin(moments.orders, grid)
    beta_moments = MomentSequence(moments.orders[sel], moments.moments[sel], moments.errors[sel],
                                  moments.model_tag, moments.measure_mass, moments.dimension,
                                  moments.absolute)
    beta = estimate_beta(beta_moments, beta_window)
    p_star = beta.beta_hat + 0.5

    d = moments.dimension
    alpha_hat = _alpha_estimate(model, alpha_epsilon)
    alpha_p_star = d / alpha_hat + 0.5 if alpha_hat else None

    if p_max is None:
        p_top = max(1, math.ceil(p_star)) + 1 if math.isfinite(p_star) else 1
    elif int(p_max) != p_max or p_max < 0:
        raise InvalidInputError("p_max must be a nonnegative integer")
    else:
        p_top = int(p_max)
    memberships = []
    note = ""
    if beta.inconclusive:
        note = ("moment decay is not a power law on the fit window (r^2 = "
                f"{beta.r_squared:.3g}); moments plateau as for a finite index set, "
                "so no cutoff is reported")
        for p in range(p_top + 1):
            memberships.append({"p": p, "verdict": "boundary", "slope": None})
    else:
        for p in range(p_top + 1):
            verdict, slope = membership_verdict(spectrum, p, q_min, q_max)
            memberships.append({"p": p, "verdict": verdict, "slope": slope})

    return RegularityReport(
        beta_hat=beta.beta_hat, p_star=p_star, memberships=memberships,
        term_slope_expected=-beta.beta_hat - 1.5, level=float(u), d=d,
        model_tag=moments.model_tag,
        windows={"beta": list(beta.fit_window), "blocks": [int(q_min), int(q_max)]},
        beta_stderr=beta.stderr, beta_r_squared=beta.r_squared,
        beta_inconclusive=beta.inconclusive, sufficiency_threshold=beta.beta_hat,
        alpha_hat=alpha_hat, alpha_p_star=alpha_p_star, note=note,
    )
