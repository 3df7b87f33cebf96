"""Covariance moments ``m_q = iint K(x, y)^q dmu dmu`` and their decay exponent.

Euclidean moments reduce to a radial integral ``int C(rho)^q S(rho) drho``
where ``S`` is the spherical average of the box overlap volume. Spherical
moments reduce to an integral over the geodesic angle. Discrete moments are
plain sums.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError
from .fitting import loglog_fit
from .models import DiscreteModel, EuclideanStationaryModel, SphericalIsotropicModel, sphere_area
from .quadrature import gauss_legendre, integrate

R2_THRESHOLD = 0.99
_ABS_FLOOR = 1e-14


def default_orders(q_min: int | None = None, q_max: int | None = None) -> np.ndarray:
    """``ceil(2^(k/2))`` for ``k = 8..26``, optionally clipped to ``[q_min, q_max]``."""
    q = np.unique(np.ceil(2.0 ** (np.arange(8, 27) / 2)).astype(int))
    if q_min is not None:
        q = q[q >= q_min]
    if q_max is not None:
        q = q[q <= q_max]
    return q


@dataclass(frozen=True)
class MomentSequence:
    orders: np.ndarray
    moments: np.ndarray
    errors: np.ndarray
    model_tag: str
    measure_mass: float
    dimension: int
    absolute: bool = False

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "measure_mass": self.measure_mass,
            "dimension": self.dimension,
            "absolute": self.absolute,
            "orders": [int(q) for q in self.orders],
            "moments": [float(m) for m in self.moments],
            "errors": [float(e) for e in self.errors],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "MomentSequence":
        return cls(
            orders=np.asarray(data["orders"], dtype=int),
            moments=np.asarray(data["moments"], dtype=float),
            errors=np.asarray(data["errors"], dtype=float),
            model_tag=data["model_tag"],
            measure_mass=float(data["measure_mass"]),
            dimension=int(data["dimension"]),
            absolute=bool(data.get("absolute", False)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["q", "m_q", "error"])
        for q, m, e in zip(self.orders, self.moments, self.errors):
            writer.writerow([int(q), format(m, ".17g"), format(e, ".17g")])
        return buf.getvalue()


@dataclass(frozen=True)
class BetaEstimate:
    beta_hat: float
    stderr: float
    r_squared: float
    fit_window: tuple
    residual_max: float
    n_points: int
    inconclusive: bool = field(default=False)


def _check_orders(orders) -> np.ndarray:
    q = np.asarray(orders if orders is not None else default_orders())
    if q.ndim != 1 or q.size == 0 or np.any(q < 1) or np.any(q != np.round(q)):
        raise InvalidInputError("orders must be a nonempty list of integers >= 1")
    return q.astype(int)


def _positive_orthant_directions(d: int, n: int = 64):
    """Product Gauss-Legendre rule on the positive orthant of S^(d-1)."""
    x, w = gauss_legendre(n)
    ang = np.pi / 4 * (x + 1)
    wa = np.pi / 4 * w
    grids = np.meshgrid(*([ang] * (d - 1)), indexing="ij")
    weights = np.ones_like(grids[0])
    for wi in np.meshgrid(*([wa] * (d - 1)), indexing="ij"):
        weights = weights * wi
    dirs = []
    sin_prod = np.ones_like(grids[0])
    for j, phi in enumerate(grids):
        dirs.append(sin_prod * np.cos(phi))
        weights = weights * np.sin(phi) ** (d - 2 - j)
        sin_prod = sin_prod * np.sin(phi)
    dirs.append(sin_prod)
    return np.stack([c.ravel() for c in dirs], axis=1), weights.ravel()


_orthant_rule = lru_cache(maxsize=None)(_positive_orthant_directions)


def box_overlap_profile(rho, box) -> np.ndarray:
    """``S(rho) = int_{|z| = rho} Vol(E cap (E + z)) dsigma(z)`` for the box ``E``.

    Exact for d = 1 and d = 2; for d >= 3 the angular integral uses a
    64-point product Gauss-Legendre rule per angle.
    """
    rho = np.asarray(rho, dtype=float)
    box = tuple(box)
    d = len(box)
    if d == 1:
        return 2.0 * np.clip(box[0] - rho, 0.0, None)
    if d == 2:
        L1, L2 = box
        with np.errstate(divide="ignore"):
            lo = np.arccos(np.minimum(1.0, L1 / rho))
            hi = np.arcsin(np.minimum(1.0, L2 / rho))

        def F(t):
            return L1 * L2 * t - rho * L2 * np.sin(t) + rho * L1 * np.cos(t) + 0.5 * rho**2 * np.sin(t) ** 2

        return 4.0 * rho * np.where(hi > lo, F(hi) - F(lo), 0.0)
    dirs, w = _orthant_rule(d)
    L = np.asarray(box)
    overlap = np.prod(np.clip(L - rho[..., None, None] * dirs, 0.0, None), axis=-1)
    return 2.0**d * rho ** (d - 1) * (overlap @ w)


def _graded_breakpoints(lo_scale: float, hi_scale: float, extent: float, kinks=()) -> np.ndarray:
    """Panel edges crowding geometrically toward 0 down to ``lo_scale / 8``."""
    top = min(extent, 10 * hi_scale)
    pts = [0.0, extent, *np.linspace(0.0, extent, 9)]
    if top > lo_scale / 8:
        pts += list(np.geomspace(lo_scale / 8, top, 24))
    pts += [k for k in kinks if 0 < k < extent]
    return np.unique(np.asarray(pts))


def _powered(values, q, absolute):
    base = np.abs(values) if absolute else values
    return np.power(base[None, :], q[:, None].astype(float))


def _run_chunks(orders, chunk, integrand_for, breakpoints_for, tol, floor):
    moments = np.empty(orders.size)
    errors = np.empty(orders.size)
    order_idx = np.argsort(orders)
    for start in range(0, orders.size, chunk):
        idx = order_idx[start:start + chunk]
        q = orders[idx]
        val, err = integrate(integrand_for(q), breakpoints_for(q), abs_tol=floor,
                             rel_tol=tol, order=16)
        moments[idx], errors[idx] = val, err
    return moments, errors


def _outer_shell(model: EuclideanStationaryModel, q, absolute, n: int = 24):
    """Part of the radial integral beyond ``min(box)`` for d >= 3.

    Past the shortest side the clipped overlap makes ``S`` kink at every
    direction node's cutoff radius, which starves adaptive refinement. Per
    direction the integrand is smooth up to its own cutoff, so each
    direction gets a fixed n- and 2n-point rule instead; the rule
    difference is the error estimate.
    """
    dirs, w = _orthant_rule(model.d)
    L = np.asarray(model.box)
    lo = L.min()
    with np.errstate(divide="ignore"):
        cut = np.min(np.where(dirs > 0, L / np.where(dirs > 0, dirs, 1.0), np.inf), axis=1)
    keep = cut > lo
    dirs, w, cut = dirs[keep], w[keep], cut[keep]
    mid, half = (cut + lo) / 2, (cut - lo) / 2
    out = []
    for m in (n, 2 * n):
        x, wx = gauss_legendre(m)
        rho = mid[:, None] + half[:, None] * x
        overlap = np.prod(np.clip(L - rho[..., None] * dirs[:, None, :], 0.0, None), axis=-1)
        weight = (2.0**model.d * w * half)[:, None] * wx * rho ** (model.d - 1) * overlap
        c = model(rho).ravel()
        base = np.abs(c) if absolute else c
        weight = weight.ravel()
        vals = np.empty(q.size)
        for i in range(0, q.size, 16):
            vals[i:i + 16] = np.power(base[None, :], q[i:i + 16, None].astype(float)) @ weight
        out.append(vals)
    return out[1], np.abs(out[1] - out[0])


def euclidean_moments(model: EuclideanStationaryModel, orders=None, tol: float = 1e-10,
                      absolute: bool = False, chunk: int = 128) -> MomentSequence:
    """``m_q = int_{R^d} C(|z|)^q Vol(E cap (E + z)) dz`` for a box ``E``."""
    q_all = _check_orders(orders)
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    alpha = model.alpha or 2.0
    mass2 = model.measure_mass**2
    if model.d >= 3:
        extent = float(min(model.box))
        kinks = ()
    else:
        extent = float(np.linalg.norm(model.box))
        kinks = sorted({*model.box, extent})

    def integrand_for(q):
        def f(rho):
            return _powered(model(rho), q, absolute) * box_overlap_profile(rho, model.box)[None, :]
        return f

    def breakpoints_for(q):
        return _graded_breakpoints(q.max() ** (-1 / alpha), q.min() ** (-1 / alpha), extent, kinks)

    m, e = _run_chunks(q_all, chunk, integrand_for, breakpoints_for, tol, _ABS_FLOOR * mass2)
    if model.d >= 3:
        outer, outer_err = _outer_shell(model, q_all, absolute)
        m, e = m + outer, e + outer_err
    return MomentSequence(orders=q_all, moments=m, errors=e, model_tag=model.tag,
                          measure_mass=model.measure_mass, dimension=model.d, absolute=absolute)


def spherical_moments(model: SphericalIsotropicModel, orders=None, tol: float = 1e-10,
                      absolute: bool = False, chunk: int = 128) -> MomentSequence:
    """``m_q = omega_d omega_{d-1} int_0^pi kappa(cos t)^q sin(t)^(d-1) dt``."""
    q_all = _check_orders(orders)
    if not tol > 0:
        raise InvalidInputError("tol must be positive")
    d = model.d
    alpha = model.alpha or 2.0
    prefactor = sphere_area(d) * sphere_area(d - 1)
    mass2 = model.measure_mass**2

    def integrand_for(q):
        def f(theta):
            weight = np.sin(theta) ** (d - 1) if d > 1 else np.ones_like(theta)
            return prefactor * _powered(model.at_angle(theta), q, absolute) * weight[None, :]
        return f

    def breakpoints_for(q):
        near = _graded_breakpoints(q.max() ** (-1 / alpha), q.min() ** (-1 / alpha), np.pi)
        # mirror the grading so antipodal peaks (kappa(-1) = +-1) are resolved too
        return np.unique(np.concatenate([near, np.pi - near]))

    m, e = _run_chunks(q_all, chunk, integrand_for, breakpoints_for, tol, _ABS_FLOOR * mass2)
    return MomentSequence(orders=q_all, moments=m, errors=e, model_tag=model.tag,
                          measure_mass=model.measure_mass, dimension=d, absolute=absolute)


def discrete_moments(model: DiscreteModel, orders=None, absolute: bool = False) -> MomentSequence:
    """``m_q = sum_{x, y} K(x, y)^q`` by direct summation."""
    q_all = _check_orders(orders)
    K = np.abs(model.matrix) if absolute else model.matrix
    flat = K.ravel()
    m = np.array([math.fsum(flat ** float(q)) for q in q_all])
    return MomentSequence(orders=q_all, moments=m, errors=np.abs(m) * np.finfo(float).eps,
                          model_tag=model.tag, measure_mass=model.measure_mass, dimension=0,
                          absolute=absolute)


def compute_moments(model, orders=None, tol: float = 1e-10, absolute: bool = False) -> MomentSequence:
    """Dispatch on the model family."""
    if isinstance(model, EuclideanStationaryModel):
        return euclidean_moments(model, orders, tol, absolute)
    if isinstance(model, SphericalIsotropicModel):
        return spherical_moments(model, orders, tol, absolute)
    if isinstance(model, DiscreteModel):
        return discrete_moments(model, orders, absolute)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def estimate_beta(moments: MomentSequence, window=None) -> BetaEstimate:
    """OLS fit of ``log m_q`` against ``log q``; ``beta_hat`` is minus the slope.

    The estimate is flagged inconclusive when ``r_squared < 0.99`` (for
    instance when moments plateau, as they do for finite index sets).
    """
    q, m, e = moments.orders, moments.moments, moments.errors
    if window is None:
        window = (int(q.min()), int(q.max()))
    lo, hi = window
    mask = (q >= lo) & (q <= hi)
    if np.any(m[mask] <= e[mask]):
        raise InvalidInputError(
            "moments in the fit window are nonpositive or zero within their error; "
            "use even orders or absolute moments")
    usable = mask & (e <= 0.1 * np.abs(m))
    if usable.sum() < 6:
        raise InvalidInputError(f"need at least 6 accurate orders in window {window}, got {int(usable.sum())}")
    fit = loglog_fit(q[usable], m[usable])
    return BetaEstimate(
        beta_hat=-fit.slope,
        stderr=fit.stderr,
        r_squared=fit.r_squared,
        fit_window=(int(lo), int(hi)),
        residual_max=fit.residual_max,
        n_points=fit.n,
        inconclusive=fit.r_squared < R2_THRESHOLD,
    )
