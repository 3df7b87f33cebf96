"""Covariance model families and checks on their local behaviour.

Three families are supported: stationary radial kernels on an axis-aligned
box in R^d, isotropic kernels on the sphere S^d, and finite covariance
matrices with counting measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy.special import binom

from .errors import DegenerateModelError, InvalidModelError
from .fitting import loglog_fit


def sphere_area(d: int) -> float:
    """Total measure of the unit sphere S^d embedded in R^(d+1)."""
    return float(2 * math.pi ** ((d + 1) / 2) / math.gamma((d + 1) / 2))


def harmonic_dimension(ell, d: int):
    """Number of independent degree-``ell`` spherical harmonics on S^d."""
    ell = np.asarray(ell, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        n = (2 * ell + d - 1) / ell * binom(ell + d - 2, ell - 1)
    return np.where(ell == 0, 1.0, n)


def gegenbauer_normalized(t, L: int, d: int) -> np.ndarray:
    """Gegenbauer polynomials of index ``(d-1)/2`` scaled to equal 1 at ``t = 1``.

    Returns shape ``(L+1,) + t.shape``. For d = 1 these are Chebyshev
    polynomials, for d = 2 Legendre polynomials.
    """
    t = np.asarray(t, dtype=float)
    lam = (d - 1) / 2
    g = np.empty((L + 1,) + t.shape)
    g[0] = 1.0
    if L >= 1:
        g[1] = t
    for ell in range(1, L):
        g[ell + 1] = (2 * (ell + lam) * t * g[ell] - ell * g[ell - 1]) / (ell + 2 * lam)
    return g


@dataclass(frozen=True)
class EuclideanStationaryModel:
    d: int
    covariance: Callable = field(repr=False)
    box: tuple
    alpha: float | None = None
    tag: str = "euclidean"

    @property
    def measure_mass(self) -> float:
        return float(np.prod(self.box))

    def __call__(self, rho):
        return self.covariance(np.asarray(rho, dtype=float))


@dataclass(frozen=True)
class SphericalIsotropicModel:
    d: int
    kappa: Callable = field(repr=False)
    spectrum: np.ndarray | None = field(default=None, repr=False)
    alpha: float | None = None
    tag: str = "spherical"
    angular: Callable | None = field(default=None, repr=False)

    @property
    def omega(self) -> float:
        return sphere_area(self.d)

    def at_angle(self, theta):
        """``kappa(cos theta)``, through the angular form when one is supplied."""
        theta = np.asarray(theta, dtype=float)
        if self.angular is not None:
            return self.angular(theta)
        return self.kappa(np.cos(theta))

    @property
    def measure_mass(self) -> float:
        return self.omega

    def __call__(self, t):
        return self.kappa(np.asarray(t, dtype=float))


@dataclass(frozen=True)
class DiscreteModel:
    matrix: np.ndarray = field(repr=False)
    strict: bool = True
    tag: str = "discrete"

    def __post_init__(self):
        K = np.asarray(self.matrix, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] == 0:
            raise InvalidModelError("covariance matrix must be square and nonempty")
        if not np.array_equal(K, K.T):
            raise InvalidModelError("covariance matrix must be symmetric")
        if not np.all(np.diag(K) == 1.0):
            raise InvalidModelError("covariance matrix must have unit diagonal")
        if np.linalg.eigvalsh(K)[0] < -1e-8:
            raise InvalidModelError("covariance matrix is not positive semidefinite")
        off = K[~np.eye(K.shape[0], dtype=bool)]
        if self.strict and off.size and np.max(np.abs(off)) >= 1:
            raise InvalidModelError("strict model needs |K(x, y)| < 1 off the diagonal")
        object.__setattr__(self, "matrix", K)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def measure_mass(self) -> float:
        return float(self.size)

    @property
    def d(self) -> int:
        return 0


def _check_box(box, d: int) -> tuple:
    box = tuple(float(b) for b in box)
    if len(box) != d or any(not b > 0 for b in box):
        raise InvalidModelError(f"box needs {d} positive side lengths, got {box}")
    return box


def exp_power_model(alpha: float, d: int, box) -> EuclideanStationaryModel:
    """Stationary kernel ``C(rho) = exp(-rho^alpha)``, valid for ``0 < alpha <= 2``."""
    if not 0 < alpha <= 2:
        raise InvalidModelError(f"alpha must lie in (0, 2], got {alpha!r}")
    return EuclideanStationaryModel(
        d=int(d),
        covariance=lambda rho: np.exp(-np.power(rho, alpha)),
        box=_check_box(box, d),
        alpha=float(alpha),
        tag=f"exp-power(alpha={alpha:g},d={d})",
    )


def euclidean_model(covariance: Callable, d: int, box, alpha=None, tag="euclidean"):
    """Wrap an arbitrary vectorized radial covariance ``C(rho)`` with ``C(0) = 1``."""
    c0 = float(np.asarray(covariance(np.zeros(1)))[0])
    if abs(c0 - 1) > 1e-12:
        raise InvalidModelError(f"radial covariance must satisfy C(0) = 1, got {c0}")
    return EuclideanStationaryModel(d=int(d), covariance=covariance, box=_check_box(box, d),
                                    alpha=alpha, tag=tag)


def constant_model(d: int, box) -> EuclideanStationaryModel:
    """Degenerate kernel ``C = 1``: the field is a single Gaussian variable."""
    return EuclideanStationaryModel(d=int(d), covariance=lambda rho: np.ones_like(rho),
                                    box=_check_box(box, d), tag="constant")


def spherical_model(kappa: Callable, d: int, alpha=None, tag="spherical",
                    angular: Callable | None = None) -> SphericalIsotropicModel:
    if d < 1:
        raise InvalidModelError("sphere dimension must be at least 1")
    k1 = float(np.asarray(kappa(np.ones(1)))[0])
    if abs(k1 - 1) > 1e-12:
        raise InvalidModelError(f"kappa(1) must equal 1, got {k1}")
    return SphericalIsotropicModel(d=int(d), kappa=kappa, alpha=alpha, tag=tag, angular=angular)


def spherical_exp_model(d: int, scale: float = 5.0) -> SphericalIsotropicModel:
    """``kappa(t) = exp(scale (t - 1))``; positive definite on every sphere, ``alpha = 2``."""
    if not scale > 0:
        raise InvalidModelError("scale must be positive")
    return spherical_model(lambda t: np.exp(scale * (t - 1.0)), d, alpha=2.0,
                           tag=f"sphere-exp(scale={scale:g},d={d})")


def spherical_geodesic_model(alpha: float, d: int) -> SphericalIsotropicModel:
    """``kappa(cos theta) = exp(-theta^alpha)``, positive definite for ``0 < alpha <= 1``."""
    if not 0 < alpha <= 1:
        raise InvalidModelError(f"geodesic exponential needs alpha in (0, 1], got {alpha!r}")
    return spherical_model(lambda t: np.exp(-np.arccos(np.clip(t, -1.0, 1.0)) ** alpha), d,
                           alpha=float(alpha), tag=f"sphere-geodesic(alpha={alpha:g},d={d})",
                           angular=lambda theta: np.exp(-theta**alpha))


def spherical_from_spectrum(spectrum, d: int) -> SphericalIsotropicModel:
    """Isotropic kernel ``sum_l C_l n_{l,d} / omega_d G_{l,d}(t)``, rescaled so ``kappa(1) = 1``."""
    C = np.asarray(spectrum, dtype=float)
    if C.ndim != 1 or C.size == 0:
        raise InvalidModelError("spectrum must be a nonempty sequence")
    if np.any(C < 0):
        raise InvalidModelError("angular power spectrum must be nonnegative")
    if d < 1:
        raise InvalidModelError("sphere dimension must be at least 1")
    L = C.size - 1
    weights = C * harmonic_dimension(np.arange(L + 1), d) / sphere_area(d)
    total = weights.sum()
    if not total > 0:
        raise InvalidModelError("spectrum is identically zero")
    C = C / total
    weights = weights / total

    def kappa(t):
        return np.tensordot(weights, gegenbauer_normalized(t, L, d), axes=1)

    return SphericalIsotropicModel(d=int(d), kappa=kappa, spectrum=C, tag=f"spectrum(L={L},d={d})")


def discrete_model(matrix, strict: bool = True) -> DiscreteModel:
    return DiscreteModel(matrix=np.asarray(matrix, dtype=float), strict=strict)


@dataclass(frozen=True)
class LocalConditionReport:
    alpha_hat: float
    C_lower: float
    C_upper: float
    epsilon_used: float
    lower_ok: bool
    upper_ok: bool
    r_squared: float
    residual_max: float
    global_ok: bool | None = None
    global_max: float | None = None


def _deficit(model):
    """``x -> 1 - C(x)`` on the model's natural local variable (radius or angle)."""
    if isinstance(model, EuclideanStationaryModel):
        return lambda rho: 1.0 - model(rho)
    if isinstance(model, SphericalIsotropicModel):
        return lambda theta: 1.0 - model.at_angle(theta)
    raise TypeError("local conditions apply to Euclidean or spherical models")


def default_epsilon(model, cap: float = 0.5, grid_size: int = 2000) -> float:
    """Largest ``eps <= cap`` with ``1 - C`` increasing on ``(0, eps]``."""
    x = np.geomspace(cap * 1e-6, cap, grid_size)
    g = _deficit(model)(x)
    bad = np.nonzero(np.diff(g) <= 0)[0]
    return float(cap if bad.size == 0 else x[bad[0]])


def check_local_conditions(model, epsilon: float | None = None, grid_size: int = 64,
                           slack: float = 0.1) -> LocalConditionReport:
    """Fit ``1 - C(x) ~ c x^alpha`` on ``(epsilon/100, epsilon]`` and test the sandwich.

    ``lower_ok`` / ``upper_ok`` say whether ``(1 -+ slack) c x^alpha_hat``
    bounds the deficit from below / above on the whole grid. For spherical
    models the global requirement ``|kappa(t)| < 1`` for ``t != 1`` is also
    checked on ``[-1, cos(epsilon)]``.
    """
    deficit = _deficit(model)
    if epsilon is None:
        epsilon = default_epsilon(model)
    x = np.geomspace(epsilon / 100, epsilon, grid_size)
    g = deficit(x)
    if np.any(g <= 0):
        if np.all(np.abs(g) < 1e-15):
            raise DegenerateModelError("1 - C vanishes near the origin")
        raise DegenerateModelError(f"1 - C is not positive on (0, {epsilon:g}]; pick a smaller epsilon")
    fit = loglog_fit(x, g)
    alpha_hat = fit.slope
    c = math.exp(fit.intercept)
    lower, upper = (1 - slack) * c, (1 + slack) * c
    power = x**alpha_hat
    report = dict(
        alpha_hat=alpha_hat, C_lower=lower, C_upper=upper, epsilon_used=float(epsilon),
        lower_ok=bool(np.all(g >= lower * power)), upper_ok=bool(np.all(g <= upper * power)),
        r_squared=fit.r_squared, residual_max=fit.residual_max,
    )
    if isinstance(model, SphericalIsotropicModel):
        t = np.linspace(-1.0, math.cos(epsilon), 10_000)
        gmax = float(np.max(np.abs(model(t))))
        report.update(global_ok=gmax < 1, global_max=gmax)
    return LocalConditionReport(**report)


class DecayCheck(NamedTuple):
    bounded: bool
    constant: float


def polynomial_decay_check(model: EuclideanStationaryModel, delta: float,
                           radius_max: float = 1e6, grid_size: int = 4000) -> DecayCheck:
    """Is ``|C(rho)| rho^delta`` bounded on ``[1e-3, radius_max]``?

    Judged on a log grid: bounded when the supremum over the last decade
    exceeds the supremum before it by less than 10 %.
    """
    if not delta > 0:
        raise InvalidModelError("delta must be positive")
    rho = np.geomspace(1e-3, radius_max, grid_size)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.abs(model(rho)) * rho**delta
    vals = np.nan_to_num(vals, nan=0.0)
    last = rho >= radius_max / 10
    head, tail = float(vals[~last].max()), float(vals[last].max())
    return DecayCheck(bounded=bool(tail <= 1.1 * head), constant=max(head, tail))
