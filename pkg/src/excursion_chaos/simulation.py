"""Monte Carlo excursion volumes on discretized Gaussian fields.

A field is sampled on a finite point set through a dense Cholesky factor of
its covariance matrix. Replications are generated in fixed-size chunks, each
drawing from its own Philox counter block, so results depend only on the
seed, never on how chunks are scheduled across threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import InvalidInputError, ModelNotPSDError
from .hermite import indicator_coefficients
from .models import DiscreteModel, EuclideanStationaryModel, SphericalIsotropicModel, sphere_area

MAX_POINTS = 4096
JITTERS = (0.0, 1e-12, 1e-10, 1e-8)
CHUNK = 1024
_GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SampleGrid:
    points: np.ndarray
    weights: np.ndarray
    covariance: np.ndarray = field(repr=False)
    factor: np.ndarray = field(repr=False)
    jitter: float
    measure_mass: float
    model_tag: str

    @property
    def size(self) -> int:
        return self.weights.size

    def factor_residual(self) -> float:
        """Max-entry error of ``L L^T`` against the (unjittered) covariance."""
        return float(np.max(np.abs(self.factor @ self.factor.T - self.covariance)))

    def discretized_moments(self, Q: int) -> np.ndarray:
        """``sum_ij w_i w_j K_ij^q`` for ``q = 0..Q``."""
        W = np.outer(self.weights, self.weights)
        power = np.ones_like(self.covariance)
        out = np.empty(Q + 1)
        for q in range(Q + 1):
            out[q] = float((W * power).sum())
            power *= self.covariance
        return out


@dataclass(frozen=True)
class ExcursionEstimate:
    level: float
    replications: int
    empirical_mean: float
    empirical_variance: float
    variance_stderr: float
    mean_stderr: float
    seed: int
    samples: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "level": self.level,
            "replications": self.replications,
            "empirical_mean": self.empirical_mean,
            "empirical_variance": self.empirical_variance,
            "variance_stderr": self.variance_stderr,
            "mean_stderr": self.mean_stderr,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class VarianceValidation:
    empirical: float
    analytic: float
    z_score: float
    variance_stderr: float
    partial_sum: float
    tail_halfwidth: float
    max_order: int
    jitter: float

    def summary(self) -> dict:
        return dict(self.__dict__)


def _grid_points(model, resolution: int):
    if isinstance(model, EuclideanStationaryModel):
        axes = [(np.arange(resolution) + 0.5) * L / resolution for L in model.box]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        w = np.full(pts.shape[0], model.measure_mass / pts.shape[0])
        return pts, w
    if isinstance(model, SphericalIsotropicModel):
        n = resolution
        if model.d == 1:
            ang = 2 * np.pi * np.arange(n) / n
            pts = np.column_stack([np.cos(ang), np.sin(ang)])
        elif model.d == 2:
            z = 1 - (2 * np.arange(n) + 1) / n
            r = np.sqrt(1 - z * z)
            phi = _GOLDEN_ANGLE * np.arange(n)
            pts = np.column_stack([r * np.cos(phi), r * np.sin(phi), z])
        else:
            raise InvalidInputError("sphere grids are implemented for d = 1 and d = 2")
        return pts, np.full(n, sphere_area(model.d) / n)
    if isinstance(model, DiscreteModel):
        return np.arange(model.size, dtype=float)[:, None], np.ones(model.size)
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _covariance(model, pts) -> np.ndarray:
    if isinstance(model, EuclideanStationaryModel):
        diff = pts[:, None, :] - pts[None, :, :]
        K = model(np.sqrt((diff**2).sum(-1)))
    elif isinstance(model, SphericalIsotropicModel):
        K = model(np.clip(pts @ pts.T, -1.0, 1.0))
    else:
        K = model.matrix.copy()
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return K


def build_grid(model, resolution: int) -> SampleGrid:
    """Discretize the model and factor its covariance with the smallest workable jitter.

    Euclidean boxes use ``resolution`` midpoints per axis; the circle uses
    ``resolution`` equispaced angles; S^2 a Fibonacci set of ``resolution``
    points with equal weights. Discrete models ignore ``resolution``.
    """
    if int(resolution) != resolution or resolution < 2:
        raise InvalidInputError("resolution must be an integer >= 2")
    pts, w = _grid_points(model, int(resolution))
    if pts.shape[0] > MAX_POINTS:
        raise InvalidInputError(f"{pts.shape[0]} points exceed the dense budget of {MAX_POINTS}")
    K = _covariance(model, pts)
    eye = np.eye(K.shape[0])
    for jitter in JITTERS:
        try:
            L = np.linalg.cholesky(K + jitter * eye)
        except np.linalg.LinAlgError:
            continue
        return SampleGrid(points=pts, weights=w, covariance=K, factor=L, jitter=jitter,
                          measure_mass=float(w.sum()), model_tag=model.tag)
    raise ModelNotPSDError(f"covariance not factorable with jitter up to {JITTERS[-1]:g}")


def _chunk_volumes(grid: SampleGrid, u: float, seed: int, index: int, count: int) -> np.ndarray:
    rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, index]))
    z = rng.standard_normal((grid.size, count))
    field_values = grid.factor @ z
    return grid.weights @ (field_values >= u)


def _bootstrap_variance_se(values: np.ndarray, resamples: int, seed: int) -> float:
    rng = np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 1, 0]))
    n = values.size
    stats = np.empty(resamples)
    batch = max(1, 2_000_000 // n)
    for start in range(0, resamples, batch):
        k = min(batch, resamples - start)
        idx = rng.integers(0, n, size=(k, n))
        stats[start:start + k] = values[idx].var(axis=1, ddof=1)
    return float(stats.std(ddof=1))


def _normal_variance_se(values: np.ndarray) -> float:
    n = values.size
    c = values - values.mean()
    m2 = float((c**2).mean())
    m4 = float((c**4).mean())
    return math.sqrt(max(0.0, m4 - (n - 3) / (n - 1) * m2 * m2) / n)


def sample_excursion(grid: SampleGrid, u: float, replications: int, seed: int, *,
                     bootstrap: int = 1000, se_method: str = "bootstrap",
                     workers: int = 1) -> ExcursionEstimate:
    """Draw ``replications`` excursion volumes ``sum_i w_i 1{B_i >= u}``."""
    if replications < 100:
        raise InvalidInputError("need at least 100 replications")
    if int(seed) != seed or seed < 0:
        raise InvalidInputError("seed must be a nonnegative integer")
    if se_method not in ("bootstrap", "normal"):
        raise InvalidInputError(f"unknown standard-error method {se_method!r}")
    seed = int(seed)
    jobs = [(i, min(CHUNK, replications - i * CHUNK)) for i in range(math.ceil(replications / CHUNK))]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: _chunk_volumes(grid, u, seed, *job), jobs))
    else:
        parts = [_chunk_volumes(grid, u, seed, *job) for job in jobs]
    values = np.concatenate(parts)
    var = float(values.var(ddof=1))
    if se_method == "bootstrap":
        se = _bootstrap_variance_se(values, bootstrap, seed)
    else:
        se = _normal_variance_se(values)
    return ExcursionEstimate(
        level=float(u), replications=int(replications), empirical_mean=float(values.mean()),
        empirical_variance=var, variance_stderr=se,
        mean_stderr=math.sqrt(var / values.size), seed=seed, samples=values,
    )


def discretized_chaos_variance(grid: SampleGrid, u: float, Q: int) -> tuple[float, float, float]:
    """Chaos-sum variance of the discretized excursion volume.

    Returns ``(value, partial_sum, tail_halfwidth)``. Orders beyond ``Q``
    carry the exact Parseval remainder ``R_Q = ||1_u||^2 - sum_{q<=Q} b_q^2``
    of the coefficients, times moments that are bracketed between their limit
    and ``m_{Q+1}`` (nonnegative kernels) or by ``sum w w |K|^(Q+1)``.
    """
    coeffs = indicator_coefficients(u, Q)
    m = grid.discretized_moments(Q + 1)
    b2 = coeffs.energies()
    partial = math.fsum(b2[1:] * m[1 : Q + 1])
    remainder = max(0.0, coeffs.l2_norm_sq - math.fsum(b2))
    K = grid.covariance
    W = np.outer(grid.weights, grid.weights)
    if np.all(K >= 0):
        lo = float(W[K == 1.0].sum())
        hi = float(m[Q + 1])
    else:
        hi = float((W * np.abs(K) ** (Q + 1)).sum())
        lo = -hi
    tail_mid = remainder * 0.5 * (lo + hi)
    return float(partial + tail_mid), float(partial), float(remainder * 0.5 * (hi - lo))


def validate_variance(model, u: float, resolution: int, replications: int, Q: int, seed: int,
                      **sample_kwargs) -> VarianceValidation:
    """Monte Carlo variance of ``V(u)`` against the chaos sum on the same grid."""
    grid = build_grid(model, resolution)
    est = sample_excursion(grid, u, replications, seed, **sample_kwargs)
    analytic, partial, halfwidth = discretized_chaos_variance(grid, u, Q)
    se = est.variance_stderr
    diff = est.empirical_variance - analytic
    z = diff / se if se > 0 else (0.0 if diff == 0 else math.copysign(math.inf, diff))
    z = float(z)
    return VarianceValidation(
        empirical=est.empirical_variance, analytic=analytic, z_score=z, variance_stderr=se,
        partial_sum=partial, tail_halfwidth=halfwidth, max_order=int(Q), jitter=grid.jitter,
    )


def excursion_mean(grid: SampleGrid, u: float) -> float:
    """``E V(u) = mu(E) (1 - Phi(u))``."""
    return grid.measure_mass * float(ndtr(-u))
