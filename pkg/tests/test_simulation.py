import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtr

from excursion_chaos.errors import InvalidInputError, ModelNotPSDError
from excursion_chaos.mehler import indicator_covariance
from excursion_chaos.models import (
    constant_model,
    discrete_model,
    euclidean_model,
    exp_power_model,
    spherical_exp_model,
)
from excursion_chaos.moments import compute_moments
from excursion_chaos.simulation import (
    build_grid,
    discretized_chaos_variance,
    excursion_mean,
    sample_excursion,
    validate_variance,
)

GAUSS = exp_power_model(2, 1, [1])
TWO_POINT = discrete_model([[1, 0.5], [0.5, 1]])


# -- grids ---------------------------------------------------------------------

def test_midpoint_grid():
    g = build_grid(GAUSS, 4)
    np.testing.assert_allclose(g.points[:, 0], [1 / 8, 3 / 8, 5 / 8, 7 / 8], rtol=0, atol=1e-15)
    np.testing.assert_allclose(g.weights, 0.25, rtol=0, atol=1e-15)


def test_circle_grid():
    g = build_grid(spherical_exp_model(1), 8)
    np.testing.assert_allclose(g.weights, 2 * math.pi / 8, rtol=1e-15)
    np.testing.assert_allclose(np.linalg.norm(g.points, axis=1), 1, rtol=1e-15)


@pytest.mark.parametrize("model,res", [
    (GAUSS, 256),
    (exp_power_model(1, 2, [1, 2]), 20),
    (spherical_exp_model(1), 100),
    (spherical_exp_model(2), 500),
    (TWO_POINT, 2),
])
def test_grid_invariants(model, res):
    g = build_grid(model, res)
    assert np.all(g.weights > 0)
    assert g.weights.sum() == pytest.approx(model.measure_mass, abs=1e-10)
    assert g.factor_residual() <= 1e-8
    assert g.jitter in (0.0, 1e-12, 1e-10, 1e-8)


def test_grid_validation():
    with pytest.raises(InvalidInputError):
        build_grid(GAUSS, 1)
    with pytest.raises(InvalidInputError):
        build_grid(exp_power_model(1, 2, [1, 1]), 65)


def test_grid_not_psd():
    box_kernel = euclidean_model(lambda r: np.where(np.abs(r) < 0.3, 1.0, 0.0), 1, [1])
    with pytest.raises(ModelNotPSDError):
        build_grid(box_kernel, 64)


@pytest.mark.parametrize("model", [GAUSS, exp_power_model(1, 1, [1]), exp_power_model(2, 2, [1, 1])])
def test_discretized_moments_converge_at_second_order(model):
    qs = [1, 8, 64]
    ref = compute_moments(model, qs).moments
    res = [12, 24, 48] if model.d == 2 else [64, 128, 256]
    errs = np.array([np.abs(build_grid(model, n).discretized_moments(64)[qs] - ref) for n in res])
    ratios = errs[:-1] / errs[1:]
    # the coarse 2-D grids are still slightly pre-asymptotic at q = 64
    np.testing.assert_allclose(ratios, 4.0, atol=0.2 if model.d == 2 else 0.1)


def test_discretized_moments_circle_spectral():
    model = spherical_exp_model(1)
    qs = [1, 8, 64]
    ref = compute_moments(model, qs).moments
    got = build_grid(model, 256).discretized_moments(64)[qs]
    np.testing.assert_allclose(got, ref, rtol=1e-10)


# -- sampling ------------------------------------------------------------------

def test_full_excursion():
    g = build_grid(GAUSS, 32)
    est = sample_excursion(g, -40.0, 300, seed=1, bootstrap=100)
    assert np.all(est.samples == pytest.approx(1.0, abs=1e-14))
    assert est.empirical_variance == pytest.approx(0.0, abs=1e-28)


@pytest.mark.parametrize("u", [-1.0, 0.0, 1.0])
def test_mean_identity(u):
    g = build_grid(GAUSS, 64)
    est = sample_excursion(g, u, 4000, seed=11, se_method="normal")
    target = excursion_mean(g, u)
    assert target == pytest.approx(float(ndtr(-u)), rel=1e-15)
    assert abs(est.empirical_mean - target) <= 4 * est.mean_stderr


def test_two_point_variance():
    g = build_grid(TWO_POINT, 2)
    est = sample_excursion(g, 0.0, 20000, seed=7)
    assert abs(est.empirical_variance - 2 / 3) <= 3 * est.variance_stderr
    v = validate_variance(TWO_POINT, 0.0, 2, 20000, 400, seed=7)
    assert v.analytic == pytest.approx(2 / 3, abs=1e-3)
    assert abs(v.z_score) <= 3


def test_pair_covariance_matches_indicator_covariance():
    # V = 1{B_x >= u} + 1{B_y >= u}, so Cov = (Var V - 2 p (1 - p)) / 2
    u, r = 0.5, math.exp(-0.25)
    g = build_grid(discrete_model([[1, r], [r, 1]]), 2)
    est = sample_excursion(g, u, 30000, seed=3)
    p = float(ndtr(-u))
    cov_hat = (est.empirical_variance - 2 * p * (1 - p)) / 2
    assert abs(cov_hat - indicator_covariance(u, u, r, 400)) <= 4 * est.variance_stderr / 2


def test_determinism_across_runs_and_workers():
    g = build_grid(GAUSS, 64)
    a = sample_excursion(g, 0.3, 5000, seed=42, bootstrap=200)
    b = sample_excursion(g, 0.3, 5000, seed=42, bootstrap=200, workers=4)
    c = sample_excursion(g, 0.3, 5000, seed=42, bootstrap=200)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(a.samples, c.samples)
    assert a.summary() == b.summary() == c.summary()
    d = sample_excursion(g, 0.3, 5000, seed=43, bootstrap=200)
    assert not np.array_equal(a.samples, d.samples)


def test_prefix_stability():
    # chunked substreams: a longer run extends a shorter one
    g = build_grid(GAUSS, 16)
    a = sample_excursion(g, 0.0, 1500, seed=5, bootstrap=10).samples
    b = sample_excursion(g, 0.0, 3000, seed=5, bootstrap=10).samples
    assert np.array_equal(a[:1024], b[:1024])


def test_sampling_validation():
    g = build_grid(GAUSS, 8)
    with pytest.raises(InvalidInputError):
        sample_excursion(g, 0.0, 99, seed=0)
    with pytest.raises(InvalidInputError):
        sample_excursion(g, 0.0, 100, seed=-1)
    with pytest.raises(InvalidInputError):
        sample_excursion(g, 0.0, 100, seed=0, se_method="jackknife")


def test_bootstrap_and_normal_se_agree():
    g = build_grid(GAUSS, 64)
    boot = sample_excursion(g, 0.0, 5000, seed=9).variance_stderr
    normal = sample_excursion(g, 0.0, 5000, seed=9, se_method="normal").variance_stderr
    assert boot == pytest.approx(normal, rel=0.15)


@settings(max_examples=15, deadline=None)
@given(st.floats(-0.95, 0.95), st.floats(-2, 2), st.integers(0, 2**31))
def test_estimate_invariants(r, u, seed):
    g = build_grid(discrete_model([[1, r], [r, 1]]), 2)
    est = sample_excursion(g, u, 200, seed=seed, bootstrap=50)
    assert 0 <= est.empirical_mean <= g.measure_mass
    assert est.empirical_variance >= 0
    assert np.all((est.samples >= 0) & (est.samples <= g.measure_mass))


# -- analytic side -------------------------------------------------------------

def test_constant_field_chaos_variance_is_quarter():
    g = build_grid(constant_model(1, [1]), 16)
    value, partial, half = discretized_chaos_variance(g, 0.0, 400)
    assert value == pytest.approx(0.25, abs=1e-15)
    assert half == pytest.approx(0.0, abs=1e-15)
    assert partial <= value


def test_chaos_variance_brackets_arcsine_oracle():
    # on the grid, Var V(0) = sum_ij w_i w_j arcsin(K_ij) / (2 pi)
    g = build_grid(GAUSS, 128)
    oracle = float((np.outer(g.weights, g.weights) * np.arcsin(g.covariance)).sum() / (2 * math.pi))
    value, partial, half = discretized_chaos_variance(g, 0.0, 400)
    assert partial <= oracle <= partial + 2 * half + 1e-15
    assert abs(value - oracle) <= half


@settings(max_examples=20, deadline=None)
@given(st.floats(-0.99, 0.99), st.floats(-2.5, 2.5))
def test_two_point_chaos_variance_matches_orthant(r, u):
    from excursion_chaos.mehler import orthant_covariance

    g = build_grid(discrete_model([[1, r], [r, 1]]), 2)
    p = float(ndtr(-u))
    exact = 2 * p * (1 - p) + 2 * orthant_covariance(u, u, r)
    value, _, half = discretized_chaos_variance(g, u, 400)
    assert abs(value - exact) <= half + 1e-9


def test_validate_gauss():
    v = validate_variance(GAUSS, 0.0, 256, 20000, 400, seed=20240611)
    assert abs(v.z_score) <= 3
    assert v.jitter <= 1e-8
    assert set(v.summary()) >= {"empirical", "analytic", "z_score"}
