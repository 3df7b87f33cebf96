import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_gegenbauer, eval_legendre

from excursion_chaos.errors import DegenerateModelError, InvalidModelError
from excursion_chaos.models import (
    check_local_conditions,
    constant_model,
    default_epsilon,
    discrete_model,
    euclidean_model,
    exp_power_model,
    gegenbauer_normalized,
    harmonic_dimension,
    polynomial_decay_check,
    sphere_area,
    spherical_exp_model,
    spherical_from_spectrum,
    spherical_geodesic_model,
    spherical_model,
)


def test_exp_power_examples():
    m = exp_power_model(2, 1, [1])
    assert m(0.5) == pytest.approx(math.exp(-0.25), rel=1e-15)
    assert float(exp_power_model(1, 2, [1, 1])(0.0)) == 1.0
    m = exp_power_model(0.5, 1, [2])
    for rho in (1e-2, 1e-4, 1e-6):
        ratio = (1 - float(m(rho))) / rho**0.5
        assert ratio == pytest.approx(1, abs=2 * rho**0.5)
    assert m.measure_mass == 2.0


@pytest.mark.parametrize("alpha", [0.0, -1.0, 2.5])
def test_exp_power_alpha_range(alpha):
    with pytest.raises(InvalidModelError):
        exp_power_model(alpha, 1, [1])


def test_box_validation():
    with pytest.raises(InvalidModelError):
        exp_power_model(1, 2, [1])
    with pytest.raises(InvalidModelError):
        exp_power_model(1, 1, [-1])


@pytest.mark.parametrize("alpha", [0.3, 1.0, 1.7, 2.0])
def test_exp_power_bounded_and_unit_at_origin(alpha):
    m = exp_power_model(alpha, 1, [1])
    rho = np.linspace(0, 50, 5001)
    c = m(rho)
    assert c[0] == 1.0
    assert np.all(np.abs(c) <= 1)
    assert abs(float(m(1e-12)) - 1) < 1e-3


def test_euclidean_model_requires_unit_variance():
    with pytest.raises(InvalidModelError):
        euclidean_model(lambda r: 2 * np.exp(-r), 1, [1])


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2 * math.pi, abs=1e-12)
    assert sphere_area(2) == pytest.approx(4 * math.pi, abs=1e-12)
    assert sphere_area(3) == pytest.approx(2 * math.pi**2, abs=1e-12)


def test_gegenbauer_unit_at_one():
    for d in (1, 2, 3):
        g = gegenbauer_normalized(1.0, 50, d)
        np.testing.assert_allclose(g, 1.0, rtol=1e-13)


def test_gegenbauer_special_cases():
    t = np.linspace(-1, 1, 41)
    g1 = gegenbauer_normalized(t, 20, 1)
    g2 = gegenbauer_normalized(t, 20, 2)
    g3 = gegenbauer_normalized(t, 20, 3)
    for ell in range(21):
        np.testing.assert_allclose(g1[ell], np.cos(ell * np.arccos(t)), atol=1e-12)
        np.testing.assert_allclose(g2[ell], eval_legendre(ell, t), atol=1e-12)
        # scipy's unnormalized C^(1)_l has C(1) = l + 1
        np.testing.assert_allclose(g3[ell], eval_gegenbauer(ell, 1.0, t) / (ell + 1), atol=1e-12)


def test_harmonic_dimension():
    ell = np.arange(0, 30)
    np.testing.assert_allclose(harmonic_dimension(ell, 2), 2 * ell + 1)
    np.testing.assert_allclose(harmonic_dimension(ell, 3), (ell + 1) ** 2)
    np.testing.assert_allclose(harmonic_dimension(ell[1:], 1), 2)
    assert harmonic_dimension(0, 1) == 1
    for d in (2, 3, 4):
        L = np.geomspace(64, 4096, 12).round()
        slope = np.polyfit(np.log(L), np.log(harmonic_dimension(L, d)), 1)[0]
        assert slope == pytest.approx(d - 1, abs=0.05)


def test_spectrum_single_frequency_circle():
    m = spherical_from_spectrum([0, 1.0], 1)
    t = np.linspace(-1, 1, 11)
    np.testing.assert_allclose(m(t), t, atol=1e-15)


def test_spectrum_constant_sphere():
    m = spherical_from_spectrum([3.0, 0, 0], 2)
    np.testing.assert_allclose(m(np.linspace(-1, 1, 7)), 1.0, atol=1e-15)


def test_spectrum_exponential_decay():
    C = np.exp(-np.arange(51.0))
    m = spherical_from_spectrum(C, 2)
    assert float(m(1.0)) == pytest.approx(1.0, abs=1e-14)
    total = (m.spectrum * harmonic_dimension(np.arange(51), 2) / sphere_area(2)).sum()
    assert total == pytest.approx(1.0, abs=1e-14)
    rep = check_local_conditions(m, epsilon=1e-2)
    assert rep.alpha_hat == pytest.approx(2, abs=0.02)
    assert rep.C_lower > 0 and rep.lower_ok and rep.upper_ok
    t = np.linspace(-1, 1, 10_000)
    assert np.max(np.abs(m(t))) <= 1 + 1e-12


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=25).filter(lambda c: sum(c) > 1e-6),
       st.integers(1, 3))
def test_positive_spectrum_gives_bounded_kernel(C, d):
    m = spherical_from_spectrum(C, d)
    t = np.linspace(-1, 1, 10_000)
    assert np.max(np.abs(m(t))) <= 1 + 1e-12
    assert float(m(1.0)) == pytest.approx(1, abs=1e-12)


def test_spectrum_errors():
    with pytest.raises(InvalidModelError):
        spherical_from_spectrum([0, 0], 2)
    with pytest.raises(InvalidModelError):
        spherical_from_spectrum([1, -0.1], 2)
    with pytest.raises(InvalidModelError):
        spherical_from_spectrum([1], 0)


def test_spherical_model_requires_unit_at_one():
    with pytest.raises(InvalidModelError):
        spherical_model(lambda t: 0.5 * t, 2)


def test_geodesic_alpha_range():
    with pytest.raises(InvalidModelError):
        spherical_geodesic_model(1.5, 2)


# -- discrete ----------------------------------------------------------------

def test_discrete_validation():
    with pytest.raises(InvalidModelError):
        discrete_model([[1, 0.5], [0.4, 1]])
    with pytest.raises(InvalidModelError):
        discrete_model([[1, 0.5], [0.5, 0.9]])
    with pytest.raises(InvalidModelError):
        discrete_model([[1, 0.9, -0.9], [0.9, 1, 0.9], [-0.9, 0.9, 1]])
    with pytest.raises(InvalidModelError):
        discrete_model(np.ones((2, 2)))
    assert discrete_model(np.ones((2, 2)), strict=False).size == 2


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 64), st.integers(0, 2**32 - 1), st.floats(-0.5, 0.5))
def test_discrete_psd_matches_eigenvalues(n, seed, shift):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    S = A @ A.T
    dinv = 1 / np.sqrt(np.diag(S))
    K = S * np.outer(dinv, dinv)
    # shifting the off-diagonal can break PSD; compare against a brute-force eigen check
    K = K + shift * (np.ones((n, n)) - np.eye(n)) / n
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    psd = np.linalg.eigvalsh(K).min() >= -1e-8
    off_ok = np.max(np.abs(K[~np.eye(n, dtype=bool)])) < 1
    try:
        discrete_model(K)
        accepted = True
    except InvalidModelError:
        accepted = False
    assert accepted == (psd and off_ok)


# -- local conditions --------------------------------------------------------

def test_local_conditions_exp_power():
    rep = check_local_conditions(exp_power_model(1.3, 1, [1]), epsilon=1e-3)
    assert rep.alpha_hat == pytest.approx(1.3, abs=0.02)
    assert rep.lower_ok and rep.upper_ok
    assert rep.C_lower <= rep.C_upper


def test_local_conditions_spherical_exp():
    rep = check_local_conditions(spherical_exp_model(2, 5.0), epsilon=1e-3)
    assert rep.alpha_hat == pytest.approx(2, abs=0.02)
    assert rep.global_ok


def test_local_conditions_linear_kernel_on_circle():
    rep = check_local_conditions(spherical_model(lambda t: t, 1), epsilon=1e-3)
    assert rep.alpha_hat == pytest.approx(2, abs=0.02)
    # kappa(-1) = -1, so the global part of the lower condition fails
    assert rep.global_ok is False


def test_local_conditions_degenerate():
    with pytest.raises(DegenerateModelError):
        check_local_conditions(constant_model(1, [1]), epsilon=0.1)


def test_local_conditions_default_epsilon():
    m = exp_power_model(1.3, 1, [1])
    assert default_epsilon(m) == 0.5
    rep = check_local_conditions(m)
    assert rep.epsilon_used == 0.5
    assert rep.alpha_hat > 0


def test_default_epsilon_stops_at_first_decrease():
    # 1 - C increases on (0, pi) and then decreases
    m = euclidean_model(lambda r: np.cos(r), 1, [1])
    assert default_epsilon(m, cap=5.0) == pytest.approx(math.pi, rel=0.01)


# -- polynomial decay --------------------------------------------------------

def test_decay_exponential():
    for delta in (0.5, 1, 3, 10):
        assert polynomial_decay_check(exp_power_model(1, 1, [1]), delta).bounded


def test_decay_rational():
    m = euclidean_model(lambda r: 1 / (1 + r), 1, [1])
    assert polynomial_decay_check(m, 1).bounded
    assert not polynomial_decay_check(m, 2).bounded


def test_decay_damped_cosine():
    m = euclidean_model(lambda r: np.cos(r) * np.exp(-r), 1, [1])
    res = polynomial_decay_check(m, 3)
    assert res.bounded
    assert 0 < res.constant < 2
