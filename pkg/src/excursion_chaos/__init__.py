"""Wiener-chaos analysis of excursion volumes of Gaussian fields."""

__version__ = "0.1.0"

from .errors import (
    AccuracyError,
    DegenerateModelError,
    InputMismatchError,
    InvalidInputError,
    InvalidModelError,
    ModelNotPSDError,
    SingularParameterError,
)
from .hermite import (
    CoefficientSequence,
    coefficients_by_quadrature,
    hermite_covariance,
    hermite_scaled_eval,
    indicator_coefficients,
)
from .malliavin import (
    ChaosSpectrum,
    RegularityReport,
    chaos_spectrum,
    membership_verdict,
    regularity_report,
    total_variance,
)
from .mehler import (
    gamma_series_diagnostic,
    indicator_covariance,
    mehler_closed_form,
    mehler_series,
    orthant_covariance,
    orthant_probability,
)
from .models import (
    check_local_conditions,
    constant_model,
    discrete_model,
    euclidean_model,
    exp_power_model,
    polynomial_decay_check,
    spherical_exp_model,
    spherical_from_spectrum,
    spherical_geodesic_model,
    spherical_model,
)
from .moments import MomentSequence, compute_moments, default_orders, estimate_beta
from .simulation import build_grid, sample_excursion, validate_variance
