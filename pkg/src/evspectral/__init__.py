"""Parametric extreme value copulas built from spectral-density bases.

The package covers Pickands dependence functions and copulas of
convex-combination families, the trigonometric basis, nonparametric and
projected estimators with plug-in confidence intervals, an exact bivariate
sampler and a reproducible Monte Carlo harness.
"""

__version__ = "0.1.0"

from .basis import trig_basis, trig_constants, trig_A, trig_density, trig_g, trig_h
from .core import (
    AtomicPickands,
    BasisFamily,
    BivariateClosedForm,
    ClosedFormPickands,
    SimplexPoint,
    SpectralDensityPickands,
    Theta,
    copula_eval,
    copula_gradient,
    family_A,
    family_h,
    make_simplex_point,
    pickands_eval,
    tail_dep_l,
    validate_pickands,
)
from .estimators import (
    ExpMarginSample,
    GridMeasure,
    ProjectionFit,
    asym_cov,
    ci_for_A,
    ci_for_C,
    constrain_theta,
    exp_margins,
    fit_parametric_A,
    gram_matrix,
    pickands_np,
    pickands_ols,
    project_theta,
    xi,
)
from .sampler import SamplerState, gz_cdf, gz_pdf, mixing_probability, sample_n
