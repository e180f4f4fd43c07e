"""Numerical tolerances shared by all modules and by the test-suite."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Tolerances:
    exact: float = 1e-12          # exact algebra (identities, endpoint calibration)
    quadrature: float = 1e-8      # closed form vs quadrature cross-checks
    quad_abs: float = 1e-10       # absolute tolerance passed to adaptive quadrature
    simplex_sum: float = 1e-12    # |sum(w) - 1| accepted for simplex points
    rank: float = 1e-10           # relative eigenvalue threshold for Gram matrices
    p_clamp: float = 1e-12        # band around [0, 1] absorbed when mixing probabilities
    validation: float = 1e-9      # pass threshold of validate_pickands
    fd_step: float = float(np.cbrt(np.finfo(float).eps))


TOL = Tolerances()

EULER_GAMMA = float(np.euler_gamma)
