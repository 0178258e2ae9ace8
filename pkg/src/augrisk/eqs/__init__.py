"""Deterministic fixed-point characterization of the augmented-logistic risk."""

from .chi import ChiTerms, LimitTerms, chi_terms
from .prox import inner_prox, prox_batch, prox_gradient, prox_logistic_scalar
from .residuals import NonFiniteResidualError, do_value, moreau_value, residuals
from .solve import (EqsSolution, NoConvergenceError, isotropic_warm_start,
                    solve, solve_multistart)
from .state import LARGE_CAP, VAR_NAMES, EqsState, MCPool
from .testrisk import test_risk_bar

__all__ = [
    "ChiTerms", "LimitTerms", "chi_terms", "inner_prox", "prox_batch",
    "prox_gradient", "prox_logistic_scalar", "NonFiniteResidualError",
    "do_value", "moreau_value", "residuals", "EqsSolution",
    "NoConvergenceError", "isotropic_warm_start", "solve", "solve_multistart",
    "EqsState", "MCPool", "VAR_NAMES", "LARGE_CAP", "test_risk_bar",
]
