"""Saddlepoint likelihoods from composable CGFs, and the discrepancy between
saddlepoint and exact maximum-likelihood estimates."""

from .cgf import (BirthDeathOffspring, CgfNode, Concat, Gamma, IidSum, LinearMap, ModelSpec, Multinomial,
                  MultivariateNormal, Poisson, SumIndependent, load_model, save_model)
from .discrepancy import (DiscrepancyReport, approx_discrepancy, discrepancy_report, grad_T,
                          true_discrepancy)
from .errors import SaddlefitError
from .likelihood import (correction_T, correction_T_direct, spa_loglik, spa_loglik2, spa_loglik_grad,
                         spa_loglik_hess)
from .mle import FitResult, find_spa_mle, find_true_mle, fit_with_discrepancy
from .saddlepoint import SaddlepointSolution, solve_saddlepoint

__version__ = "0.1.0"

__all__ = [
    "BirthDeathOffspring", "CgfNode", "Concat", "Gamma", "IidSum", "LinearMap", "ModelSpec",
    "Multinomial", "MultivariateNormal", "Poisson", "SumIndependent", "load_model", "save_model",
    "DiscrepancyReport", "approx_discrepancy", "discrepancy_report", "grad_T", "true_discrepancy",
    "SaddlefitError",
    "correction_T", "correction_T_direct", "spa_loglik", "spa_loglik2", "spa_loglik_grad",
    "spa_loglik_hess",
    "FitResult", "find_spa_mle", "find_true_mle", "fit_with_discrepancy",
    "SaddlepointSolution", "solve_saddlepoint",
]
