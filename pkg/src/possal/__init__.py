"""Possibilistic uncertainty measures, Gaussian-process classifiers and active-learning benchmarks."""

from .acquisition import SCORERS, AcquisitionRequest, acquire
from .pgp import (ConvergenceError, LatentPosterior, RbfKernel, classify_binary, classify_multiclass,
                  fit_binary_laplace, fit_multiclass_laplace, fit_regression, kernel_matrix,
                  predict_prob_averaged, predict_prob_mode, regress)
from .possibility import (CovarianceReport, GaussianPossibility, GridPossibility, bayes_update, condition,
                          linear_map, marginalize, precision_at_mode)
from .uncertainty import (maximize_scalar, nec_bin, nec_multi, u_l_bin, u_l_multi, u_theta_gaussian,
                          u_theta_grid, u_y_discrete)

__version__ = "0.1.0"

__all__ = [
    "SCORERS", "AcquisitionRequest", "acquire",
    "ConvergenceError", "LatentPosterior", "RbfKernel", "classify_binary", "classify_multiclass",
    "fit_binary_laplace", "fit_multiclass_laplace", "fit_regression", "kernel_matrix",
    "predict_prob_averaged", "predict_prob_mode", "regress",
    "CovarianceReport", "GaussianPossibility", "GridPossibility", "bayes_update", "condition",
    "linear_map", "marginalize", "precision_at_mode",
    "maximize_scalar", "nec_bin", "nec_multi", "u_l_bin", "u_l_multi", "u_theta_gaussian",
    "u_theta_grid", "u_y_discrete",
]
