"""Bayesian inversion of matrix-variate data with a vector-variate GP emulator."""
from .kernels import BACKEND
from .core_model import (
    TrainingSet,
    basis_vector,
    cross_kernel_vector,
    devectorize,
    kernel_matrix,
    kernel_value,
    kron_covariance,
    matrix_normal_logpdf,
    vectorize,
)
from .posterior import ErrorModel, InverseProblem, PosteriorState, log_posterior

__version__ = "0.1.0"
