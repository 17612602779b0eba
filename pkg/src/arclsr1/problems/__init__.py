"""Objective functions: analytic tests, logistic regression, small MLPs."""
from .base import BatchView, Objective, finite_difference_gradient, gradient_error
from .data import Dataset, load_idx, load_iris, synth_blobs
from .functions import (
    DiagonalQuadratic,
    LogisticRegression,
    Quadratic,
    Rosenbrock,
    logistic_regression,
    quadratic,
    random_spd,
    rosenbrock,
)
from .mlp import IRIS_PARAMS, Mlp, MlpSpec, autoencoder_spec, iris_spec, mlp

__all__ = [
    "BatchView", "Objective", "finite_difference_gradient", "gradient_error",
    "Dataset", "load_idx", "load_iris", "synth_blobs",
    "DiagonalQuadratic", "LogisticRegression", "Quadratic", "Rosenbrock",
    "logistic_regression", "quadratic", "random_spd", "rosenbrock",
    "IRIS_PARAMS", "Mlp", "MlpSpec", "autoencoder_spec", "iris_spec", "mlp",
]
