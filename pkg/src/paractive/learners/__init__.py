from paractive.learners.base import (
    InvariantViolation,
    Learner,
    NumericError,
    SiftedExample,
)
from paractive.learners.finite import FiniteERM, ThresholdClass
from paractive.learners.nn import NeuralNet
from paractive.learners.svm import KernelSVM

__all__ = [
    "FiniteERM",
    "InvariantViolation",
    "KernelSVM",
    "Learner",
    "NeuralNet",
    "NumericError",
    "SiftedExample",
    "ThresholdClass",
]
