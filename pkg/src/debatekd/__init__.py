"""Desk-scale laboratory for debate-driven on-policy distillation."""

__version__ = "0.1.0"

from .divergence import (
    FORWARD_KL,
    REVERSE_KL,
    DivergenceKind,
    GradientReport,
    divergence_value,
    finite_difference_gradient,
    jsd_kind,
    logit_gradient,
    parse_kind,
)
from .simplex import (
    Distribution,
    LogitVector,
    RngSeed,
    entropy,
    floor_and_renormalize,
    sample,
    softmax,
)
from .weighting import (
    ConfidenceScores,
    TeacherWeights,
    confidence_to_weights,
    multi_teacher_token_loss,
)

__all__ = [
    "__version__",
    "Distribution",
    "LogitVector",
    "RngSeed",
    "entropy",
    "floor_and_renormalize",
    "sample",
    "softmax",
    "DivergenceKind",
    "GradientReport",
    "FORWARD_KL",
    "REVERSE_KL",
    "jsd_kind",
    "parse_kind",
    "divergence_value",
    "logit_gradient",
    "finite_difference_gradient",
    "ConfidenceScores",
    "TeacherWeights",
    "confidence_to_weights",
    "multi_teacher_token_loss",
]
