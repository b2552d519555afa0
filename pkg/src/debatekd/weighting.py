"""Confidence-score normalization and the weighted multi-teacher token loss.

Teachers self-report scalar confidences in [0, 100]; unit-scaled scores go
through a softmax with temperature to produce per-teacher loss weights. The
token loss is the w-weighted sum of per-teacher divergences against one
student logit row; by linearity its gradient is the same weighted sum of
per-teacher gradients, and teacher distributions are constants.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .divergence import DivergenceKind, GradientReport, divergence_value, logit_gradient
from .simplex import Distribution, LogitVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConfidenceScores:
    """Per-teacher self-reported confidences with a softmax temperature."""

    scores: np.ndarray
    tau_conf: float = 1.0

    def __post_init__(self):
        scores = np.atleast_1d(np.asarray(self.scores, dtype=np.float64))
        if scores.size < 1:
            raise ValueError("need at least one confidence score")
        if not np.all(np.isfinite(scores)):
            raise ValueError("confidence scores must be finite")
        if np.any(scores < 0) or np.any(scores > 100):
            raise ValueError(f"confidence scores must lie in [0, 100], got {scores}")
        if self.tau_conf <= 0:
            raise ValueError(f"tau_conf must be positive, got {self.tau_conf}")
        scores = scores.copy()
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)

    @staticmethod
    def from_raw(scores, tau_conf: float = 1.0) -> "ConfidenceScores":
        """Adapter entry point: clamp out-of-range scores to [0, 100].

        Teacher adapters own parsing; a malformed or missing report should
        arrive here as 0. Clamping is logged rather than silent.
        """
        arr = np.atleast_1d(np.asarray(scores, dtype=np.float64))
        arr = np.where(np.isfinite(arr), arr, 0.0)
        clamped = np.clip(arr, 0.0, 100.0)
        if np.any(clamped != arr):
            logger.warning("clamped out-of-range confidence scores %s -> %s", arr, clamped)
        return ConfidenceScores(clamped, tau_conf)

    @property
    def num_teachers(self) -> int:
        return self.scores.size


@dataclass(frozen=True)
class TeacherWeights:
    """Strictly positive per-teacher weights summing to one."""

    weights: np.ndarray

    def __post_init__(self):
        weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if np.any(weights <= 0):
            raise ValueError("every teacher weight must be strictly positive")
        if abs(float(weights.sum()) - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {weights.sum()}, expected 1 within 1e-12")
        weights = weights.copy()
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @staticmethod
    def uniform(k: int) -> "TeacherWeights":
        return TeacherWeights(np.full(k, 1.0 / k))

    @property
    def num_teachers(self) -> int:
        return self.weights.size


def confidence_to_weights(c: ConfidenceScores) -> TeacherWeights:
    """Softmax of unit-scaled confidences: w_k proportional to exp((c_k/100)/tau).

    Invariant under adding a common offset to all scores, so only relative
    confidence enters the loss. A single teacher always gets weight 1.
    """
    scaled = (c.scores / 100.0) / c.tau_conf
    shifted = np.exp(scaled - scaled.max())
    return TeacherWeights(shifted / shifted.sum())


@dataclass(frozen=True)
class TokenLossReport:
    """Weighted multi-teacher loss at one token position.

    Carries the per-teacher sub-losses so an infinite total can be traced to
    the offending teacher.
    """

    value: float
    logit_grad: np.ndarray
    inf_norm: float
    teacher_losses: np.ndarray

    @property
    def offending_teachers(self) -> list[int]:
        return [k for k, v in enumerate(self.teacher_losses) if math.isinf(v)]

    def as_gradient_report(self) -> GradientReport:
        return GradientReport(self.value, self.logit_grad, self.inf_norm)


def multi_teacher_token_loss(
    kind: DivergenceKind,
    teacher_dists: list[Distribution],
    w: TeacherWeights,
    student_z: LogitVector,
) -> TokenLossReport:
    """Confidence-weighted token objective sum_k w_k * D(p_k || softmax(z)).

    Teacher distributions are stop-gradient targets: the gradient is the
    w-weighted sum of the per-teacher logit gradients. With K=1 this reduces
    exactly to the single-teacher divergence.
    """
    k = len(teacher_dists)
    if k != w.num_teachers:
        raise ValueError(f"{k} teacher distributions but {w.num_teachers} weights")
    vocab = student_z.vocab_size
    for idx, p in enumerate(teacher_dists):
        if p.vocab_size != vocab:
            raise ValueError(f"teacher {idx} vocab {p.vocab_size} != student vocab {vocab}")

    sub_losses = np.empty(k)
    total = 0.0
    grad = np.zeros(vocab)
    for idx, p in enumerate(teacher_dists):
        rep = logit_gradient(kind, p, student_z)
        sub_losses[idx] = rep.value
        total += w.weights[idx] * rep.value
        grad = grad + w.weights[idx] * rep.logit_grad
    with np.errstate(invalid="ignore"):
        inf_norm = float(np.max(np.abs(grad)))
    return TokenLossReport(
        value=float(total), logit_grad=grad, inf_norm=inf_norm, teacher_losses=sub_losses
    )


def multi_teacher_value(
    kind: DivergenceKind, teacher_dists: list[Distribution], w: TeacherWeights, q: Distribution
) -> float:
    """Loss-only variant for callers that have a Distribution, not logits."""
    if len(teacher_dists) != w.num_teachers:
        raise ValueError("weights do not match the number of teachers")
    return float(
        sum(wk * divergence_value(kind, p, q) for wk, p in zip(w.weights, teacher_dists))
    )
