"""Categorical distributions and logit vectors with numeric hygiene.

Foundational value types used everywhere else: probability vectors on a
finite vocabulary, pre-softmax logit vectors, and seeded RNG streams.
All probability arithmetic is double precision and every log is natural.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

#: Smoothing floor applied to teacher targets during training. Theory probes
#: use eps=0 (exact semantics, infinite losses allowed).
DEFAULT_FLOOR = 1e-8

#: Largest allowed logit spread. Beyond ~745 the smallest softmax entry
#: underflows to exact zero in float64, breaking strict positivity.
_MAX_LOGIT_SPREAD = 700.0

_PROB_SUM_TOL = 1e-9


@dataclass(frozen=True)
class Distribution:
    """A point on the probability simplex over a finite vocabulary."""

    probs: np.ndarray

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1:
            raise ValueError(f"probs must be 1-d, got shape {probs.shape}")
        if probs.size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {probs.size}")
        if not np.all(np.isfinite(probs)):
            raise ValueError("probs contain non-finite entries")
        if np.any(probs < 0):
            raise ValueError(f"negative probability entry: min={probs.min()}")
        total = float(probs.sum())
        if abs(total - 1.0) > _PROB_SUM_TOL:
            raise ValueError(f"probs sum to {total}, expected 1 within {_PROB_SUM_TOL}")
        probs = probs.copy()
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def vocab_size(self) -> int:
        return self.probs.size

    @staticmethod
    def uniform(vocab_size: int) -> "Distribution":
        return Distribution(np.full(vocab_size, 1.0 / vocab_size))

    @staticmethod
    def point_mass(index: int, vocab_size: int) -> "Distribution":
        probs = np.zeros(vocab_size)
        probs[index] = 1.0
        return Distribution(probs)

    @staticmethod
    def from_weights(weights: np.ndarray) -> "Distribution":
        """Normalize a vector of non-negative weights into a Distribution."""
        weights = np.asarray(weights, dtype=np.float64)
        total = weights.sum()
        if not np.isfinite(total) or total <= 0:
            raise ValueError("weights must have a positive finite sum")
        return Distribution(weights / total)


@dataclass(frozen=True)
class LogitVector:
    """Finite pre-softmax logits whose softmax is strictly positive."""

    logits: np.ndarray

    def __post_init__(self):
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 1:
            raise ValueError(f"logits must be 1-d, got shape {logits.shape}")
        if logits.size < 2:
            raise ValueError(f"vocab_size must be >= 2, got {logits.size}")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits contain non-finite entries")
        spread = float(logits.max() - logits.min())
        if spread > _MAX_LOGIT_SPREAD:
            raise ValueError(
                f"logit spread {spread:.1f} exceeds {_MAX_LOGIT_SPREAD}; "
                "softmax would underflow to exact zero"
            )
        logits = logits.copy()
        logits.flags.writeable = False
        object.__setattr__(self, "logits", logits)

    @property
    def vocab_size(self) -> int:
        return self.logits.size


def softmax(z: LogitVector) -> Distribution:
    """Softmax with max-subtraction; shift invariant and strictly positive."""
    shifted = z.logits - z.logits.max()
    expz = np.exp(shifted)
    return Distribution(expz / expz.sum())


def log_softmax(z: LogitVector) -> np.ndarray:
    shifted = z.logits - z.logits.max()
    return shifted - np.log(np.exp(shifted).sum())


def xlogx(x: np.ndarray) -> np.ndarray:
    """Elementwise x*log(x) with the explicit 0*log(0) := 0 branch."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = x[pos] * np.log(x[pos])
    return out


def entropy(p: Distribution) -> float:
    """Shannon entropy in nats; 0 at point masses, log|V| at uniform."""
    return float(-xlogx(p.probs).sum())


def sample(p: Distribution, rng: np.random.Generator, size: int | None = None):
    """Draw token id(s) from p. Deterministic given the generator state."""
    return rng.choice(p.vocab_size, size=size, p=p.probs / p.probs.sum())


def floor_and_renormalize(p: Distribution, eps: float) -> Distribution:
    """Raise every entry to at least eps, then renormalize.

    eps=0 is the identity; the uniform distribution is a fixed point for any
    valid eps. Every output entry is at least eps/(1 + |V|*eps).
    """
    if not 0 <= eps < 1.0 / p.vocab_size:
        raise ValueError(f"eps must be in [0, 1/|V|) = [0, {1.0 / p.vocab_size}), got {eps}")
    if eps == 0:
        return p
    floored = np.maximum(p.probs, eps)
    return Distribution(floored / floored.sum())


@dataclass(frozen=True)
class RngSeed:
    """Master seed from which labeled, independent streams are derived.

    The same (seed, label) pair always yields a generator producing a
    bit-identical draw sequence, so adding a new stream never perturbs
    existing ones.
    """

    seed: int = field(default=0)

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    def stream(self, label: str = "") -> np.random.Generator:
        """Derive an independent generator for the given label."""
        digest = hashlib.sha256(label.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        ss = np.random.SeedSequence([self.seed, *words])
        return np.random.Generator(np.random.PCG64(ss))
