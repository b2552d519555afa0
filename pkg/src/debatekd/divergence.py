"""Forward KL, reverse KL, and JSD over categorical distributions.

Each divergence comes with its closed-form gradient with respect to the
student's pre-softmax logits (the teacher is a fixed target: gradients flow
only through the student), a central-finite-difference oracle, and two
probes that stress the boundedness results: the JSD loss/gradient ceilings
and the reverse-KL blow-up as teacher mass vanishes on student-supported
tokens.

Conventions: natural logs, 0*log(0) := 0, and the reverse direction is
defined as rev(p||q) := KL(q||p). Infinite losses are reported as a genuine
+inf sentinel, never clamped; training paths are expected to pre-floor
teacher targets (simplex.floor_and_renormalize) to stay finite.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .simplex import Distribution, LogitVector, softmax

#: Loose headline ceiling on the JSD logit gradient inf-norm.
JSD_GRAD_HEADLINE_BOUND = 2.0
#: Sharper ceiling 1/4 + 2/sqrt(e) from the term-by-term derivation.
JSD_GRAD_TIGHT_BOUND = 0.25 + 2.0 / math.sqrt(math.e)


@dataclass(frozen=True)
class DivergenceKind:
    """Selector for the divergence used as the distillation objective."""

    name: str
    beta: float = 0.5

    def __post_init__(self):
        if self.name not in ("forward_kl", "reverse_kl", "jsd"):
            raise ValueError(f"unknown divergence kind: {self.name!r}")
        if self.name == "jsd" and not 0.0 < self.beta < 1.0:
            raise ValueError(f"jsd beta must lie strictly inside (0, 1), got {self.beta}")

    def __str__(self) -> str:
        if self.name == "jsd":
            return f"jsd:{self.beta}"
        return {"forward_kl": "fwd", "reverse_kl": "rev"}[self.name]


FORWARD_KL = DivergenceKind("forward_kl")
REVERSE_KL = DivergenceKind("reverse_kl")


def jsd_kind(beta: float = 0.5) -> DivergenceKind:
    return DivergenceKind("jsd", beta)


def parse_kind(spec: str) -> DivergenceKind:
    """Parse 'fwd' | 'rev' | 'jsd[:beta]' into a DivergenceKind."""
    spec = spec.strip().lower()
    if spec == "fwd":
        return FORWARD_KL
    if spec == "rev":
        return REVERSE_KL
    if spec == "jsd":
        return jsd_kind()
    if spec.startswith("jsd:"):
        return jsd_kind(float(spec.split(":", 1)[1]))
    raise ValueError(f"cannot parse divergence kind {spec!r} (want fwd|rev|jsd:<beta>)")


def jsd_loss_bound(beta: float) -> float:
    """Binary-entropy ceiling H(beta) on the JSD loss; log 2 at beta=0.5."""
    return float(-(beta * math.log(beta) + (1 - beta) * math.log(1 - beta)))


@dataclass(frozen=True)
class GradientReport:
    """Loss value plus its gradient with respect to student logits."""

    value: float
    logit_grad: np.ndarray
    inf_norm: float

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value) and bool(np.all(np.isfinite(self.logit_grad)))


def _check_same_vocab(p: Distribution, q: Distribution) -> None:
    if p.vocab_size != q.vocab_size:
        raise ValueError(f"vocab mismatch: {p.vocab_size} vs {q.vocab_size}")


def _kl(a: np.ndarray, b: np.ndarray) -> float:
    """KL(a||b) with 0*log(0)=0; +inf when a charges a b-null token."""
    pos = a > 0
    if np.any(b[pos] == 0):
        return math.inf
    val = float(np.sum(a[pos] * np.log(a[pos] / b[pos])))
    return max(val, 0.0)


def divergence_value(kind: DivergenceKind, p: Distribution, q: Distribution) -> float:
    """Evaluate the divergence between teacher p and student q.

    Returns +inf for forward KL when q misses p-support, and for reverse KL
    when p misses q-support. JSD is always finite and at most H(beta).
    """
    _check_same_vocab(p, q)
    if kind.name == "forward_kl":
        return _kl(p.probs, q.probs)
    if kind.name == "reverse_kl":
        return _kl(q.probs, p.probs)
    if np.array_equal(p.probs, q.probs):
        return 0.0  # identity holds exactly; the mixture would round otherwise
    beta = kind.beta
    m = beta * p.probs + (1 - beta) * q.probs
    return beta * _kl(p.probs, m) + (1 - beta) * _kl(q.probs, m)


def _report(value: float, grad: np.ndarray) -> GradientReport:
    grad = np.asarray(grad, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        inf_norm = float(np.max(np.abs(grad)))
    return GradientReport(value=value, logit_grad=grad, inf_norm=inf_norm)


def logit_gradient(kind: DivergenceKind, p: Distribution, z: LogitVector) -> GradientReport:
    """Closed-form gradient of divergence(p, softmax(z)) in the logits z.

    Forward KL collapses to q - p. Reverse KL yields
    sum_v q(v) (delta_iv - q(i)) log(q(v)/p(v)), which diverges as teacher
    mass on a student-supported token goes to zero; with exact zeros the
    report carries +/-inf entries and the caller is expected to have floored
    p if it wanted finite output. JSD combines the two mixture-KL terms via
    the softmax Jacobian and is uniformly bounded.
    """
    if p.vocab_size != z.vocab_size:
        raise ValueError(f"vocab mismatch: {p.vocab_size} vs {z.vocab_size}")
    q = softmax(z).probs
    pv = p.probs

    if kind.name == "forward_kl":
        return _report(_kl(pv, q), q - pv)

    if kind.name == "reverse_kl":
        if np.any(pv == 0):
            # q is strictly positive, so any exact teacher zero blows up:
            # +inf on the missing tokens, -inf everywhere else.
            grad = np.where(pv == 0, math.inf, -math.inf)
            return _report(math.inf, grad)
        t = np.log(q / pv)
        total = float(np.dot(q, t))
        return _report(max(total, 0.0), q * (t - total))

    beta = kind.beta
    m = beta * pv + (1 - beta) * q  # strictly positive: q > 0 everywhere
    r = pv * q / m
    grad_p_term = -(1 - beta) * (r - q * r.sum())
    ell = np.log(q / m)
    x = q * (ell - float(np.dot(q, ell)))
    s = q * q / m
    y = (1 - beta) * (s - q * s.sum())
    grad = beta * grad_p_term + (1 - beta) * (x - y)
    value = beta * _kl(pv, m) + (1 - beta) * _kl(q, m)
    return _report(value, grad)


def finite_difference_gradient(
    kind: DivergenceKind, p: Distribution, z: LogitVector, h: float = 1e-6
) -> np.ndarray:
    """Central-difference oracle for logit_gradient.

    Coordinates whose stencil hits a non-finite loss are skipped and
    reported as NaN so the caller can exclude them from comparisons.
    """
    if not 1e-8 <= h <= 1e-4:
        raise ValueError(f"h must lie in [1e-8, 1e-4], got {h}")
    base = z.logits
    grad = np.empty(base.size)
    for i in range(base.size):
        zp = base.copy()
        zp[i] += h
        zm = base.copy()
        zm[i] -= h
        fp = divergence_value(kind, p, softmax(LogitVector(zp)))
        fm = divergence_value(kind, p, softmax(LogitVector(zm)))
        if math.isfinite(fp) and math.isfinite(fm):
            grad[i] = (fp - fm) / (2 * h)
        else:
            grad[i] = math.nan
    return grad


@dataclass
class BoundProbeReport:
    """Result of a randomized sweep against the JSD loss/gradient ceilings."""

    beta: float
    n_trials: int
    vocab_sizes: list[int]
    max_loss: float
    max_inf_norm: float
    max_fwd_inf_norm: float
    loss_bound: float
    grad_bound_tight: float = JSD_GRAD_TIGHT_BOUND
    grad_bound_headline: float = JSD_GRAD_HEADLINE_BOUND
    witness_loss: dict = field(default_factory=dict)
    witness_grad: dict = field(default_factory=dict)

    def to_json(self) -> str:
        payload = {
            "kind": "jsd",
            "beta": self.beta,
            "n_trials": self.n_trials,
            "vocab_sizes": self.vocab_sizes,
            "max_loss": self.max_loss,
            "max_inf_norm": self.max_inf_norm,
            "max_fwd_inf_norm": self.max_fwd_inf_norm,
            "loss_bound": self.loss_bound,
            "grad_bound_tight": self.grad_bound_tight,
            "grad_bound_headline": self.grad_bound_headline,
            "witness_loss": self.witness_loss,
            "witness_grad": self.witness_grad,
        }
        return json.dumps(payload, indent=2)


def _adversarial_pair(vocab: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Near-disjoint pair: p on the left half, q on the right, with cross
    mass log-uniform down to 1e-300. The JSD sup lives out here."""
    half = vocab // 2
    t = 10.0 ** rng.uniform(-300, -2)
    p = np.full(vocab, t / max(vocab - half, 1))
    p[:half] = (1 - t) / half
    u = 10.0 ** rng.uniform(-300, -2)
    q = np.full(vocab, u / half)
    q[half:] = (1 - u) / max(vocab - half, 1)
    return p / p.sum(), q / q.sum()


def _spike_pair(vocab: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """p concentrated off one coordinate where q holds a moderate spike;
    the gradient inf-norm peaks for spikes around 0.7, not at point masses."""
    t = 10.0 ** rng.uniform(-300, -8)
    p = np.full(vocab, (1 - t) / (vocab - 1))
    p[0] = t
    spike = rng.uniform(0.3, 0.9)
    q = np.full(vocab, (1 - spike) / (vocab - 1))
    q[0] = spike
    return p / p.sum(), q / q.sum()


def _random_pair(vocab: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    alpha = rng.choice([0.1, 1.0, 10.0])
    p = rng.dirichlet(np.full(vocab, alpha))
    q = rng.dirichlet(np.full(vocab, rng.choice([0.1, 1.0, 10.0])))
    # Dirichlet(0.1) can underflow entries to exact zero; keep q usable as
    # softmax output by flooring it at a subnormal-safe level.
    q = np.maximum(q, 1e-300)
    return p, q / q.sum()


def jsd_bound_probe(
    n_trials: int,
    vocab_sizes: list[int],
    rng: np.random.Generator,
    beta: float = 0.5,
) -> BoundProbeReport:
    """Sweep random + adversarial (p, q) pairs against the JSD ceilings.

    Tracks the maximum observed loss, JSD gradient inf-norm, and forward-KL
    gradient inf-norm, together with the witness pairs that attained them.
    The disjoint point-mass pair (which attains the loss sup exactly) is
    always included.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    kind = jsd_kind(beta)
    max_loss, max_grad, max_fwd = -1.0, -1.0, -1.0
    wit_loss: dict = {}
    wit_grad: dict = {}

    for v in vocab_sizes:
        pm0 = Distribution.point_mass(0, v)
        pm1 = Distribution.point_mass(1, v)
        loss = divergence_value(kind, pm0, pm1)
        if loss > max_loss:
            max_loss = loss
            wit_loss = {"vocab": v, "p": pm0.probs.tolist(), "q": pm1.probs.tolist()}

    for trial in range(n_trials):
        v = int(vocab_sizes[trial % len(vocab_sizes)])
        if trial % 4 == 0:
            p, q = _adversarial_pair(v, rng)
        elif trial % 4 == 2:
            p, q = _spike_pair(v, rng)
        else:
            p, q = _random_pair(v, rng)
        pd, qd = Distribution(p), Distribution(q)
        loss = divergence_value(kind, pd, qd)
        if loss > max_loss:
            max_loss = loss
            wit_loss = {"vocab": v, "p": p.tolist(), "q": q.tolist()}
        z = LogitVector(np.log(q))
        rep = logit_gradient(kind, pd, z)
        if rep.inf_norm > max_grad:
            max_grad = rep.inf_norm
            wit_grad = {"vocab": v, "p": p.tolist(), "q": q.tolist()}
        fwd_norm = float(np.max(np.abs(softmax(z).probs - p)))
        max_fwd = max(max_fwd, fwd_norm)

    return BoundProbeReport(
        beta=beta,
        n_trials=n_trials,
        vocab_sizes=[int(v) for v in vocab_sizes],
        max_loss=max_loss,
        max_inf_norm=max_grad,
        max_fwd_inf_norm=max_fwd,
        loss_bound=jsd_loss_bound(beta),
        witness_loss=wit_loss,
        witness_grad=wit_grad,
    )


def revkl_unboundedness_probe(deltas: list[float], vocab_size: int = 2) -> dict[float, float]:
    """Witness family for the reverse-KL gradient blow-up.

    For each delta, the teacher puts mass delta on token 0 (spread over the
    remaining tokens) against a uniform student; the gradient inf-norm grows
    like log(1/delta) as delta shrinks. Returns {delta: inf_norm}.
    """
    out: dict[float, float] = {}
    z = LogitVector(np.zeros(vocab_size))
    for delta in deltas:
        if not 0 < delta <= 0.5:
            raise ValueError(f"delta must lie in (0, 0.5], got {delta}")
        p = np.full(vocab_size, (1 - delta) / (vocab_size - 1))
        p[0] = delta
        rep = logit_gradient(REVERSE_KL, Distribution(p), z)
        out[float(delta)] = rep.inf_norm
    return out
