"""Multi-step trajectory training against debating teachers.

A synthetic tool-use world supplies states whose correct action is a
(tool, arg) token pair. Each outer iteration rolls out an on-policy
trajectory, debates the teachers at every visited state, force-decodes the
sampled action against the post-debate teacher tables, and applies one
gradient update to the student's visited logit rows. Teachers see debate
transcripts; the student never does: its entire context is the state key
and its own sampled tokens.

Per-step loss is the token mean of the confidence-weighted multi-teacher
divergence over the action's two positions; the trajectory loss sums
per-step contributions (a whole-trajectory token mean is available behind
the reduction flag for the single-step case).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .debate import DebateResult, Teacher, run_debate
from .divergence import DivergenceKind
from .simplex import (
    DEFAULT_FLOOR,
    Distribution,
    LogitVector,
    RngSeed,
    floor_and_renormalize,
    sample,
    softmax,
)
from .weighting import (
    ConfidenceScores,
    TeacherWeights,
    TokenLossReport,
    confidence_to_weights,
    multi_teacher_token_loss,
)

Action = tuple[int, int]


class Observation(enum.Enum):
    OK = "ok"
    ERR = "err"


@dataclass(frozen=True)
class ToolWorld:
    """Deterministic tool-use environment over integer state keys.

    correct_action gives the canonical answer per state; accepted_actions
    optionally widens it to a set of equally valid answers (defaults to the
    singleton), which is what makes multi-strategy worlds expressible.
    The transition ignores the action by default (cyclic increment).
    """

    n_states: int
    n_tools: int
    n_args: int
    correct_action: dict[int, Action]
    accepted_actions: dict[int, frozenset[Action]] | None = None
    transition: Callable[[int, Action], int] | None = None
    max_steps: int = 4

    def __post_init__(self):
        if self.n_states < 1 or self.n_tools < 2 or self.n_args < 2:
            raise ValueError("need n_states >= 1 and at least 2 tools and 2 args")
        for s in range(self.n_states):
            if s not in self.correct_action:
                raise ValueError(f"correct_action missing state {s}")
            tool, arg = self.correct_action[s]
            if not (0 <= tool < self.n_tools and 0 <= arg < self.n_args):
                raise ValueError(f"correct_action[{s}] = {(tool, arg)} out of range")

    def accepted(self, state: int) -> frozenset[Action]:
        if self.accepted_actions is not None:
            return self.accepted_actions[state]
        return frozenset({self.correct_action[state]})

    def next_state(self, state: int, action: Action) -> int:
        if self.transition is not None:
            return self.transition(state, action)
        return (state + 1) % self.n_states

    def flat_action(self, action: Action) -> int:
        return action[0] * self.n_args + action[1]

    def unflatten(self, flat: int) -> Action:
        return (flat // self.n_args, flat % self.n_args)

    @property
    def joint_vocab(self) -> int:
        return self.n_tools * self.n_args


@dataclass(frozen=True)
class Trajectory:
    """On-policy rollout: per-step (state, sampled action, observation)."""

    steps: tuple[tuple[int, Action, Observation], ...]

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class StudentPolicy:
    """Tabular policy: per-state tool logits and per-tool arg logits.

    Actions decode autoregressively: the tool row conditions only on the
    state, the arg row on the state and the sampled tool. Rows are plain
    logit arrays mutated in place by training updates.
    """

    tool_logits: np.ndarray  # (n_states, n_tools)
    arg_logits: np.ndarray  # (n_states, n_tools, n_args)
    eta: float = 0.1
    grad_clip: float | None = None

    @staticmethod
    def uniform(world: ToolWorld, eta: float = 0.1) -> "StudentPolicy":
        return StudentPolicy(
            tool_logits=np.zeros((world.n_states, world.n_tools)),
            arg_logits=np.zeros((world.n_states, world.n_tools, world.n_args)),
            eta=eta,
        )

    @staticmethod
    def oracle(world: ToolWorld, margin: float = 20.0) -> "StudentPolicy":
        policy = StudentPolicy.uniform(world)
        for s in range(world.n_states):
            tool, arg = world.correct_action[s]
            policy.tool_logits[s, tool] = margin
            policy.arg_logits[s, tool, arg] = margin
        return policy

    def tool_row(self, state: int) -> LogitVector:
        return LogitVector(self.tool_logits[state])

    def arg_row(self, state: int, tool: int) -> LogitVector:
        return LogitVector(self.arg_logits[state, tool])

    def sample_action(self, state: int, rng: np.random.Generator) -> Action:
        tool = int(sample(softmax(self.tool_row(state)), rng))
        arg = int(sample(softmax(self.arg_row(state, tool)), rng))
        return (tool, arg)

    def argmax_action(self, state: int) -> Action:
        tool = int(np.argmax(self.tool_logits[state]))
        arg = int(np.argmax(self.arg_logits[state, tool]))
        return (tool, arg)


@dataclass(frozen=True)
class StepRecord:
    """Instrumentation for one token position of one trajectory step."""

    iteration: int
    step: int
    token: int
    loss: float
    grad_inf_norm: float
    teacher_losses: np.ndarray
    weights: np.ndarray


class NumericAbort(RuntimeError):
    """Student logits left the finite range during an update."""

    def __init__(self, iteration: int, step: int):
        self.iteration = iteration
        self.step = step
        super().__init__(f"non-finite student logits after iteration {iteration}, step {step}")


def rollout(
    world: ToolWorld, policy: StudentPolicy, x: int, rng: np.random.Generator
) -> Trajectory:
    """Sample exactly max_steps actions on-policy from the start state x."""
    steps = []
    state = x
    for _ in range(world.max_steps):
        action = policy.sample_action(state, rng)
        obs = Observation.OK if action in world.accepted(state) else Observation.ERR
        steps.append((state, action, obs))
        state = world.next_state(state, action)
    return Trajectory(steps=tuple(steps))


def force_decode_targets(
    world: ToolWorld,
    post_dists: tuple[Distribution, ...],
    sampled_tool: int,
    eps: float,
) -> tuple[list[Distribution], list[Distribution]]:
    """Per-position teacher targets from post-debate joint action tables.

    Position 1 target is each teacher's tool marginal; position 2 is its
    arg distribution conditioned on the student's sampled tool (the teacher
    scores the student's token sequence, it does not re-decide the tool).
    Both are floored at eps afterward.
    """
    tool_targets, arg_targets = [], []
    for post in post_dists:
        joint = post.probs.reshape(world.n_tools, world.n_args)
        marginal = joint.sum(axis=1)
        row = joint[sampled_tool]
        row_mass = row.sum()
        if row_mass <= 0:
            raise ValueError(
                f"teacher assigns zero mass to sampled tool {sampled_tool}; "
                "cannot condition the arg position"
            )
        tool_targets.append(
            floor_and_renormalize(Distribution(marginal / marginal.sum()), eps)
        )
        arg_targets.append(floor_and_renormalize(Distribution(row / row_mass), eps))
    return tool_targets, arg_targets


def step_token_losses(
    kind: DivergenceKind,
    world: ToolWorld,
    post_dists: tuple[Distribution, ...],
    w: TeacherWeights,
    policy: StudentPolicy,
    state: int,
    action: Action,
    eps: float,
    allow_infinite: bool = False,
) -> tuple[TokenLossReport, TokenLossReport]:
    """Weighted token losses at the action's two positions.

    Teacher tables are conditioned on the debate (they are post-debate
    distributions); the student rows are conditioned on the state and its
    own sampled tool only. Positions are gradient-decoupled: each report's
    gradient lives entirely in its own logit row.
    """
    tool, _ = action
    tool_targets, arg_targets = force_decode_targets(world, post_dists, tool, eps)
    tool_rep = multi_teacher_token_loss(kind, tool_targets, w, policy.tool_row(state))
    arg_rep = multi_teacher_token_loss(kind, arg_targets, w, policy.arg_row(state, tool))
    if not allow_infinite and not (
        np.isfinite(tool_rep.value) and np.isfinite(arg_rep.value)
    ):
        offenders = tool_rep.offending_teachers + arg_rep.offending_teachers
        raise ValueError(
            f"infinite {kind.name} loss at state {state} (teachers {offenders}); "
            "training mode requires eps-floored targets"
        )
    return tool_rep, arg_rep


@dataclass
class TrainConfig:
    """Hyperparameters for a training run; see module docstring for loop shape."""

    kind: DivergenceKind
    rounds: int = 2
    iterations: int = 500
    eta: float = 0.1
    eps: float = DEFAULT_FLOOR
    tau_conf: float = 1.0
    seed: int = 0
    grad_clip: float | None = None
    debate_cache: bool = True
    reduction: str = "step_sum"  # or "token_mean": whole-trajectory token mean

    def __post_init__(self):
        if self.rounds < 1 or self.iterations < 1:
            raise ValueError("rounds and iterations must be >= 1")
        if self.eta < 0 or self.eps < 0:
            raise ValueError("eta and eps must be non-negative")
        if self.reduction not in ("step_sum", "token_mean"):
            raise ValueError(f"unknown reduction {self.reduction!r}")
        if self.kind.name in ("forward_kl", "reverse_kl") and self.eps == 0:
            raise ValueError(
                f"{self.kind.name} training requires a positive teacher floor eps"
            )


@dataclass
class TrainResult:
    """Run artifact: series, per-token records, and the trained policy."""

    loss_series: np.ndarray
    accuracy_series: np.ndarray
    records: list[StepRecord]
    policy: StudentPolicy
    final_accuracy: float
    metrics_rows: list[tuple]
    aborted: dict | None = None


def task_accuracy(policy: StudentPolicy, world: ToolWorld) -> float:
    """Fraction of states whose greedy (tool, arg) decode is accepted.

    Argmax ties break toward the lowest token id.
    """
    hits = sum(
        1 for s in range(world.n_states) if policy.argmax_action(s) in world.accepted(s)
    )
    return hits / world.n_states


def _clip(grad: np.ndarray, clip: float | None) -> np.ndarray:
    if clip is None:
        return grad
    norm = float(np.max(np.abs(grad)))
    if norm > clip:
        return grad * (clip / norm)
    return grad


def _row_usable(row: np.ndarray) -> bool:
    """A logit row the next iteration can still softmax: finite entries
    whose spread does not underflow the smallest probability to zero."""
    if not np.all(np.isfinite(row)):
        return False
    with np.errstate(over="ignore"):
        return float(row.max() - row.min()) <= 700.0


def train(world: ToolWorld, teachers: list[Teacher], config: TrainConfig) -> TrainResult:
    """Run the full on-policy loop; deterministic given config.seed.

    Per iteration: draw a start state, roll out max_steps actions with the
    current policy, debate each visited state once (cached within the
    iteration unless disabled), force-decode every sampled action against
    final-round teacher tables with confidence weights, sum the per-step
    token-mean losses, and apply one gradient step to the visited rows.
    Teacher tables are never mutated. A non-finite logit aborts the run
    with the offending step recorded.
    """
    rollout_rng = RngSeed(config.seed).stream("rollout")
    policy = StudentPolicy.uniform(world, eta=config.eta)
    policy.grad_clip = config.grad_clip

    loss_series = np.zeros(config.iterations)
    acc_series = np.zeros(config.iterations)
    records: list[StepRecord] = []
    rows: list[tuple] = []
    kind_label = str(config.kind)
    aborted = None

    for it in range(config.iterations):
        x = int(rollout_rng.integers(world.n_states))
        traj = rollout(world, policy, x, rollout_rng)

        debate_cache: dict[int, DebateResult] = {}
        tool_grads: dict[int, np.ndarray] = {}
        arg_grads: dict[tuple[int, int], np.ndarray] = {}
        token_scale = 0.5 if config.reduction == "step_sum" else 1.0 / (2 * len(traj))
        total_loss = 0.0
        iter_records = []

        for m, (state, action, _obs) in enumerate(traj.steps):
            if config.debate_cache and state in debate_cache:
                result = debate_cache[state]
            else:
                result = run_debate(teachers, state, config.rounds)
                debate_cache[state] = result
            scores = ConfidenceScores.from_raw(result.confidences, config.tau_conf)
            w = confidence_to_weights(scores)

            tool_rep, arg_rep = step_token_losses(
                kind=config.kind,
                world=world,
                post_dists=result.post_dists,
                w=w,
                policy=policy,
                state=state,
                action=action,
                eps=config.eps,
            )
            total_loss += token_scale * (tool_rep.value + arg_rep.value)

            tool_key = state
            if tool_key not in tool_grads:
                tool_grads[tool_key] = np.zeros(world.n_tools)
            tool_grads[tool_key] += token_scale * tool_rep.logit_grad
            arg_key = (state, action[0])
            if arg_key not in arg_grads:
                arg_grads[arg_key] = np.zeros(world.n_args)
            arg_grads[arg_key] += token_scale * arg_rep.logit_grad

            for t, rep in enumerate((tool_rep, arg_rep)):
                iter_records.append(
                    StepRecord(
                        iteration=it,
                        step=m,
                        token=t,
                        loss=rep.value,
                        grad_inf_norm=rep.inf_norm,
                        teacher_losses=rep.teacher_losses,
                        weights=w.weights,
                    )
                )

        for s, grad in tool_grads.items():
            policy.tool_logits[s] -= policy.eta * _clip(grad, policy.grad_clip)
        for (s, tool), grad in arg_grads.items():
            policy.arg_logits[s, tool] -= policy.eta * _clip(grad, policy.grad_clip)

        finite = all(_row_usable(policy.tool_logits[s]) for s in tool_grads) and all(
            _row_usable(policy.arg_logits[s, t]) for s, t in arg_grads
        )

        loss_series[it] = total_loss
        acc_series[it] = task_accuracy(policy, world)
        records.extend(iter_records)
        for rec in iter_records:
            rows.append(
                (it, rec.step, rec.token, kind_label, rec.loss, rec.grad_inf_norm, acc_series[it])
            )

        if not finite:
            bad_step = len(traj) - 1
            aborted = {"iteration": it, "step": bad_step}
            loss_series = loss_series[: it + 1]
            acc_series = acc_series[: it + 1]
            break

    return TrainResult(
        loss_series=loss_series,
        accuracy_series=acc_series,
        records=records,
        policy=policy,
        final_accuracy=task_accuracy(policy, world),
        metrics_rows=rows,
        aborted=aborted,
    )
