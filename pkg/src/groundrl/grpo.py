"""Group-relative advantages and the clipped-surrogate objective.

Rewards within a sampled group are standardized (population statistics) to
form advantages; the objective combines the clipped importance-ratio
surrogate with a KL penalty toward a reference policy.  The KL term uses
the nonnegative per-sequence estimator exp(d) - d - 1 with
d = logp_ref - logp_new, which is exact in expectation.

A tiny categorical policy over pre-rendered completion strings stands in
for the real sequence model, which is enough to verify the math end to
end: seeded rollouts, analytic gradients checked against finite
differences, and a demo training loop that learns to prefer the correct
grounding answer.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .parsing import GroundingAnswer, render_completion
from .rewards import GroundTruth, score_group


class GroupTooSmallError(ValueError):
    """Raised when a reward group has fewer than two members."""


class LengthMismatchError(ValueError):
    """Raised when per-completion sequences disagree in length."""


@dataclass(frozen=True)
class GrpoConfig:
    """Hyperparameters: clip range, KL weight, degenerate-group guard."""

    epsilon: float = 0.2
    beta: float = 5.0e-3
    eps_std: float = 1.0e-6

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if not self.eps_std > 0:
            raise ValueError("eps_std must be > 0")


@dataclass(frozen=True)
class GroupLogProbs:
    """Sequence log-probabilities of one group under the new, old, and
    reference policies (nats)."""

    logp_new: np.ndarray
    logp_old: np.ndarray
    logp_ref: np.ndarray

    def __post_init__(self) -> None:
        new = np.asarray(self.logp_new, dtype=np.float64)
        old = np.asarray(self.logp_old, dtype=np.float64)
        ref = np.asarray(self.logp_ref, dtype=np.float64)
        if not (new.shape == old.shape == ref.shape) or new.ndim != 1:
            raise LengthMismatchError("logp_new/logp_old/logp_ref must be 1-D and equal length")
        for arr in (new, old, ref):
            if not np.all(np.isfinite(arr)):
                raise ValueError("log-probabilities must be finite")
        object.__setattr__(self, "logp_new", new)
        object.__setattr__(self, "logp_old", old)
        object.__setattr__(self, "logp_ref", ref)

    def __len__(self) -> int:
        return self.logp_new.shape[0]


def group_advantages(rewards: "list[float] | np.ndarray", cfg: GrpoConfig | None = None) -> np.ndarray:
    """Standardize rewards within a group: (r - mean) / population std.

    Groups whose standard deviation falls at or below ``cfg.eps_std``
    yield all-zero advantages instead of dividing by (near) zero.
    """
    cfg = cfg or GrpoConfig()
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.shape[0] < 2:
        raise GroupTooSmallError(f"need a group of >= 2 rewards, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    std = float(r.std())  # population (divide by G)
    if std <= cfg.eps_std:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def grpo_objective(lp: GroupLogProbs, advantages: "list[float] | np.ndarray",
                   cfg: GrpoConfig | None = None) -> float:
    """Clipped-surrogate objective minus the weighted KL penalty."""
    cfg = cfg or GrpoConfig()
    adv = np.asarray(advantages, dtype=np.float64)
    if adv.shape != lp.logp_new.shape:
        raise LengthMismatchError(
            f"advantages length {adv.shape} != group size {lp.logp_new.shape}"
        )
    ratio = np.exp(lp.logp_new - lp.logp_old)
    clipped = np.clip(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon)
    surrogate = np.minimum(ratio * adv, clipped * adv).mean()
    d = lp.logp_ref - lp.logp_new
    kl = (np.exp(d) - d - 1.0).mean()
    return float(surrogate - cfg.beta * kl)


@dataclass(frozen=True)
class ToyPolicy:
    """Categorical policy over a finite set of pre-rendered completions."""

    logits: np.ndarray
    completions: tuple[str, ...]

    def __post_init__(self) -> None:
        logits = np.asarray(self.logits, dtype=np.float64)
        if logits.ndim != 1 or logits.shape[0] != len(self.completions):
            raise ValueError("need one logit per completion")
        if not np.all(np.isfinite(logits)):
            raise ValueError("logits must be finite")
        object.__setattr__(self, "logits", logits)
        object.__setattr__(self, "completions", tuple(self.completions))

    @property
    def n_actions(self) -> int:
        return len(self.completions)

    def probs(self) -> np.ndarray:
        return _softmax(self.logits)

    def log_probs(self) -> np.ndarray:
        return _log_softmax(self.logits)

    def with_logits(self, logits: np.ndarray) -> "ToyPolicy":
        return replace(self, logits=logits)


GARBAGE_COMPLETION = "the target is somewhere on the left, probably"


def two_action_policy(gt: GroundTruth) -> ToyPolicy:
    """Uniform policy over a perfect answer and a garbage string."""
    perfect = render_completion(
        "locate the target",
        GroundingAnswer(gt.bbox, gt.point_1, gt.point_2),
    )
    return ToyPolicy(np.zeros(2), (perfect, GARBAGE_COMPLETION))


def _sample_actions(policy: ToyPolicy, group_size: int, seed: int) -> np.ndarray:
    if group_size < 2:
        raise GroupTooSmallError(f"group size must be >= 2, got {group_size}")
    rng = np.random.default_rng(seed)
    return rng.choice(policy.n_actions, size=group_size, p=policy.probs())


def toy_rollout(policy: ToyPolicy, gt: GroundTruth, group_size: int,
                seed: int) -> tuple[list[str], list[float]]:
    """Sample a seeded group of completions and score each one."""
    actions = _sample_actions(policy, group_size, seed)
    completions = [policy.completions[a] for a in actions]
    rewards = [b.total for b in score_group(completions, gt)]
    return completions, rewards


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    return z - np.log(np.exp(z).sum())


def _objective_and_gradient(
    logits: np.ndarray,
    actions: np.ndarray,
    logp_old: np.ndarray,
    logp_ref: np.ndarray,
    advantages: np.ndarray,
    cfg: GrpoConfig,
) -> tuple[float, np.ndarray]:
    """Objective and its analytic gradient w.r.t. the policy logits.

    ``logp_old`` and ``logp_ref`` are treated as constants.  The gradient
    of each surrogate term flows through the ratio only on its unclipped
    branch: for positive advantages while ratio <= 1+eps, for negative
    ones while ratio >= 1-eps.
    """
    logp_new = _log_softmax(logits)[actions]
    lp = GroupLogProbs(logp_new, logp_old, logp_ref)
    value = grpo_objective(lp, advantages, cfg)

    probs = _softmax(logits)
    g = len(actions)
    ratio = np.exp(logp_new - logp_old)
    active = np.where(
        advantages >= 0.0, ratio <= 1.0 + cfg.epsilon, ratio >= 1.0 - cfg.epsilon
    )
    # d(term_i)/d(logp_new_i), summed into logit space via (e_{a_i} - probs).
    dsurr = np.where(active, advantages * ratio, 0.0)
    dkl = 1.0 - np.exp(logp_ref - logp_new)
    coeffs = (dsurr - cfg.beta * dkl) / g
    grad = np.zeros_like(logits)
    np.add.at(grad, actions, coeffs)
    grad -= coeffs.sum() * probs
    return value, grad


def grpo_gradient_check(policy: ToyPolicy, gt: GroundTruth, cfg: GrpoConfig | None = None,
                        seed: int = 0, group_size: int = 8,
                        fd_step: float = 1.0e-5) -> float:
    """Max relative error between the analytic gradient and central finite
    differences, on one seeded rollout with old/ref frozen at the current
    logits."""
    cfg = cfg or GrpoConfig()
    actions = _sample_actions(policy, group_size, seed)
    completions = [policy.completions[a] for a in actions]
    rewards = np.array([b.total for b in score_group(completions, gt)])
    advantages = group_advantages(rewards, cfg)

    theta = policy.logits.copy()
    frozen = _log_softmax(theta)[actions]
    _, grad = _objective_and_gradient(theta, actions, frozen, frozen, advantages, cfg)

    fd = np.zeros_like(theta)
    for k in range(theta.shape[0]):
        for sign in (1.0, -1.0):
            shifted = theta.copy()
            shifted[k] += sign * fd_step
            value, _ = _objective_and_gradient(
                shifted, actions, frozen, frozen, advantages, cfg
            )
            fd[k] += sign * value
    fd /= 2.0 * fd_step

    scale = np.maximum(np.maximum(np.abs(grad), np.abs(fd)), 1.0e-8)
    return float(np.max(np.abs(grad - fd) / scale))


@dataclass(frozen=True)
class TraceStep:
    """One step of the demo training loop."""

    step: int
    objective: float
    mean_reward: float
    p_best: float

    def as_dict(self) -> dict[str, float]:
        return {
            "step": self.step,
            "objective": self.objective,
            "mean_reward": self.mean_reward,
            "p_best": self.p_best,
        }


@dataclass
class DemoResult:
    """Final policy plus the per-step trace of a demo run."""

    policy: ToyPolicy
    trace: list[TraceStep] = field(default_factory=list)

    @property
    def final_p_best(self) -> float:
        return self.trace[-1].p_best if self.trace else float("nan")


def grpo_demo_train(
    scene: GroundTruth,
    cfg: GrpoConfig | None = None,
    steps: int = 200,
    lr: float = 0.1,
    seed: int = 0,
    group_size: int = 8,
    policy: ToyPolicy | None = None,
) -> DemoResult:
    """Plain gradient ascent on toy logits: rollout, reward, standardize,
    step.

    Each step samples a fresh group with the old policy frozen at the
    pre-update logits and the reference fixed at the initial logits.  The
    traced objective is evaluated after the update, against those frozen
    log-probs; ``p_best`` is the post-update probability of the action
    whose completion scores highest against the scene.
    """
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    cfg = cfg or GrpoConfig()
    policy = policy if policy is not None else two_action_policy(scene)

    totals = [b.total for b in score_group(list(policy.completions), scene)]
    best_action = int(np.argmax(totals))
    ref_log_probs = policy.log_probs()

    rng = np.random.default_rng(seed)
    theta = policy.logits.copy()
    trace: list[TraceStep] = []
    for step in range(1, steps + 1):
        step_seed = int(rng.integers(0, 2**63 - 1))
        actions = _sample_actions(policy.with_logits(theta), group_size, step_seed)
        completions = [policy.completions[a] for a in actions]
        rewards = np.array([b.total for b in score_group(completions, scene)])
        advantages = group_advantages(rewards, cfg)

        logp_old = _log_softmax(theta)[actions]
        logp_ref = ref_log_probs[actions]
        _, grad = _objective_and_gradient(theta, actions, logp_old, logp_ref, advantages, cfg)
        theta = theta + lr * grad

        objective, _ = _objective_and_gradient(theta, actions, logp_old, logp_ref, advantages, cfg)
        p_best = float(_softmax(theta)[best_action])
        trace.append(TraceStep(step, objective, float(rewards.mean()), p_best))

    return DemoResult(policy.with_logits(theta), trace)
