"""Off-policy group training loop.

One *update* = snapshot the behaviour policy, collect ``B`` prompt groups of
``G`` responses from it, then run ``E`` epochs of ``M`` mini-batch ascent
steps on the current policy.  Mini-batches are made of whole groups.  Only
the first step of each update is on-policy.

The trainer maximises the surrogate (gradient *ascent*).  One
:class:`MetricsRow` is logged per optimiser step, describing the mini-batch
just before the step was applied.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import objectives, tasks
from .core_group import TrajectoryGroup
from .errors import NumericError, ValidationError
from .gates import GateConfig
from .objectives import ObjectiveKind
from .policy import PolicyParams, sample_response
from .rng import ROLLOUT, SHUFFLE, substream
from .tasks import TaskSpec

log = logging.getLogger(__name__)

OPTIMIZERS = ("sgd", "adam")
DIVERGENCE_LIMIT = 1e6


@dataclass(frozen=True)
class TrainConfig:
    task: TaskSpec
    objective: ObjectiveKind = ObjectiveKind.SSPO
    gate: GateConfig = field(default_factory=GateConfig)
    context_order: int = 1
    prompt_buckets: int = None
    group_size: int = 8
    prompts_per_rollout: int = 16
    epochs_per_rollout: int = 2
    minibatches_per_epoch: int = 2
    optimizer: str = "adam"
    learning_rate: float = 0.05
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    total_updates: int = 300
    seed: int = 0
    advantage_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "objective", ObjectiveKind.parse(self.objective))
        if self.prompt_buckets is None:
            object.__setattr__(self, "prompt_buckets", self.task.num_payload)
        checks = [
            (self.group_size >= 2, "train.G must be >= 2"),
            (self.prompts_per_rollout >= 1, "train.B must be >= 1"),
            (self.epochs_per_rollout >= 1, "train.E must be >= 1"),
            (self.minibatches_per_epoch >= 1, "train.M must be >= 1"),
            (
                self.prompts_per_rollout % self.minibatches_per_epoch == 0,
                f"train.B ({self.prompts_per_rollout}) must be divisible by train.M "
                f"({self.minibatches_per_epoch})",
            ),
            (self.optimizer in OPTIMIZERS, f"train.optimizer must be one of {OPTIMIZERS}"),
            (self.learning_rate >= 0, "train.learning_rate must be >= 0"),
            (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1, "adam betas must lie in [0, 1)"),
            (self.adam_eps > 0, "train.adam_eps must be > 0"),
            (self.total_updates >= 0, "train.total_updates must be >= 0"),
            (self.seed >= 0, "train.seed must be >= 0"),
            (self.advantage_eps > 0, "train.advantage_eps must be > 0"),
            (self.context_order >= 1, "policy.k must be >= 1"),
            (self.prompt_buckets >= 1, "policy.prompt_buckets must be >= 1"),
        ]
        for ok, msg in checks:
            if not ok:
                raise ValidationError(msg)

    def new_policy(self):
        return PolicyParams(self.task.vocab_size, self.context_order, self.prompt_buckets)


@dataclass(frozen=True)
class MetricsRow:
    update_index: int
    mean_reward: float
    objective_value: float
    policy_entropy_mean: float
    ratio_mean: float
    ratio_max: float
    intra_seq_dispersion_mean: float
    soft_clipped_fraction: float
    grad_norm: float

    @classmethod
    def header(cls):
        return [f.name for f in fields(cls)]

    def values(self):
        return list(asdict(self).values())


class TrainingDiverged(NumericError):
    """Raised when an update would produce non-finite or exploding parameters."""

    def __init__(self, message, metrics, update_index):
        super().__init__(message, where=update_index)
        self.metrics = metrics
        self.update_index = update_index


def snapshot_behavior(params):
    return params.copy()


def collect_rollouts(behavior, task, B, G, seed, key=(), advantage_eps=1e-8):
    """Sample ``B`` prompt groups of ``G`` responses from the behaviour policy.

    Prompt slot ``j`` draws from its own stream ``substream(seed, *key, j)``,
    so groups do not depend on the order slots are processed in.
    """
    groups = []
    P = behavior.num_prompt_buckets
    for slot in range(B):
        rng = substream(seed, *key, slot)
        prompt, bucket = tasks.make_prompt(task, rng, P)
        pid = tasks.prompt_id(task, prompt)
        trajs = []
        for _ in range(G):
            t = sample_response(behavior, prompt, bucket, task.max_len, rng, prompt_id=pid)
            r = tasks.reward(task, prompt, t.response_tokens)
            trajs.append(
                type(t)(t.prompt_id, t.prompt_tokens, t.prompt_bucket, t.response_tokens,
                        t.behavior_logps, r)
            )
        groups.append(TrajectoryGroup.from_trajectories(trajs, advantage_eps))
    return groups


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, theta, grad):
        theta += self.lr * grad


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta, grad):
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        theta += self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(config):
    if config.optimizer == "sgd":
        return SGD(config.learning_rate)
    return Adam(config.learning_rate, config.adam_beta1, config.adam_beta2, config.adam_eps)


class Trainer:
    """Holds the policy and optimiser state for one training run.

    ``stream_salt`` separates the random streams of runs that share a seed
    (the comparison runner uses one salt per objective).
    """

    def __init__(self, config, stream_salt=0, params=None):
        self.config = config
        self.stream_salt = stream_salt
        self.params = params.copy() if params is not None else config.new_policy()
        self.optimizer = make_optimizer(config)
        self.metrics = []
        self.updates_done = 0

    def rollouts(self, behavior, update_index):
        c = self.config
        return collect_rollouts(
            behavior, c.task, c.prompts_per_rollout, c.group_size, c.seed,
            key=(self.stream_salt, update_index, ROLLOUT), advantage_eps=c.advantage_eps,
        )

    def update(self):
        """Run one rollout + E x M optimiser steps; return the rows it logged."""
        c = self.config
        u = self.updates_done
        behavior = snapshot_behavior(self.params)
        groups = self.rollouts(behavior, u)
        mean_reward = float(np.mean([g.rewards.mean() for g in groups]))
        per_mb = c.prompts_per_rollout // c.minibatches_per_epoch
        rows = []
        for epoch in range(c.epochs_per_rollout):
            order = substream(c.seed, self.stream_salt, u, SHUFFLE, epoch).permutation(len(groups))
            for m in range(c.minibatches_per_epoch):
                batch = [groups[j] for j in order[m * per_mb : (m + 1) * per_mb]]
                res = objectives.evaluate(c.objective, batch, self.params, c.gate)
                grad_norm = float(np.linalg.norm(res.gradient))
                candidate = self.params.logits.copy()
                self.optimizer.step(candidate, res.gradient)
                if not np.all(np.isfinite(candidate)) or np.abs(candidate).max() > DIVERGENCE_LIMIT:
                    raise TrainingDiverged(
                        f"update {u}: parameters would become non-finite or exceed "
                        f"{DIVERGENCE_LIMIT:g} in magnitude",
                        metrics=list(self.metrics),
                        update_index=u,
                    )
                self.params.logits = candidate
                s = res.stats
                row = MetricsRow(
                    update_index=u,
                    mean_reward=mean_reward,
                    objective_value=res.value,
                    policy_entropy_mean=s.entropy_mean,
                    ratio_mean=s.ratio_mean,
                    ratio_max=s.ratio_max,
                    intra_seq_dispersion_mean=s.dispersion_mean,
                    soft_clipped_fraction=s.clipped_fraction,
                    grad_norm=grad_norm,
                )
                rows.append(row)
                self.metrics.append(row)
        self.updates_done += 1
        return rows

    def run(self, callback=None):
        while self.updates_done < self.config.total_updates:
            rows = self.update()
            if callback is not None:
                callback(self, rows)
        return self.metrics


def train(config, stream_salt=0):
    return Trainer(config, stream_salt).run()
