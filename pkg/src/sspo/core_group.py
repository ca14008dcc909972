"""Group-level quantities shared by every surrogate objective.

Importance ratios, the length-normalised sequence ratio, group-relative
advantages and the intra-sequence dispersion diagnostic.  Products over tokens
are always taken in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidGroupError, NumericError, ValidationError


@dataclass(frozen=True)
class Trajectory:
    """One sampled response together with what the behaviour policy knew about it.

    ``behavior_logps[t]`` is log pi_old(y_t | x, y_<t) recorded at sampling
    time.  ``length`` counts the EOS token when one was emitted.
    """

    prompt_id: int
    prompt_tokens: tuple
    prompt_bucket: int
    response_tokens: tuple
    behavior_logps: np.ndarray
    reward: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "prompt_tokens", tuple(int(t) for t in self.prompt_tokens))
        object.__setattr__(self, "response_tokens", tuple(int(t) for t in self.response_tokens))
        logps = np.asarray(self.behavior_logps, dtype=np.float64)
        logps.setflags(write=False)
        object.__setattr__(self, "behavior_logps", logps)
        if len(self.response_tokens) < 1:
            raise ValidationError("trajectory must contain at least one response token")
        if logps.shape != (len(self.response_tokens),):
            raise ValidationError(
                f"behavior_logps has {logps.size} entries for {len(self.response_tokens)} tokens"
            )
        if np.any(logps > 0.0):
            raise ValidationError("behavior log-probabilities must be <= 0")
        if not 0.0 <= self.reward <= 1.0:
            raise ValidationError(f"reward {self.reward} outside [0, 1]")

    @property
    def length(self):
        return len(self.response_tokens)


@dataclass(frozen=True)
class TrajectoryGroup:
    """G responses to the same prompt plus their shared-per-sequence advantages."""

    trajectories: tuple
    advantages: np.ndarray = field(default=None)

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        if not trajs:
            raise InvalidGroupError("empty trajectory group")
        ids = {t.prompt_id for t in trajs}
        if len(ids) != 1:
            raise InvalidGroupError(f"trajectories span several prompts: {sorted(ids)}")
        adv = self.advantages
        if adv is None:
            adv = np.zeros(len(trajs))
        adv = np.asarray(adv, dtype=np.float64)
        if adv.shape != (len(trajs),):
            raise InvalidGroupError(f"{adv.size} advantages for {len(trajs)} trajectories")
        adv.setflags(write=False)
        object.__setattr__(self, "advantages", adv)

    @classmethod
    def from_trajectories(cls, trajectories, eps=1e-8):
        """Build a group and fill its advantages from the trajectories' rewards."""
        trajectories = tuple(trajectories)
        adv = normalize_advantages([t.reward for t in trajectories], eps)
        return cls(trajectories, adv)

    @property
    def size(self):
        return len(self.trajectories)

    @property
    def rewards(self):
        return np.array([t.reward for t in self.trajectories])


def normalize_advantages(rewards, eps=1e-8):
    """Standardise rewards within a group: ``(r - mean) / max(std, eps)``.

    The population standard deviation (divide by G) is used.  A group whose
    std falls below ``eps`` carries no preference between its members and
    gets all-zero advantages.
    """
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise InvalidGroupError(f"advantage normalisation needs G >= 2 rewards, got {r.size}")
    if eps <= 0:
        raise ValidationError("eps must be positive")
    if np.any((r < 0.0) | (r > 1.0)) or not np.all(np.isfinite(r)):
        raise ValidationError("rewards must lie in [0, 1]")
    std = r.std()
    if std < eps:
        return np.zeros_like(r)
    return (r - r.mean()) / max(std, eps)


def token_ratios(trajectory, params):
    """Per-token importance ratios ``exp(log pi_theta - log pi_old)``.

    No clamping is applied; a non-finite result raises :class:`NumericError`
    naming the token position.
    """
    logp = params.sequence_log_probs(trajectory.prompt_bucket, trajectory.response_tokens)
    diff = logp - trajectory.behavior_logps
    with np.errstate(over="ignore"):
        ratios = np.exp(diff)
    bad = ~np.isfinite(ratios) | (ratios <= 0.0)
    if bad.any():
        t = int(np.flatnonzero(bad)[0])
        raise NumericError(
            f"non-finite importance ratio at token {t} (log-ratio {diff[t]!r})",
            where=(trajectory, t),
        )
    return ratios


def _log_ratios(ratios):
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValidationError("ratio list must be a non-empty 1-D sequence")
    if np.any(r <= 0.0):
        raise ValidationError("ratios must be positive")
    return np.log(r)


def sequence_ratio(ratios):
    """Length-normalised sequence ratio ``(prod rho_t) ** (1/|y|)``, via exp(mean log)."""
    return float(np.exp(_log_ratios(ratios).mean()))


def intra_sequence_dispersion(ratios):
    """Mean squared deviation of the token log-ratios from the sequence log-ratio."""
    logs = _log_ratios(ratios)
    return float(np.mean((logs - logs.mean()) ** 2))
