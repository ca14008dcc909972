"""Values and analytic gradients of the five group surrogate objectives.

Each objective is maximised.  For a batch of groups the value is the mean over
groups of ``(1/G) sum_i J_i`` where the per-sequence term is

=====  ============================================================
GRPO   ``mean_t clip(rho_t; A) * A``
GSPO   ``clip(s; A) * A`` with ``s = exp(mean_t log rho_t)``
GMPO   ``exp(mean_t log clip(rho_t; A)) * A``
SAPO   ``mean_t soft_gate(rho_t; A) * A``
SSPO   ``exp(geo_gate_log(rho; A)) * A``
=====  ============================================================

The gradient w.r.t. the logit table is ``sum_t c_t * (onehot(y_t) - p_t)``
on the row of token t's context, where ``c_t`` is the per-token coefficient
derived for each objective below.  Clipped branches have zero gradient.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import gates
from .errors import InvalidBatchError, NumericError
from .policy import log_softmax


class ObjectiveKind(str, enum.Enum):
    GRPO = "grpo"
    GSPO = "gspo"
    GMPO = "gmpo"
    SAPO = "sapo"
    SSPO = "sspo"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            valid = ", ".join(k.value for k in cls)
            raise InvalidBatchError(f"unknown objective {value!r}; valid kinds: {valid}") from None

    @property
    def index(self):
        return list(ObjectiveKind).index(self)

    @property
    def uses_clip(self):
        return self in (ObjectiveKind.GRPO, ObjectiveKind.GSPO, ObjectiveKind.GMPO)


@dataclass(frozen=True)
class BatchStats:
    ratio_mean: float
    ratio_max: float
    dispersion_mean: float
    clipped_fraction: float
    entropy_mean: float


@dataclass
class SurrogateResult:
    value: float
    gradient: np.ndarray
    stats: BatchStats = None


@dataclass
class _TokenBatch:
    """Flattened view of a batch: one entry per response token."""

    rows: np.ndarray
    tokens: np.ndarray
    seq: np.ndarray
    logp: np.ndarray  # (N, V) log-softmax of each token's row
    log_ratio: np.ndarray
    ratio: np.ndarray
    lengths: np.ndarray  # per sequence
    adv: np.ndarray  # per sequence
    seq_weight: np.ndarray  # per sequence: 1 / (num_groups * G)
    seq_names: list

    @property
    def num_seqs(self):
        return self.lengths.size

    def seq_sum(self, x):
        return np.bincount(self.seq, weights=x, minlength=self.num_seqs)


def _flatten(groups, params):
    groups = list(groups)
    if not groups:
        raise InvalidBatchError("empty batch")
    rows, toks, old, seq, lengths, adv, weight, names = [], [], [], [], [], [], [], []
    s = 0
    for gi, group in enumerate(groups):
        G = len(group.trajectories)
        if len(group.advantages) != G:
            raise InvalidBatchError(
                f"group {gi}: {len(group.advantages)} advantages for {G} trajectories"
            )
        for i, traj in enumerate(group.trajectories):
            rows.append(params.response_states(traj.prompt_bucket, traj.response_tokens))
            toks.append(np.asarray(traj.response_tokens, dtype=np.int64))
            old.append(traj.behavior_logps)
            seq.append(np.full(traj.length, s, dtype=np.int64))
            lengths.append(traj.length)
            adv.append(group.advantages[i])
            weight.append(1.0 / (len(groups) * G))
            names.append((gi, i))
            s += 1
    rows = np.concatenate(rows)
    tokens = np.concatenate(toks)
    seq_ids = np.concatenate(seq)
    logp = log_softmax(params.logits[rows])
    log_ratio = logp[np.arange(rows.size), tokens] - np.concatenate(old)
    with np.errstate(over="ignore"):
        ratio = np.exp(log_ratio)
    bad = ~np.isfinite(ratio) | (ratio <= 0.0)
    if bad.any():
        j = int(np.flatnonzero(bad)[0])
        g, i = names[seq_ids[j]]
        raise NumericError(
            f"non-finite importance ratio in group {g}, sequence {i}", where=(g, i)
        )
    return _TokenBatch(
        rows=rows,
        tokens=tokens,
        seq=seq_ids,
        logp=logp,
        log_ratio=log_ratio,
        ratio=ratio,
        lengths=np.asarray(lengths, dtype=np.float64),
        adv=np.asarray(adv, dtype=np.float64),
        seq_weight=np.asarray(weight),
        seq_names=names,
    )


def _grpo(b, cfg):
    A = b.adv[b.seq]
    n = b.lengths[b.seq]
    gated = gates.clip_gate(b.ratio, A, cfg)
    clipped = gates.is_clipped(b.ratio, A, cfg)
    terms = b.seq_sum(gated * A / n)
    coef = np.where(clipped, 0.0, A * b.ratio / n)
    return terms, coef, clipped


def _gspo(b, cfg):
    s = np.exp(b.seq_sum(b.log_ratio) / b.lengths)
    clipped_seq = gates.is_clipped(s, b.adv, cfg)
    terms = gates.clip_gate(s, b.adv, cfg) * b.adv
    per_seq = np.where(clipped_seq, 0.0, b.adv * s / b.lengths)
    return terms, per_seq[b.seq], clipped_seq[b.seq]


def _gmpo(b, cfg):
    assert cfg.eps_low < 1.0, "GMPO needs positive clip outputs"
    A = b.adv[b.seq]
    clipped = gates.is_clipped(b.ratio, A, cfg)
    log_gated = np.log(gates.clip_gate(b.ratio, A, cfg))
    geo = np.exp(b.seq_sum(log_gated) / b.lengths)
    terms = geo * b.adv
    coef = np.where(clipped, 0.0, A * (geo / b.lengths)[b.seq])
    return terms, coef, clipped


def _sapo(b, cfg):
    A = b.adv[b.seq]
    n = b.lengths[b.seq]
    terms = b.seq_sum(gates.soft_gate(b.ratio, A, cfg) * A / n)
    deriv = gates.soft_gate_derivative(b.ratio, A, cfg)
    coef = A * deriv * b.ratio / n
    return terms, coef, deriv < 0.5


def _sspo(b, cfg):
    A = b.adv[b.seq]
    tau_tok = gates.temperature(A, cfg)
    tau_seq = gates.temperature(b.adv, cfg)
    log_geo = b.seq_sum(np.arctan(tau_tok * (b.ratio - 1.0))) / (b.lengths * tau_seq)
    geo = np.exp(log_geo)
    terms = geo * b.adv
    ratio = gates.sspo_ratio(b.ratio, A, cfg)
    coef = A * (geo / b.lengths)[b.seq] * ratio * b.ratio
    return terms, coef, ratio < 0.5


_KERNELS = {
    ObjectiveKind.GRPO: _grpo,
    ObjectiveKind.GSPO: _gspo,
    ObjectiveKind.GMPO: _gmpo,
    ObjectiveKind.SAPO: _sapo,
    ObjectiveKind.SSPO: _sspo,
}


def _stats(b, attenuated):
    p = np.exp(b.logp)
    ent = -np.sum(np.where(p > 0, p * b.logp, 0.0), axis=1)
    mean_log = b.seq_sum(b.log_ratio) / b.lengths
    disp = b.seq_sum((b.log_ratio - mean_log[b.seq]) ** 2) / b.lengths
    return BatchStats(
        ratio_mean=float(b.ratio.mean()),
        ratio_max=float(b.ratio.max()),
        dispersion_mean=float(disp.mean()),
        clipped_fraction=float(np.mean(attenuated)),
        entropy_mean=float(ent.mean()),
    )


def evaluate(kind, groups, params, gate_cfg, with_stats=True):
    """Objective value and dense gradient for a batch of trajectory groups."""
    kind = ObjectiveKind.parse(kind)
    b = _flatten(groups, params)
    terms, coef, attenuated = _KERNELS[kind](b, gate_cfg)

    bad = ~np.isfinite(terms)
    if bad.any():
        g, i = b.seq_names[int(np.flatnonzero(bad)[0])]
        raise NumericError(f"non-finite {kind.value} term in group {g}, sequence {i}", where=(g, i))
    value = float(np.dot(b.seq_weight, terms))

    coef = coef * b.seq_weight[b.seq]
    if not np.all(np.isfinite(coef)):
        j = int(np.flatnonzero(~np.isfinite(coef))[0])
        g, i = b.seq_names[b.seq[j]]
        raise NumericError(f"non-finite gradient weight in group {g}, sequence {i}", where=(g, i))
    contrib = -np.exp(b.logp) * coef[:, None]
    contrib[np.arange(b.tokens.size), b.tokens] += coef
    grad = np.zeros_like(params.logits)
    np.add.at(grad, b.rows, contrib)

    stats = _stats(b, attenuated) if with_stats else None
    return SurrogateResult(value=value, gradient=grad, stats=stats)


def value(kind, groups, params, gate_cfg):
    return evaluate(kind, groups, params, gate_cfg, with_stats=False).value


def gmpo_sequence_weight(ratios, advantage, cfg):
    """Geometric mean of the clipped token ratios of one sequence."""
    r = np.asarray(ratios, dtype=np.float64)
    return float(np.exp(np.mean(np.log(gates.clip_gate(r, advantage, cfg)))))


def reinforce_gradient(groups, params):
    """Group-baseline REINFORCE gradient ``mean_g (1/G) sum_i (A_i/|y_i|) sum_t grad log pi``.

    Computed with an explicit per-token loop over :func:`policy.grad_log_prob`
    so it shares no code with :func:`evaluate`.
    """
    from .policy import grad_log_prob

    groups = list(groups)
    grad = np.zeros_like(params.logits)
    for group in groups:
        G = len(group.trajectories)
        for traj, A in zip(group.trajectories, group.advantages):
            rows = params.response_states(traj.prompt_bucket, traj.response_tokens)
            for row, tok in zip(rows, traj.response_tokens):
                r, g = grad_log_prob(params, int(row), tok)
                grad[r] += A / traj.length / (G * len(groups)) * g
    return grad
