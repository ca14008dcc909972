"""Finite-difference oracle for the analytic surrogate gradients.

Central differences of the objective *value* are compared against the
analytic gradient on every logit touched by a small random off-policy batch.
A sample of untouched coordinates must have an analytic gradient of exactly
zero.  For the hard-clip objectives, coordinates whose perturbation could
move a clipped quantity across its kink are skipped and counted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import objectives
from .core_group import TrajectoryGroup
from .errors import NumericError, ValidationError
from .gates import GateConfig
from .objectives import ObjectiveKind
from .policy import PolicyParams, sample_response
from .rng import INSTANCE, substream

KINK_BAND = 1e-3
MAX_COORDS = 5000


@dataclass(frozen=True)
class InstanceSpec:
    vocab_size: int = 5
    context_order: int = 1
    num_buckets: int = 3
    num_groups: int = 2
    group_size: int = 4
    max_len: int = 5
    logit_scale: float = 1.0
    drift: float = 0.3
    num_untouched: int = 20


@dataclass(frozen=True)
class GradCheckReport:
    kind: ObjectiveKind
    coords_checked: int
    max_rel_err: float
    max_abs_err: float
    skipped_kink_coords: int
    passed: bool
    worst_coord: tuple = None
    untouched_checked: int = 0
    untouched_nonzero: int = 0

    def format(self):
        status = "PASS" if self.passed else "FAIL"
        lines = [
            f"{status} {self.kind.value}: checked={self.coords_checked} "
            f"skipped_kink={self.skipped_kink_coords} untouched={self.untouched_checked} "
            f"max_rel_err={self.max_rel_err:.3e} max_abs_err={self.max_abs_err:.3e}"
        ]
        if not self.passed:
            if self.worst_coord is not None:
                lines.append(f"  worst coordinate (row, col): {self.worst_coord}")
            if self.untouched_nonzero:
                lines.append(f"  untouched coordinates with nonzero gradient: {self.untouched_nonzero}")
        return "\n".join(lines)


def finite_diff_grad(fn, theta, coord, h):
    """Central difference of ``fn`` along ``coord`` of the array ``theta``.

    ``fn`` maps an array shaped like ``theta`` to a scalar.  ``theta`` is not
    modified.
    """
    if not h > 0:
        raise ValidationError("step h must be positive")
    t = np.array(theta, dtype=np.float64)
    base = t[coord]
    t[coord] = base + h
    f_plus = fn(t)
    t[coord] = base - h
    f_minus = fn(t)
    if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
        raise NumericError(f"non-finite objective while differencing coordinate {coord}", where=coord)
    return (f_plus - f_minus) / (2.0 * h)


def objective_fd_grad(kind, groups, params, cfg, coord, h):
    """Central difference of the objective value w.r.t. one logit."""

    def fn(logits):
        p = PolicyParams(params.vocab_size, params.context_order, params.num_prompt_buckets, logits)
        return objectives.value(kind, groups, p, cfg)

    return finite_diff_grad(fn, params.logits, coord, h)


def step_size(theta_j, base=1e-5):
    return base * max(1.0, abs(theta_j))


def random_instance(spec, seed):
    """Random off-policy batch: ``(groups, behavior, current)``.

    Rewards are uniform in [0, 1] so every group has non-zero advantages.
    """
    rng = substream(seed, INSTANCE)
    V, k, P = spec.vocab_size, spec.context_order, spec.num_buckets
    behavior = PolicyParams(V, k, P, spec.logit_scale * rng.standard_normal((P * V**k, V)))
    groups = []
    for g in range(spec.num_groups):
        bucket = int(rng.integers(P))
        trajs = [
            sample_response(behavior, (bucket,), bucket, spec.max_len, rng, prompt_id=g)
            for _ in range(spec.group_size)
        ]
        rewards = rng.uniform(0.0, 1.0, size=spec.group_size)
        trajs = [
            type(t)(t.prompt_id, t.prompt_tokens, t.prompt_bucket, t.response_tokens,
                    t.behavior_logps, float(r))
            for t, r in zip(trajs, rewards)
        ]
        groups.append(TrajectoryGroup.from_trajectories(trajs))
    current = behavior.copy()
    current.logits += spec.drift * rng.standard_normal(current.logits.shape)
    return groups, behavior, current


def kink_rows(kind, groups, params, cfg, band=KINK_BAND):
    """Rows whose logits feed a clipped quantity lying within ``band`` of its kink."""
    kind = ObjectiveKind.parse(kind)
    if not kind.uses_clip:
        return set()
    b = objectives._flatten(groups, params)
    A = b.adv[b.seq]
    bound = np.where(A > 0, cfg.clip_high, cfg.clip_low)
    if kind is ObjectiveKind.GSPO:
        s = np.exp(b.seq_sum(b.log_ratio) / b.lengths)
        seq_bound = np.where(b.adv > 0, cfg.clip_high, cfg.clip_low)
        near_seq = np.abs(s - seq_bound) < band
        near = near_seq[b.seq]
    else:
        near = np.abs(b.ratio - bound) < band
    return {int(r) for r in b.rows[near]}


def touched_rows(groups, params):
    rows = set()
    for group in groups:
        for t in group.trajectories:
            rows.update(int(r) for r in params.response_states(t.prompt_bucket, t.response_tokens))
    return rows


def run_gradcheck(kind, instance_spec=None, rtol=1e-5, atol=1e-9, seed=0, gate_cfg=None):
    """Compare analytic and finite-difference gradients on a random instance."""
    kind = ObjectiveKind.parse(kind)
    spec = instance_spec or InstanceSpec()
    cfg = gate_cfg or GateConfig()
    groups, _, params = random_instance(spec, seed)
    analytic = objectives.evaluate(kind, groups, params, cfg, with_stats=False).gradient
    return check_gradient(kind, groups, params, cfg, analytic, rtol, atol, seed, spec)


def check_gradient(kind, groups, params, cfg, analytic, rtol, atol, seed=0, spec=None):
    spec = spec or InstanceSpec()
    touched = sorted(touched_rows(groups, params))
    V = params.vocab_size
    if len(touched) * V > MAX_COORDS:
        raise ValidationError(f"instance touches {len(touched) * V} coordinates (> {MAX_COORDS})")
    kinks = kink_rows(kind, groups, params, cfg)

    checked = skipped = 0
    max_rel = max_abs = 0.0
    worst, worst_score, all_ok = None, -1.0, True
    for row in touched:
        if row in kinks:
            skipped += V
            continue
        for col in range(V):
            coord = (row, col)
            h = step_size(params.logits[coord])
            fd = objective_fd_grad(kind, groups, params, cfg, coord, h)
            an = analytic[coord]
            abs_err = abs(fd - an)
            scale = max(abs(fd), abs(an))
            rel_err = abs_err / scale if scale > 0 else 0.0
            checked += 1
            max_rel, max_abs = max(max_rel, rel_err), max(max_abs, abs_err)
            ok = rel_err <= rtol or abs_err <= atol
            all_ok &= ok
            score = min(rel_err / rtol if rtol > 0 else np.inf, abs_err / atol if atol > 0 else np.inf)
            if abs_err > 0 and score > worst_score:
                worst, worst_score = coord, score

    untouched = [r for r in range(params.num_states) if r not in set(touched)]
    rng = substream(seed, INSTANCE, 1)
    n_sample = min(spec.num_untouched, len(untouched) * V)
    nonzero = 0
    if n_sample:
        flat = rng.choice(len(untouched) * V, size=n_sample, replace=False)
        for f in flat:
            coord = (untouched[f // V], int(f % V))
            if analytic[coord] != 0.0:
                nonzero += 1
                all_ok = False
                worst = coord

    return GradCheckReport(
        kind=kind,
        coords_checked=checked,
        max_rel_err=max_rel,
        max_abs_err=max_abs,
        skipped_kink_coords=skipped,
        passed=bool(all_ok and checked > 0),
        worst_coord=worst,
        untouched_checked=int(n_sample),
        untouched_nonzero=nonzero,
    )
