"""Multi-objective, multi-seed comparison runner.

Every ``(objective, seed)`` cell trains independently with random streams
salted by the objective, writes its own ``metrics.csv``, and is summarised in
one row.  Cells may run in worker processes; results are merged in sorted
``(objective, seed)`` order so the output files never depend on scheduling.

Besides ``summary.csv`` the runner writes

``grad_variance.csv``
    per update: mean and variance of the gradient norm over its E x M steps.
``variance_report.csv`` / ``variance_report.txt``
    per objective averages of that variance, and the sequence-level (GSPO,
    SSPO) versus token-level (GRPO) comparison.  The direction is recorded,
    not asserted.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import report
from .errors import NumericError, ValidationError
from .objectives import ObjectiveKind
from .trainer import Trainer, TrainingDiverged

SUMMARY_HEADER = [
    "objective",
    "seed",
    "status",
    "final_mean_reward",
    "best_mean_reward",
    "updates_to_threshold",
    "final_entropy",
    "grad_norm_var",
    "max_abs_param",
    "message",
]
GRAD_VAR_HEADER = ["objective", "seed", "update_index", "grad_norm_mean", "grad_norm_var"]
VARIANCE_HEADER = ["task", "objective", "level", "runs", "mean_update_grad_norm_var", "mean_grad_norm"]

SEQUENCE_LEVEL = (ObjectiveKind.GSPO, ObjectiveKind.SSPO)
TOKEN_LEVEL = (ObjectiveKind.GRPO,)


@dataclass
class CellResult:
    objective: ObjectiveKind
    seed: int
    status: str
    metrics: list
    max_abs_param: float
    message: str = ""


def stream_salt(objective):
    return 1 + ObjectiveKind.parse(objective).index


def run_cell(exp, objective, seed):
    cfg = exp.with_run(objective=objective, seed=seed).train
    trainer = Trainer(cfg, stream_salt=stream_salt(objective))
    try:
        metrics = trainer.run()
        status, message = "ok", ""
    except TrainingDiverged as exc:
        metrics, status, message = exc.metrics, "diverged", str(exc)
    except (NumericError, ValidationError) as exc:
        metrics, status, message = list(trainer.metrics), "error", str(exc)
    params = trainer.params.logits
    max_abs = float(np.abs(params).max()) if np.all(np.isfinite(params)) else float("inf")
    return CellResult(cfg.objective, cfg.seed, status, metrics, max_abs, message)


def per_update(metrics):
    """Group rows by update index -> list of rows (insertion ordered)."""
    out = {}
    for m in metrics:
        out.setdefault(m.update_index, []).append(m)
    return out


def summarise(cell, threshold=0.9):
    ups = per_update(cell.metrics)
    rewards = [rows[0].mean_reward for rows in ups.values()]
    hit = next((u for u, rows in ups.items() if rows[0].mean_reward >= threshold), -1)
    grad_norms = np.array([m.grad_norm for m in cell.metrics])
    return [
        cell.objective.value,
        cell.seed,
        cell.status,
        rewards[-1] if rewards else float("nan"),
        max(rewards) if rewards else float("nan"),
        hit,
        cell.metrics[-1].policy_entropy_mean if cell.metrics else float("nan"),
        float(grad_norms.var()) if grad_norms.size else float("nan"),
        cell.max_abs_param,
        cell.message,
    ]


def grad_variance_rows(cell):
    for u, rows in per_update(cell.metrics).items():
        g = np.array([m.grad_norm for m in rows])
        yield [cell.objective.value, cell.seed, u, float(g.mean()), float(g.var())]


def variance_report(cells, task_kind):
    """Per-objective averages plus a one-line sequence-vs-token verdict."""
    by_obj = {}
    for cell in cells:
        rows = list(grad_variance_rows(cell))
        if rows:
            by_obj.setdefault(cell.objective, []).append(
                (np.mean([r[4] for r in rows]), np.mean([r[3] for r in rows]))
            )
    table = []
    for obj in sorted(by_obj, key=lambda o: o.index):
        vals = np.array(by_obj[obj])
        level = "sequence" if obj in SEQUENCE_LEVEL else ("token" if obj in TOKEN_LEVEL else "other")
        table.append([task_kind, obj.value, level, len(vals), float(vals[:, 0].mean()), float(vals[:, 1].mean())])

    seq = [r[4] for r in table if r[2] == "sequence"]
    tok = [r[4] for r in table if r[2] == "token"]
    if seq and tok:
        s, t = float(np.mean(seq)), float(np.mean(tok))
        if s < t:
            direction = "sequence-level lower"
        elif s > t:
            direction = "sequence-level higher"
        else:
            direction = "equal"
        verdict = (
            f"task={task_kind} sequence_level_mean_update_grad_norm_var={report.fmt(s)} "
            f"token_level_mean_update_grad_norm_var={report.fmt(t)} direction={direction}\n"
        )
    else:
        verdict = (
            f"task={task_kind} comparison unavailable: needs at least one of "
            f"{[o.value for o in SEQUENCE_LEVEL]} and one of {[o.value for o in TOKEN_LEVEL]}\n"
        )
    return table, verdict


def run_compare(exp, objectives, seeds, out_dir, threshold=0.9, jobs=1):
    """Run the objective x seed matrix and write all comparison files."""
    objectives = [ObjectiveKind.parse(o) for o in objectives]
    seeds = [int(s) for s in seeds]
    if not objectives or not seeds:
        raise ValidationError("compare needs at least one objective and one seed")
    keys = sorted({(o, s) for o in objectives for s in seeds}, key=lambda k: (k[0].index, k[1]))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(run_cell, exp, o, s) for o, s in keys]
            cells = [f.result() for f in futures]
    else:
        cells = [run_cell(exp, o, s) for o, s in keys]

    os.makedirs(out_dir, exist_ok=True)
    for cell in cells:
        cell_dir = os.path.join(out_dir, "runs", f"{cell.objective.value}_seed{cell.seed}")
        os.makedirs(cell_dir, exist_ok=True)
        with open(os.path.join(cell_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(report.metrics_csv(cell.metrics))

    summary = [summarise(c, threshold) for c in cells]
    report.write_csv(os.path.join(out_dir, "summary.csv"), SUMMARY_HEADER, summary)
    report.write_csv(
        os.path.join(out_dir, "grad_variance.csv"),
        GRAD_VAR_HEADER,
        (row for c in cells for row in grad_variance_rows(c)),
    )
    table, verdict = variance_report(cells, exp.train.task.kind)
    report.write_csv(os.path.join(out_dir, "variance_report.csv"), VARIANCE_HEADER, table)
    with open(os.path.join(out_dir, "variance_report.txt"), "w", encoding="utf-8") as fh:
        fh.write(verdict)
    return cells, summary, verdict
