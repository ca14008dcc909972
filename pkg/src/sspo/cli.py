"""Command line entry point: ``sspo {train,gates,gradcheck,compare}``.

Exit codes: 0 success, 1 validation or usage error, 2 numeric failure
(divergence, failed gradient check).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import config as config_mod
from . import gates, report
from .compare import run_compare
from .errors import NumericError, ValidationError
from .gates import GateConfig
from .gradcheck import InstanceSpec, run_gradcheck
from .objectives import ObjectiveKind
from .trainer import Trainer, TrainingDiverged

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERIC = 0, 1, 2

GATES_HEADER = [
    "rho",
    "clip_gate_pos",
    "clip_gate_neg",
    "soft_gate",
    "soft_gate_derivative",
    "sspo_gate",
    "f_ratio",
    "local_weight",
]
KINDS = [k.value for k in ObjectiveKind]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def cmd_train(config_path, out_dir=None):
    exp = config_mod.load(config_path)
    out_dir = out_dir or exp.output_dir
    if not out_dir:
        raise ValidationError("no output directory: pass --out or set 'output_dir' in the config")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(exp.dumps())

    every = exp.checkpoint_every

    def on_update(trainer, _rows):
        if every and trainer.updates_done % every == 0:
            trainer.params.save(os.path.join(out_dir, f"checkpoint_{trainer.updates_done:06d}.bin"))

    trainer = Trainer(exp.train)
    try:
        trainer.run(callback=on_update)
    finally:
        with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8", newline="") as fh:
            fh.write(report.metrics_csv(trainer.metrics))
    trainer.params.save(os.path.join(out_dir, "checkpoint_final.bin"))
    return trainer


def gate_grid(rho_min, rho_max, steps):
    """Evenly spaced, strictly increasing grid that contains rho = 1 exactly."""
    if not (rho_min > 0 and steps >= 2 and rho_min < rho_max):
        raise ValidationError("need 0 < rho_min < rho_max and steps >= 2")
    if not rho_min <= 1.0 <= rho_max:
        raise ValidationError("the rho grid must contain 1")
    grid = np.linspace(rho_min, rho_max, steps)
    grid[int(np.argmin(np.abs(grid - 1.0)))] = 1.0
    return grid


def gate_rows(cfg, grid, negative=False):
    adv = -1.0 if negative else 1.0
    f_ratio, local = gates.sspo_weight(grid, adv, cfg)
    cols = [
        grid,
        gates.clip_gate(grid, 1.0, cfg),
        gates.clip_gate(grid, -1.0, cfg),
        gates.soft_gate(grid, adv, cfg),
        gates.soft_gate_derivative(grid, adv, cfg),
        gates.sspo_gate(grid, adv, cfg),
        f_ratio,
        local,
    ]
    return [list(map(float, row)) for row in zip(*cols)]


def cmd_gates(tau_pos, tau_neg, eps_low, eps_high, rho_min, rho_max, steps, out_file=None,
              negative=False):
    cfg = GateConfig(tau_pos, tau_neg, eps_low, eps_high, allow_tau_inversion=True)
    text = report.csv_text(GATES_HEADER, gate_rows(cfg, gate_grid(rho_min, rho_max, steps), negative))
    if out_file:
        with open(out_file, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return text


def cmd_gradcheck(objective, seeds, rtol, atol=None, out=None):
    out = out or sys.stdout
    kinds = list(ObjectiveKind) if objective == "all" else [ObjectiveKind.parse(objective)]
    atol = rtol * 1e-4 if atol is None else atol
    ok = True
    for kind in kinds:
        for seed in seeds:
            rep = run_gradcheck(kind, InstanceSpec(), rtol=rtol, atol=atol, seed=seed)
            out.write(f"seed={seed} {rep.format()}\n")
            ok &= rep.passed
    return ok


def build_parser():
    p = _Parser(prog="sspo", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train one policy from a JSON config")
    t.add_argument("config")
    t.add_argument("--out", help="output directory (overrides output_dir in the config)")

    g = sub.add_parser("gates", help="tabulate gate functions on a rho grid")
    g.add_argument("--tau-pos", type=float, default=1.0)
    g.add_argument("--tau-neg", type=float, default=2.0)
    g.add_argument("--eps-low", type=float, default=0.2)
    g.add_argument("--eps-high", type=float, default=0.2)
    g.add_argument("--rho-min", type=float, default=0.05)
    g.add_argument("--rho-max", type=float, default=3.0)
    g.add_argument("--steps", type=int, default=60)
    g.add_argument("--negative", action="store_true",
                   help="evaluate soft/sspo columns with the negative-advantage temperature")
    g.add_argument("--out", help="CSV path (default: stdout)")

    c = sub.add_parser("gradcheck", help="finite-difference check of analytic gradients")
    c.add_argument("--objective", required=True, choices=KINDS + ["all"])
    c.add_argument("--seed", type=int, nargs="+", default=[0])
    c.add_argument("--rtol", type=float, default=1e-5)
    c.add_argument("--atol", type=float, default=None,
                   help="absolute tolerance (default: 1e-4 * rtol)")

    m = sub.add_parser("compare", help="objective x seed comparison matrix")
    m.add_argument("config")
    m.add_argument("--objectives", nargs="+", choices=KINDS, default=KINDS)
    m.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    m.add_argument("--out", required=True)
    m.add_argument("--threshold", type=float, default=0.9)
    m.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            trainer = cmd_train(args.config, args.out)
            last = trainer.metrics[-1] if trainer.metrics else None
            if last is not None:
                print(f"done: {trainer.updates_done} updates, final mean_reward={report.fmt(last.mean_reward)}")
        elif args.command == "gates":
            cmd_gates(args.tau_pos, args.tau_neg, args.eps_low, args.eps_high,
                      args.rho_min, args.rho_max, args.steps, args.out, args.negative)
        elif args.command == "gradcheck":
            if not cmd_gradcheck(args.objective, args.seed, args.rtol, args.atol):
                return EXIT_NUMERIC
        elif args.command == "compare":
            exp = config_mod.load(args.config)
            _, summary, verdict = run_compare(exp, args.objectives, args.seeds, args.out,
                                              args.threshold, args.jobs)
            sys.stdout.write(report.csv_text(
                ["objective", "seed", "status", "final_mean_reward", "updates_to_threshold"],
                ([r[0], r[1], r[2], r[3], r[5]] for r in summary),
            ))
            sys.stdout.write(verdict)
    except TrainingDiverged as exc:
        print(f"error: training diverged at update {exc.update_index}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
