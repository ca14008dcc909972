"""Strict JSON experiment configuration.

Layout (defaults in brackets)::

    {
      "task":   {"kind", "vocab_size", "prompt_len" [2], "max_len" [4],
                 "reward_mode" ["binary"], "n" [3]},
      "policy": {"k" [1], "prompt_buckets" [vocab_size - 1]},
      "objective": "grpo" | "gspo" | "gmpo" | "sapo" | "sspo",
      "gate":   {"tau_pos" [1], "tau_neg" [2], "eps_low" [0.2], "eps_high" [0.2],
                 "allow_tau_inversion" [false]},
      "train":  {"G" [8], "B" [16], "E" [2], "M" [2], "optimizer" ["adam"],
                 "learning_rate" [0.05], "adam_beta1" [0.9], "adam_beta2" [0.999],
                 "adam_eps" [1e-8], "total_updates" [300], "seed" [0],
                 "advantage_eps" [1e-8], "checkpoint_every" [0]},
      "output_dir": null
    }

Unknown keys anywhere are rejected.  Gate defaults only apply when the whole
``gate`` section is omitted; an explicit ``gate`` section must name every
parameter the chosen objective reads (temperatures for sapo/sspo, clip widths
for grpo/gspo/gmpo).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

from .errors import ValidationError
from .gates import GateConfig
from .objectives import ObjectiveKind
from .tasks import TaskSpec
from .trainer import TrainConfig

_TASK_KEYS = {"kind", "vocab_size", "prompt_len", "max_len", "reward_mode", "n"}
_POLICY_KEYS = {"k", "prompt_buckets"}
_GATE_KEYS = {"tau_pos", "tau_neg", "eps_low", "eps_high", "allow_tau_inversion"}
_TRAIN_KEYS = {
    "G": "group_size",
    "B": "prompts_per_rollout",
    "E": "epochs_per_rollout",
    "M": "minibatches_per_epoch",
    "optimizer": "optimizer",
    "learning_rate": "learning_rate",
    "adam_beta1": "adam_beta1",
    "adam_beta2": "adam_beta2",
    "adam_eps": "adam_eps",
    "total_updates": "total_updates",
    "seed": "seed",
    "advantage_eps": "advantage_eps",
}
_TOP_KEYS = {"task", "policy", "objective", "gate", "train", "output_dir"}

_INT_KEYS = {
    "vocab_size", "prompt_len", "max_len", "n", "k", "prompt_buckets",
    "G", "B", "E", "M", "total_updates", "seed", "checkpoint_every",
}


@dataclass(frozen=True)
class ExperimentConfig:
    train: TrainConfig
    output_dir: str = None
    checkpoint_every: int = 0

    def with_run(self, objective=None, seed=None):
        t = self.train
        if objective is not None:
            t = replace(t, objective=ObjectiveKind.parse(objective))
        if seed is not None:
            t = replace(t, seed=int(seed))
        return replace(self, train=t)

    def to_dict(self):
        t = self.train
        return {
            "task": {
                "kind": t.task.kind,
                "vocab_size": t.task.vocab_size,
                "prompt_len": t.task.prompt_len,
                "max_len": t.task.max_len,
                "reward_mode": t.task.reward_mode,
                "n": t.task.n,
            },
            "policy": {"k": t.context_order, "prompt_buckets": t.prompt_buckets},
            "objective": t.objective.value,
            "gate": {
                "tau_pos": t.gate.tau_pos,
                "tau_neg": t.gate.tau_neg,
                "eps_low": t.gate.eps_low,
                "eps_high": t.gate.eps_high,
                "allow_tau_inversion": t.gate.allow_tau_inversion,
            },
            "train": {
                **{key: getattr(t, attr) for key, attr in _TRAIN_KEYS.items()},
                "checkpoint_every": self.checkpoint_every,
            },
            "output_dir": self.output_dir,
        }

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def _section(doc, name, allowed, required=False):
    if name not in doc:
        if required:
            raise ValidationError(f"missing required section '{name}'")
        return {}
    sec = doc[name]
    if not isinstance(sec, dict):
        raise ValidationError(f"'{name}' must be an object")
    unknown = sorted(set(sec) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown key(s) in '{name}': {', '.join(unknown)}")
    for key, val in sec.items():
        _check_type(f"{name}.{key}", key, val)
    return sec


def _check_type(path, key, val):
    if key in _INT_KEYS:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ValidationError(f"{path} must be an integer")
    elif key == "allow_tau_inversion":
        if not isinstance(val, bool):
            raise ValidationError(f"{path} must be a boolean")
    elif key in ("kind", "reward_mode", "optimizer"):
        if not isinstance(val, str):
            raise ValidationError(f"{path} must be a string")
    elif isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ValidationError(f"{path} must be a number")


def parse_config(doc):
    """Validate a decoded JSON document and build an :class:`ExperimentConfig`."""
    if not isinstance(doc, dict):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ValidationError(f"unknown top-level key(s): {', '.join(unknown)}")

    task_sec = _section(doc, "task", _TASK_KEYS, required=True)
    for key in ("kind", "vocab_size"):
        if key not in task_sec:
            raise ValidationError(f"missing required key 'task.{key}'")
    policy_sec = _section(doc, "policy", _POLICY_KEYS)
    gate_sec = _section(doc, "gate", _GATE_KEYS)
    train_sec = _section(doc, "train", set(_TRAIN_KEYS) | {"checkpoint_every"})

    if "objective" not in doc:
        raise ValidationError("missing required key 'objective'")
    if not isinstance(doc["objective"], str):
        raise ValidationError("'objective' must be a string")
    try:
        objective = ObjectiveKind.parse(doc["objective"])
    except ValidationError as exc:
        raise ValidationError(f"objective: {exc}") from None

    if "gate" in doc:
        needed = ("eps_low", "eps_high") if objective.uses_clip else ("tau_pos", "tau_neg")
        for key in needed:
            if key not in gate_sec:
                raise ValidationError(
                    f"missing required key 'gate.{key}' for objective '{objective.value}'"
                )

    output_dir = doc.get("output_dir")
    if output_dir is not None and not isinstance(output_dir, str):
        raise ValidationError("'output_dir' must be a string or null")

    task = TaskSpec(**task_sec)
    gate = GateConfig(**{k: float(v) if k != "allow_tau_inversion" else v for k, v in gate_sec.items()})
    train_kwargs = {
        _TRAIN_KEYS[k]: v for k, v in train_sec.items() if k != "checkpoint_every"
    }
    for key in ("learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "advantage_eps"):
        if key in train_kwargs:
            train_kwargs[key] = float(train_kwargs[key])
    train = TrainConfig(
        task=task,
        objective=objective,
        gate=gate,
        context_order=policy_sec.get("k", 1),
        prompt_buckets=policy_sec.get("prompt_buckets"),
        **train_kwargs,
    )
    checkpoint_every = train_sec.get("checkpoint_every", 0)
    if checkpoint_every < 0:
        raise ValidationError("train.checkpoint_every must be >= 0")
    return ExperimentConfig(train=train, output_dir=output_dir, checkpoint_every=checkpoint_every)


def loads(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from None
    return parse_config(doc)


def load(path):
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
