"""Synthetic tasks with deterministic, verifiable rewards in [0, 1].

``vocab_size`` counts EOS, so payload tokens are ``0 .. V-2`` and EOS is
``V-1``.  Each prompt has exactly one target response: the target token(s)
followed by EOS.

copy_last
    target = [last prompt token, EOS]
sum_mod
    target = [sum(prompt) mod (V-1), EOS]
repeat_n
    target = [last prompt token] * n + [EOS]

The prompt bucket handed to the policy is ``answer_token mod P``, which lets a
tabular policy learn a per-prompt answer without seeing the full prompt.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

TASK_KINDS = ("copy_last", "sum_mod", "repeat_n")
REWARD_MODES = ("binary", "fractional")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    vocab_size: int
    prompt_len: int = 2
    max_len: int = 4
    reward_mode: str = "binary"
    n: int = 3

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValidationError(f"task.kind must be one of {TASK_KINDS}, got {self.kind!r}")
        if self.reward_mode not in REWARD_MODES:
            raise ValidationError(
                f"task.reward_mode must be one of {REWARD_MODES}, got {self.reward_mode!r}"
            )
        if self.vocab_size < 3:
            raise ValidationError("task.vocab_size must be >= 3 (payload tokens + EOS)")
        if self.prompt_len < 1:
            raise ValidationError("task.prompt_len must be >= 1")
        if self.max_len < 1:
            raise ValidationError("task.max_len must be >= 1")
        if self.kind == "repeat_n" and self.n < 1:
            raise ValidationError("task.n must be >= 1 for repeat_n")

    @property
    def eos(self):
        return self.vocab_size - 1

    @property
    def num_payload(self):
        return self.vocab_size - 1


def answer_token(spec, prompt):
    if spec.kind == "sum_mod":
        return int(sum(prompt)) % spec.num_payload
    return int(prompt[-1])


def target(spec, prompt):
    a = answer_token(spec, prompt)
    reps = spec.n if spec.kind == "repeat_n" else 1
    return (a,) * reps + (spec.eos,)


def prompt_id(spec, prompt):
    """Index of the prompt in the enumeration of all prompts (base V-1 digits)."""
    idx = 0
    for t in prompt:
        idx = idx * spec.num_payload + int(t)
    return idx


def make_prompt(spec, rng, num_buckets=None):
    """Draw a uniform random prompt; return ``(prompt_tokens, prompt_bucket)``."""
    P = spec.num_payload if num_buckets is None else num_buckets
    prompt = tuple(int(t) for t in rng.integers(0, spec.num_payload, size=spec.prompt_len))
    return prompt, bucket(spec, prompt, P)


def bucket(spec, prompt, num_buckets):
    return answer_token(spec, prompt) % num_buckets


def reward(spec, prompt, response):
    response = tuple(int(t) for t in response)
    if not response:
        raise ValidationError("response must be non-empty")
    if any(not 0 <= int(t) < spec.num_payload for t in prompt):
        raise ValidationError(f"prompt tokens must be payload tokens in [0, {spec.num_payload})")
    tgt = target(spec, prompt)
    if spec.reward_mode == "binary":
        return 1.0 if response == tgt else 0.0
    hits = sum(a == b for a, b in zip(response, tgt))
    return hits / max(len(response), len(tgt))
