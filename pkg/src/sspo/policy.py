"""Tabular order-k autoregressive softmax policy.

The policy conditions on a prompt bucket and the last ``k`` response tokens.
One logit row exists per context, so the parameter table has shape
``(P * V**k, V)``.

Conventions
-----------
* EOS is the last vocabulary index, ``V - 1``.
* Context padding (BOS) reuses token index 0.
* Row index of a context is ``bucket * V**k + sum_j last_k[j] * V**(k-1-j)``,
  oldest token first.

Checkpoint format
-----------------
Little-endian binary::

    bytes 0..7    magic  b"SSPOPOL1"
    bytes 8..19   uint32 V, uint32 k, uint32 P
    bytes 20..    float64 logits, row-major, P * V**k rows of V entries
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .core_group import Trajectory
from .errors import ValidationError

BOS = 0
_MAGIC = b"SSPOPOL1"
_HEADER = struct.Struct("<8sIII")


@dataclass(frozen=True)
class ContextState:
    prompt_bucket: int
    last_k: tuple


class PolicyParams:
    """Logit table of the tabular policy (houses both theta and theta_old)."""

    def __init__(self, vocab_size, context_order=1, num_prompt_buckets=1, logits=None):
        if vocab_size < 2 or context_order < 1 or num_prompt_buckets < 1:
            raise ValidationError(
                f"need V >= 2, k >= 1, P >= 1 (got V={vocab_size}, k={context_order}, "
                f"P={num_prompt_buckets})"
            )
        self.vocab_size = int(vocab_size)
        self.context_order = int(context_order)
        self.num_prompt_buckets = int(num_prompt_buckets)
        shape = (self.num_states, self.vocab_size)
        if logits is None:
            logits = np.zeros(shape)
        logits = np.array(logits, dtype=np.float64)
        if logits.shape != shape:
            raise ValidationError(f"logits shape {logits.shape} != {shape}")
        if not np.all(np.isfinite(logits)):
            raise ValidationError("logits must be finite")
        self.logits = logits
        self._powers = self.vocab_size ** np.arange(self.context_order - 1, -1, -1)

    @property
    def V(self):
        return self.vocab_size

    @property
    def eos(self):
        return self.vocab_size - 1

    @property
    def num_states(self):
        return self.num_prompt_buckets * self.vocab_size**self.context_order

    def copy(self):
        return PolicyParams(
            self.vocab_size, self.context_order, self.num_prompt_buckets, self.logits.copy()
        )

    def __eq__(self, other):
        if not isinstance(other, PolicyParams):
            return NotImplemented
        return (
            self.vocab_size == other.vocab_size
            and self.context_order == other.context_order
            and self.num_prompt_buckets == other.num_prompt_buckets
            and np.array_equal(self.logits, other.logits)
        )

    def __repr__(self):
        return (
            f"PolicyParams(V={self.vocab_size}, k={self.context_order}, "
            f"P={self.num_prompt_buckets})"
        )

    def state_index(self, prompt_bucket, last_k):
        return state_index(prompt_bucket, last_k, self.vocab_size, self.num_prompt_buckets)

    def response_states(self, prompt_bucket, tokens):
        """Row index of the context in which each response token was emitted."""
        tokens = np.asarray(tokens, dtype=np.int64)
        k, V = self.context_order, self.vocab_size
        if tokens.size and (tokens.min() < 0 or tokens.max() >= V):
            raise ValidationError(f"token outside [0, {V})")
        if not 0 <= prompt_bucket < self.num_prompt_buckets:
            raise ValidationError(f"bucket {prompt_bucket} outside [0, {self.num_prompt_buckets})")
        n = tokens.size
        padded = np.concatenate([np.full(k, BOS, dtype=np.int64), tokens])
        rows = np.full(n, prompt_bucket * V**k, dtype=np.int64)
        for j in range(k):
            rows += padded[j : j + n] * self._powers[j]
        return rows

    def log_softmax_rows(self, rows):
        return log_softmax(self.logits[rows])

    def sequence_log_probs(self, prompt_bucket, tokens):
        """log pi(y_t | x, y_<t) for every token of a response."""
        rows = self.response_states(prompt_bucket, tokens)
        logp = self.log_softmax_rows(rows)
        return logp[np.arange(rows.size), np.asarray(tokens, dtype=np.int64)]

    def to_bytes(self):
        header = _HEADER.pack(_MAGIC, self.vocab_size, self.context_order, self.num_prompt_buckets)
        return header + self.logits.astype("<f8").tobytes(order="C")

    @classmethod
    def from_bytes(cls, blob):
        if len(blob) < _HEADER.size:
            raise ValidationError("checkpoint too short")
        magic, V, k, P = _HEADER.unpack_from(blob)
        if magic != _MAGIC:
            raise ValidationError(f"bad checkpoint magic {magic!r}")
        n_rows = P * V**k
        body = blob[_HEADER.size :]
        if len(body) != n_rows * V * 8:
            raise ValidationError(
                f"checkpoint body has {len(body)} bytes, expected {n_rows * V * 8}"
            )
        logits = np.frombuffer(body, dtype="<f8").reshape(n_rows, V).astype(np.float64)
        return cls(V, k, P, logits)

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def log_softmax(z):
    """Row-wise log softmax with max subtraction."""
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def state_index(prompt_bucket, last_k, vocab_size, num_prompt_buckets=None):
    """Row index of ``(prompt_bucket, last_k)``; ``k`` is ``len(last_k)``."""
    last_k = [int(t) for t in last_k]
    if not last_k:
        raise ValidationError("context must hold at least one token")
    if any(t < 0 or t >= vocab_size for t in last_k):
        raise ValidationError(f"context token outside [0, {vocab_size}): {last_k}")
    if prompt_bucket < 0 or (num_prompt_buckets is not None and prompt_bucket >= num_prompt_buckets):
        raise ValidationError(f"prompt bucket {prompt_bucket} out of range")
    idx = 0
    for t in last_k:
        idx = idx * vocab_size + t
    return int(prompt_bucket) * vocab_size ** len(last_k) + idx


def _row(params, state):
    if isinstance(state, ContextState):
        return params.state_index(state.prompt_bucket, state.last_k)
    state = int(state)
    if not 0 <= state < params.num_states:
        raise ValidationError(f"state row {state} outside [0, {params.num_states})")
    return state


def log_prob(params, state, token):
    """log softmax of the state's logit row at ``token``.

    ``state`` may be a :class:`ContextState` or a precomputed row index.
    """
    if not 0 <= token < params.vocab_size:
        raise ValidationError(f"token {token} outside vocabulary")
    return float(params.log_softmax_rows(_row(params, state))[token])


def probs(params, state):
    return np.exp(params.log_softmax_rows(_row(params, state)))


def grad_log_prob(params, state, token):
    """Gradient of log pi(token | state) w.r.t. the state's logit row.

    Returns ``(row, g)`` with ``g = onehot(token) - softmax(row)``; every other
    row of the table has zero gradient.
    """
    row = _row(params, state)
    if not 0 <= token < params.vocab_size:
        raise ValidationError(f"token {token} outside vocabulary")
    g = -np.exp(params.log_softmax_rows(row))
    g[token] += 1.0
    return row, g


def entropy(params, state):
    logp = params.log_softmax_rows(_row(params, state))
    p = np.exp(logp)
    return float(-np.sum(np.where(p > 0, p * logp, 0.0)))


def sample_response(params, prompt_tokens, prompt_bucket, max_len, rng, prompt_id=0):
    """Ancestral sampling at temperature 1 until EOS or ``max_len`` tokens.

    The returned trajectory records the sampling-time log-probabilities as its
    behaviour log-probs and carries reward 0 until a task scores it.
    """
    if max_len < 1:
        raise ValidationError("max_len must be >= 1")
    V, k = params.vocab_size, params.context_order
    context = [BOS] * k
    tokens, logps = [], []
    for _ in range(max_len):
        row = params.state_index(prompt_bucket, context)
        logp = params.log_softmax_rows(row)
        cdf = np.cumsum(np.exp(logp))
        tok = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
        tok = min(tok, V - 1)
        tokens.append(tok)
        logps.append(logp[tok])
        if tok == V - 1:
            break
        context = context[1:] + [tok]
    return Trajectory(
        prompt_id=prompt_id,
        prompt_tokens=tuple(prompt_tokens),
        prompt_bucket=prompt_bucket,
        response_tokens=tuple(tokens),
        behavior_logps=np.array(logps),
    )
