"""Gate functions applied to importance ratios.

All functions accept scalars or numpy arrays for ``rho`` and ``advantage`` and
broadcast them.  Temperature and clip branch follow the sign of the advantage;
an advantage of exactly zero takes the non-positive branch.

================  =====================================================
``clip_gate``      advantage-aware hard clip
``soft_gate``      sigmoid gate ``sigmoid(tau (rho-1)) * 4/tau``
``sspo_gate``      arctan gate ``exp(arctan(tau (rho-1)) / tau)``
``sspo_weight``    ``f'/f = 1 / (1 + (tau (rho-1))**2)`` and ``rho f'/f``
``geo_gate_log``   log of the geometric mean of sspo gates over a sequence
================  =====================================================
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import expit

from .errors import ValidationError


@dataclass(frozen=True)
class GateConfig:
    tau_pos: float = 1.0
    tau_neg: float = 2.0
    eps_low: float = 0.2
    eps_high: float = 0.2
    allow_tau_inversion: bool = False

    def __post_init__(self):
        for name in ("tau_pos", "tau_neg", "eps_high"):
            v = getattr(self, name)
            if not (v > 0):  # also rejects NaN
                raise ValidationError(f"gate.{name} must be > 0, got {v}")
        if not math.isfinite(self.tau_pos) or not math.isfinite(self.tau_neg):
            raise ValidationError("temperatures must be finite")
        if not 0.0 < self.eps_low < 1.0:
            raise ValidationError(f"gate.eps_low must lie in (0, 1), got {self.eps_low}")
        if self.tau_neg < self.tau_pos and not self.allow_tau_inversion:
            raise ValidationError(
                f"gate.tau_neg ({self.tau_neg}) must be >= gate.tau_pos ({self.tau_pos}); "
                "set allow_tau_inversion for ablations"
            )

    @property
    def clip_high(self):
        return 1.0 + self.eps_high

    @property
    def clip_low(self):
        return 1.0 - self.eps_low


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def temperature(advantage, cfg):
    return _out(np.where(np.asarray(advantage) > 0, cfg.tau_pos, cfg.tau_neg))


def clip_gate(rho, advantage, cfg):
    rho = np.asarray(rho, dtype=np.float64)
    pos = np.asarray(advantage) > 0
    return _out(np.where(pos, np.minimum(rho, cfg.clip_high), np.maximum(rho, cfg.clip_low)))


def is_clipped(rho, advantage, cfg):
    """True where ``clip_gate`` returns its constant branch (zero gradient)."""
    rho = np.asarray(rho, dtype=np.float64)
    pos = np.asarray(advantage) > 0
    return np.where(pos, rho > cfg.clip_high, rho < cfg.clip_low)


def soft_gate(rho, advantage, cfg):
    tau = np.asarray(temperature(advantage, cfg))
    x = np.asarray(rho, dtype=np.float64) - 1.0
    return _out(expit(tau * x) * 4.0 / tau)


def soft_gate_derivative(rho, advantage, cfg):
    tau = np.asarray(temperature(advantage, cfg))
    g = expit(tau * (np.asarray(rho, dtype=np.float64) - 1.0))
    return _out(4.0 * g * (1.0 - g))


def sspo_gate(rho, advantage, cfg):
    tau = np.asarray(temperature(advantage, cfg))
    x = np.asarray(rho, dtype=np.float64) - 1.0
    return _out(np.exp(np.arctan(tau * x) / tau))


def sspo_ratio(rho, advantage, cfg):
    """``f'/f`` of the arctan gate: a Cauchy bell centred at rho = 1."""
    tau = np.asarray(temperature(advantage, cfg))
    u = tau * (np.asarray(rho, dtype=np.float64) - 1.0)
    return _out(1.0 / (1.0 + u * u))


def sspo_weight(rho, advantage, cfg):
    """Return ``(f'/f, rho * f'/f)`` for the arctan gate."""
    ratio = np.asarray(sspo_ratio(rho, advantage, cfg))
    return _out(ratio), _out(np.asarray(rho, dtype=np.float64) * ratio)


def geo_gate_log(ratios, advantage, cfg):
    """log of ``(prod_t sspo_gate(rho_t)) ** (1/|y|)`` for one sequence.

    The temperature is shared by the whole sequence, so the log gate reduces
    to ``sum_t arctan(tau (rho_t - 1)) / (|y| tau)`` and never over/underflows.
    """
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValidationError("geo_gate_log needs a non-empty ratio list")
    tau = temperature(float(advantage), cfg)
    return float(np.sum(np.arctan(tau * (r - 1.0))) / (r.size * tau))


def sspo_gate_bounds(tau):
    """Open interval that contains every value of the arctan gate at temperature tau."""
    half = math.pi / (2.0 * tau)
    return math.exp(-half), math.exp(half)


def local_weight_supremum(tau, rho_max=None):
    """Locate the maximum of ``rho / (1 + (tau (rho-1))**2)`` over rho > 0.

    Bracketed bounded scalar search; returns ``(rho_star, w_star)``.  The
    closed form is ``rho* = sqrt(1 + 1/tau**2)``, which tests compare against.
    """
    hi = rho_max if rho_max is not None else 1.0 + 10.0 / tau + 10.0
    res = minimize_scalar(
        lambda r: -r / (1.0 + (tau * (r - 1.0)) ** 2),
        bounds=(1e-12, hi),
        method="bounded",
        options={"xatol": 1e-12},
    )
    return float(res.x), float(-res.fun)
