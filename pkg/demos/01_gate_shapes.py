# ---
# jupyter:
#   jupytext:
#     formats: py:percent
#   kernelspec:
#     display_name: Python 3
#     language: python
#     name: python3
# ---

# %% [markdown]
# # Gate shapes
#
# Every surrogate decides how much a token with importance ratio rho may push
# the policy.  Hard clipping switches the push off outside ``[1-eps, 1+eps]``.
# The sigmoid gate fades it out, and the arctan-exp gate fades it out along a
# Cauchy-shaped bell whose width is the temperature.

# %%
import matplotlib.pyplot as plt
import numpy as np

from sspo import gates
from sspo.gates import GateConfig

cfg = GateConfig(tau_pos=1.0, tau_neg=2.0)
rho = np.linspace(0.05, 3.0, 600)

# %% [markdown]
# The per-token gradient weight is the derivative of the gate with respect to
# rho times rho.  At rho = 1 all three agree on weight one.

# %%
clip_w = np.where(gates.is_clipped(rho, 1.0, cfg), 0.0, rho)
soft_w = gates.soft_gate_derivative(rho, 1.0, cfg) * rho
_, sspo_w = gates.sspo_weight(rho, 1.0, cfg)

one = np.array([1.0])
print("soft weight at rho=1:", gates.soft_gate_derivative(one, 1.0, cfg)[0])
print("sspo weight at rho=1:", gates.sspo_weight(one, 1.0, cfg)[1][0])

# %%
fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
axes[0].plot(rho, clip_w, label="hard clip")
axes[0].plot(rho, soft_w, label="sigmoid")
axes[0].plot(rho, sspo_w, label="arctan-exp")
axes[0].set_xlabel("rho")
axes[0].set_ylabel("gradient weight (positive advantage)")
axes[0].legend()

for tau in (0.5, 1.0, 2.0, 4.0):
    c = GateConfig(tau_pos=tau, tau_neg=tau)
    axes[1].plot(rho, gates.sspo_gate(rho, 1.0, c), label=f"tau={tau}")
axes[1].set_xlabel("rho")
axes[1].set_ylabel("sspo_gate")
axes[1].legend()
fig.tight_layout()
plt.show()

# %% [markdown]
# ## Bounded by construction
#
# The arctan keeps the gate inside ``exp(-pi/(2 tau)), exp(pi/(2 tau))`` no
# matter how far rho strays, so a runaway ratio cannot blow up the objective.

# %%
for tau in (0.5, 1.0, 2.0):
    c = GateConfig(tau_pos=tau, tau_neg=tau)
    extreme = gates.sspo_gate(np.array([1e-6, 1e6]), 1.0, c)
    lo, hi = gates.sspo_gate_bounds(tau)
    print(f"tau={tau}: gate at extremes {extreme}, bounds ({lo:.4f}, {hi:.4f})")

# %% [markdown]
# With a tiny temperature the arctan is linear over the interesting range and
# the gate collapses to ``exp(rho - 1)``.

# %%
tiny = GateConfig(tau_pos=1e-6, tau_neg=1e-6)
r = np.linspace(0.5, 1.5, 11)
print(np.max(np.abs(gates.sspo_gate(r, 1.0, tiny) - np.exp(r - 1.0))))
