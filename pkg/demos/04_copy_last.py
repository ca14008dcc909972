# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Learning copy_last
#
# The task: repeat the last prompt token, then stop.  A first-order tabular
# policy with one row per answer bucket solves it quickly.

# %%
import matplotlib.pyplot as plt
import numpy as np

from sspo.tasks import TaskSpec
from sspo.trainer import TrainConfig, train

task = TaskSpec("copy_last", vocab_size=8, prompt_len=2, max_len=4)
curves = {}
for kind in ("grpo", "sapo", "sspo"):
    rows = train(TrainConfig(task=task, objective=kind, total_updates=120, seed=0))
    curves[kind] = rows

# %%
fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
for kind, rows in curves.items():
    u = np.array([r.update_index for r in rows])
    axes[0].plot(u, [r.mean_reward for r in rows], label=kind)
    axes[1].plot(u, [r.policy_entropy_mean for r in rows], label=kind)
axes[0].set_ylabel("mean reward")
axes[1].set_ylabel("policy entropy")
for ax in axes:
    ax.set_xlabel("update")
    ax.legend()
fig.tight_layout()
plt.show()

# %% [markdown]
# The reward climbs within a few dozen updates and then hovers between about
# 0.8 and 1.0.  Groups where every sample is correct get zero advantage, so
# the last bit of probability mass is only pushed on by the unlucky groups.

# %%
for kind, rows in curves.items():
    first = {}
    for r in rows:
        first.setdefault(r.update_index, r.mean_reward)
    hit = next((u for u, v in first.items() if v >= 0.9), None)
    print(f"{kind}: first update at 0.9 = {hit}, best = {max(first.values())}, "
          f"final entropy = {rows[-1].policy_entropy_mean:.3f}")
