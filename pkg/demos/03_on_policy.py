# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # At the behaviour policy every objective is REINFORCE
#
# When the current policy equals the one that sampled the data, every ratio is
# one.  Clips are inactive and all the gates have unit slope, so the five
# surrogates share a gradient: the group-baseline REINFORCE gradient.

# %%
import numpy as np

from sspo.gates import GateConfig
from sspo.gradcheck import InstanceSpec, random_instance
from sspo.objectives import ObjectiveKind, evaluate, reinforce_gradient

groups, behavior, _ = random_instance(InstanceSpec(num_groups=3), seed=1)
ref = reinforce_gradient(groups, behavior)
for kind in ObjectiveKind:
    g = evaluate(kind, groups, behavior, GateConfig()).gradient
    print(f"{kind.value}: max |g - reinforce| = {np.abs(g - ref).max():.2e}")

# %% [markdown]
# Once the policy drifts the objectives part ways.

# %%
_, _, drifted = random_instance(InstanceSpec(num_groups=3, drift=0.8), seed=1)
for kind in ObjectiveKind:
    g = evaluate(kind, groups, drifted, GateConfig()).gradient
    print(f"{kind.value}: max |g - reinforce| = {np.abs(g - ref).max():.3f}")
