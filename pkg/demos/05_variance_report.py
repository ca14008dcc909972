# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Gradient-norm variance on repeat_n
#
# repeat_n asks for the same token n times, so responses are long and token
# ratios pile up.  We compare how much the gradient norm wanders inside each
# update for the token-level objective (GRPO) and the sequence-level ones
# (GSPO, SSPO).  No direction is promised; we just look.

# %%
import tempfile
from pathlib import Path

from sspo.compare import run_compare
from sspo.config import parse_config

exp = parse_config({
    "task": {"kind": "repeat_n", "vocab_size": 6, "prompt_len": 2, "max_len": 6, "n": 3},
    "policy": {"k": 3},
    "objective": "sspo",
    "train": {"total_updates": 60},
})
out = Path(tempfile.mkdtemp()) / "variance"
cells, summary, verdict = run_compare(exp, ["grpo", "gspo", "sspo"], [0, 1], out)
print(verdict)
print((out / "variance_report.csv").read_text())

# %%
for row in summary:
    print(row[0], row[1], "final reward", row[3], "grad-norm var", f"{row[7]:.3e}")
