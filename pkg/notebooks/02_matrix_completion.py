# %% [markdown]
# # Phase transition in matrix completion
#
# Gradient descent from a small initialization recovers a rank-r 4x4 matrix
# once the number of observed entries reaches the model rank ``8r - r^2``.
# A handful of trials per cell keeps this quick; the acceptance suite runs 30.

# %%
from modelrank.experiments import SweepConfig

cfg = SweepConfig.from_text("""
[sweep]
model = matfac:d=4
targets = M1,M3,M5,M7
sizes = 4-16
trials = 3
mask_policy = stable-only
[train]
init_std = 1e-4
max_steps = 100000
""")

# %%
from modelrank.experiments import run_phase_sweep

grid = run_phase_sweep(cfg)
print(grid.aggregate_csv())

# %% [markdown]
# Same sweep over initialization scales for the rank-one target: smaller
# initializations leave less of the random start in the learned completion.

# %%
from modelrank.experiments import run_variance_sweep

var_cfg = SweepConfig.from_text("""
[sweep]
kind = variance
model = matfac:d=4
targets = M1
sizes = 7,10
trials = 3
mask_policy = stable-only
init_stds = 1e-8,1e-4,1e-2
[train]
max_steps = 100000
""")
print(run_variance_sweep(var_cfg).aggregate_csv())
