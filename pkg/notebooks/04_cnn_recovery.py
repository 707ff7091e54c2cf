# %% [markdown]
# # Convolutional target
#
# The three-neuron shift target has model rank 7 in the weight-shared CNN
# with bias, 15 without sharing and 21 as a fully-connected network. Wider
# shared CNNs keep the rank at 7.

# %%
from modelrank.experiments import resolve_target
from modelrank.models import Cnn1d, Fc2
from modelrank.rank import model_rank_numeric

for spec in (Cnn1d(5, 3, 1, bias=True), Cnn1d(5, 3, 1, sharing=False, bias=True),
             Fc2(5, 3, bias=True)):
    t = resolve_target(spec, "nn")
    print(spec, model_rank_numeric(t.spec, t.theta_star))
for width in (1, 3, 10, 34, 100):
    t = resolve_target(Cnn1d(5, 3, width, bias=True), "nn")
    print("shared width", width, model_rank_numeric(t.spec, t.theta_star))

# %% [markdown]
# Recovery of the target by the narrow shared CNN. A few trials and sizes
# only; the acceptance suite uses 30 trials.

# %%
from modelrank.experiments import SweepConfig, run_phase_sweep

cfg = SweepConfig.from_text("""
[sweep]
model = cnn1d:d=5,s=3,m=1,bias
targets = nn
sizes = 3,5,8,14
trials = 3
[train]
init_std = 1e-10
lr = 0.3
max_steps = 100000
""")
print(run_phase_sweep(cfg).aggregate_csv())
