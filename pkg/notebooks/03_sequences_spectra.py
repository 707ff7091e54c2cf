# %% [markdown]
# # Designed sampling orders and trained spectra
#
# For each built-in order, ``n_t`` is the shortest prefix whose empirical
# rank at the target's minimal factorization reaches the model rank 7.

# %%
from modelrank import targets
from modelrank.rank import minimal_rank_factorization, prefix_ranks, stability_onset

spec, theta = minimal_rank_factorization(targets.matrix(targets.SEQUENCE_TARGET))
for name in targets.SEQUENCES_TEXT:
    order = targets.sequence(name)
    print(name, stability_onset(spec, theta, order), prefix_ranks(spec, theta, order))

# %% [markdown]
# Training on prefixes of one order: recovery should switch on at ``n_t``.

# %%
from modelrank.experiments import SweepConfig, run_sequence_experiment

cfg = SweepConfig.from_text("""
[sweep]
kind = sequence
model = matfac:d=4
targets = M2
sequences = seq2
sizes = 6-12
trials = 3
[train]
max_steps = 100000
""")
for res in run_sequence_experiment(cfg):
    print(res.name, "n_t", res.onset, "first recovery", res.first_recovery())
    print(res.grid.aggregate_csv())

# %% [markdown]
# Singular values of completions of a full-rank target from masks of size
# 7, 12 and 15: the learned matrix has (numerically) rank 1, 2 and 3.

# %%
from modelrank.experiments import run_spectrum_experiment

spec_cfg = SweepConfig.from_text("""
[sweep]
kind = spectrum
model = matfac:d=4
targets = M8
trials = 3
[train]
max_steps = 100000
""")
for entry in run_spectrum_experiment(spec_cfg)["sizes"]:
    print(entry["n"], [f"{v:.2e}" for v in entry["learned_ratio_mean"]])
