# %% [markdown]
# # Rank hierarchies
#
# Model rank of every stratum for the built-in architectures, first from the
# closed forms and then checked against the tangent-matrix estimate at a
# random point of each stratum.

# %%
import numpy as np

from modelrank import models, stratify
from modelrank.rank import MatFacTarget, closed_form_rank, model_rank_numeric

for text in ("toynl", "matfac:d=4", "fc2:d=5,m=3", "cnn1d:d=5,s=3,m=1,bias",
             "cnn2d:d=28,s=3,m=1", "deepfc:widths=5-4-3-1"):
    print(text)
    print(stratify(models.parse_spec(text)).to_text())
    print()

# %% [markdown]
# A random point with rank-r factors sits in the rank-r stratum, so the
# numerical model rank there should equal ``2 r d - r^2``.

# %%
rng = np.random.default_rng(0)
spec = models.MatFac(4)
for r in range(5):
    a = np.zeros((4, 4))
    b = np.zeros((4, 4))
    a[:, :r] = rng.standard_normal((4, r))
    b[:r] = rng.standard_normal((r, 4))
    print(r, model_rank_numeric(spec, spec.pack(a, b)), closed_form_rank(spec, MatFacTarget(r)))
