"""Model rank, linear stability and recovery experiments for nonlinear models."""

__version__ = "0.1.0"

from .errors import InvalidInput, NotFound, NumericalWarning, PreconditionViolated  # noqa: E402
from .models import (  # noqa: E402
    Cnn1d, Cnn2d, DeepFc, Fc2, MatFac, ToyLinear, ToyNL, format_spec, parse_spec,
)
from .rank import (  # noqa: E402
    Dataset, closed_form_rank, empirical_rank, is_linearly_stable, model_rank_numeric,
    stability_onset, stratify, tangent_matrix,
)
from .training import TrainConfig, init_params, test_error, train  # noqa: E402
