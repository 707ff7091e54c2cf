"""
Full-batch gradient descent on the squared loss.

The loss is ``L(theta) = (1/n) sum_i 0.5 (f(x_i; theta) - y_i)^2`` and the
update is ``theta <- theta - lr * grad L(theta)``. Training stops as soon
as ``L < train_tol`` (converged), when ``L`` exceeds ``DIVERGENCE_LOSS`` or
stops being finite (diverged), or after ``max_steps`` updates.
"""
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidInput
from .rank import Dataset, check_dataset

DIVERGENCE_LOSS = 1e12


@dataclass(frozen=True)
class TrainConfig:
    """
    Gradient-descent settings.

    Parameters
    ----------
    init_std : float
        Standard deviation of the i.i.d. Gaussian initialization.
    lr : float
        Learning rate.
    train_tol : float
        Stop once the training loss drops below this.
    max_steps : int
        Hard cap on the number of updates.
    seed : int
        Seed for the initialization.
    history_every : int
        Record the loss every this many steps.
    """

    init_std: float = 1e-4
    lr: float = 0.05
    train_tol: float = 1e-9
    max_steps: int = 10_000_000
    seed: int = 0
    history_every: int = 1000

    def __post_init__(self):
        if not (self.init_std >= 0 and np.isfinite(self.init_std)):
            raise InvalidInput(f"init_std must be finite and >= 0, got {self.init_std}")
        if not self.lr > 0:
            raise InvalidInput(f"lr must be > 0, got {self.lr}")
        if not self.train_tol > 0:
            raise InvalidInput(f"train_tol must be > 0, got {self.train_tol}")
        if int(self.max_steps) != self.max_steps or self.max_steps < 1:
            raise InvalidInput(f"max_steps must be a positive integer, got {self.max_steps}")
        if int(self.history_every) != self.history_every or self.history_every < 1:
            raise InvalidInput(f"history_every must be a positive integer, got {self.history_every}")

    def replace(self, **changes):
        return TrainConfig(**{**asdict(self), **changes})

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainResult:
    theta: np.ndarray
    steps_used: int
    final_train_loss: float
    converged: bool
    diverged: bool = False
    loss_history: list = field(default_factory=list)


def init_params(spec, init_std, seed):
    """I.i.d. ``N(0, init_std^2)`` parameters, deterministic in ``seed``."""
    if init_std < 0:
        raise InvalidInput(f"init_std must be >= 0, got {init_std}")
    return init_std * np.random.default_rng(seed).standard_normal(spec.param_count())


def loss(spec, theta, data):
    x = check_dataset(spec, data)
    r = spec.forward_batch(spec.check_theta(theta), x) - data.labels
    return 0.5 * float(r @ r) / len(r)


def train(spec, theta0, data, cfg):
    """
    Run full-batch gradient descent from ``theta0``.

    Returns
    -------
    TrainResult
        ``loss_history`` holds ``(step, loss)`` pairs every
        ``cfg.history_every`` steps plus the final one.
    """
    if not isinstance(data, Dataset):
        raise InvalidInput("data must be a Dataset")
    x = check_dataset(spec, data)
    y = data.labels
    theta = spec.check_theta(theta0).copy()
    scale = 1.0 / len(y)
    lr, tol, every = cfg.lr, cfg.train_tol, cfg.history_every
    history = []
    step = 0
    diverged = False
    while True:
        r = spec.forward_batch(theta, x) - y
        value = 0.5 * scale * float(r @ r)
        if not np.isfinite(value) or value > DIVERGENCE_LOSS:
            diverged = True
            break
        if step % every == 0:
            history.append((step, value))
        if value < tol or step >= cfg.max_steps:
            break
        theta -= lr * spec.vjp(theta, x, scale * r)
        step += 1
    if not history or history[-1][0] != step:
        history.append((step, value))
    return TrainResult(
        theta=theta,
        steps_used=step,
        final_train_loss=value,
        converged=bool(value < tol),
        diverged=diverged,
        loss_history=history,
    )


def test_error(spec, theta, test_data):
    """Mean squared error ``(1/n) sum (f(x_i) - y_i)^2`` on ``test_data``."""
    x = spec.check_inputs(test_data.inputs)
    r = spec.forward_batch(spec.check_theta(theta), x) - test_data.labels
    return float(np.mean(r * r))
