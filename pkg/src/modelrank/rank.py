"""
Model rank of parameter points, closed-form rank hierarchies, and the
linear-stability certificate.

The model rank at ``theta`` is the dimension of the span of the functions
``x -> d f(x; theta) / d theta_k``. Numerically it is the rank of the
tangent matrix over enough generic inputs. The empirical rank on a
dataset is the rank of the tangent matrix at the dataset inputs; a
minimizer that interpolates the data is linearly stable exactly when the
two agree.
"""
import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import numerics
from .errors import InvalidInput, NotFound, NumericalWarning, PreconditionViolated
from .models import Cnn1d, Cnn2d, DeepFc, Fc2, MatFac, ToyLinear, ToyNL

DEFAULT_REL_TOL = numerics.DEFAULT_REL_TOL
INTERPOLATION_TOL = 1e-4


@dataclass(frozen=True)
class Dataset:
    """Inputs (a batch array) and labels of equal length."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=float).ravel()
        inputs = np.asarray(self.inputs)
        if len(inputs) != len(labels):
            raise InvalidInput(f"{len(inputs)} inputs but {len(labels)} labels")
        if len(labels) == 0:
            raise InvalidInput("dataset is empty")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def subset(self, n):
        return Dataset(self.inputs[:n], self.labels[:n])

    @classmethod
    def from_function(cls, inputs, func):
        inputs = np.asarray(inputs)
        return cls(inputs, np.asarray(func(inputs), dtype=float))


def check_dataset(spec, data):
    x = spec.check_inputs(data.inputs)
    if isinstance(spec, MatFac) and len(np.unique(x, axis=0)) != len(x):
        raise InvalidInput("matrix-factorization datasets need distinct entry indices")
    return x


@dataclass
class RankReport:
    empirical_rank: Optional[int]
    model_rank_numeric: int
    model_rank_closed_form: Optional[int]
    singular_values: list
    rel_tol: float
    probe_count: int
    spectral_gap: float = float("inf")
    model_rank_singular_values: list = field(default_factory=list)

    def to_dict(self):
        out = asdict(self)
        for key in ("spectral_gap",):
            if not np.isfinite(out[key]):
                out[key] = None
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)


def tangent_matrix(spec, theta, data):
    """The (M, n) matrix whose column j is the parameter gradient at input j."""
    inputs = data.inputs if isinstance(data, Dataset) else data
    theta = spec.check_theta(theta)
    return spec.jacobian(theta, spec.check_inputs(inputs)).T


def empirical_rank(spec, theta, data, rel_tol=DEFAULT_REL_TOL):
    return numerics.numerical_rank(tangent_matrix(spec, theta, data), rel_tol)


def probe_inputs(spec, count, seed=0):
    """Generic probe inputs: i.i.d. standard normal, or every entry for matfac."""
    if isinstance(spec, MatFac):
        return spec.all_entries()
    return spec.sample_inputs(count, np.random.default_rng(seed))


def _model_rank(spec, theta, rel_tol, probe_budget, seed):
    if probe_budget is None:
        probe_budget = 4 * spec.param_count()
    probes = probe_inputs(spec, probe_budget, seed)
    s = numerics.singular_values(spec.jacobian(theta, probes))
    rank = numerics.rank_from_singular_values(s, rel_tol)
    if not isinstance(spec, MatFac):
        half = numerics.numerical_rank(spec.jacobian(theta, probes[:len(probes) // 2]), rel_tol) \
            if len(probes) >= 2 else 0
        if half != rank:
            warnings.warn(NumericalWarning(
                f"model rank not saturated: {half} with {len(probes) // 2} probes, "
                f"{rank} with {len(probes)}",
                half_budget_rank=half, full_budget_rank=rank), stacklevel=3)
    return rank, s, len(probes)


def model_rank_numeric(spec, theta, rel_tol=DEFAULT_REL_TOL, probe_budget=None, seed=0):
    """
    Model rank at ``theta`` estimated from generic probe inputs.

    Uses ``probe_budget`` standard-normal probes (default ``4 M``); the
    matrix-factorization model is probed on all d^2 entries, which is
    exhaustive. Emits NumericalWarning if the rank over the first half of
    the probes differs from the rank over all of them.
    """
    theta = spec.check_theta(theta)
    return _model_rank(spec, theta, rel_tol, probe_budget, seed)[0]


def rank_report(spec, theta, data=None, rel_tol=DEFAULT_REL_TOL, probe_budget=None,
                seed=0, target=None):
    """Empirical rank (if data given), numeric model rank and optional closed form."""
    theta = spec.check_theta(theta)
    model_rank, model_s, probes = _model_rank(spec, theta, rel_tol, probe_budget, seed)
    emp, s = None, np.array([])
    if data is not None:
        s = numerics.singular_values(tangent_matrix(spec, theta, data))
        emp = numerics.rank_from_singular_values(s, rel_tol)
    closed = closed_form_rank(spec, target) if target is not None else None
    gap = numerics.spectral_gap(s if data is not None else model_s,
                                emp if data is not None else model_rank)
    return RankReport(
        empirical_rank=emp,
        model_rank_numeric=model_rank,
        model_rank_closed_form=closed,
        singular_values=[float(v) for v in s],
        rel_tol=rel_tol,
        probe_count=probes,
        spectral_gap=gap,
        model_rank_singular_values=[float(v) for v in model_s],
    )


def interpolation_residual(spec, theta, data):
    theta = spec.check_theta(theta)
    x = check_dataset(spec, data)
    return float(np.max(np.abs(spec.forward_batch(theta, x) - data.labels)))


def is_linearly_stable(spec, theta, data, rel_tol=DEFAULT_REL_TOL, probe_budget=None,
                       seed=0, interp_tol=INTERPOLATION_TOL):
    """
    Linear-stability certificate of an interpolating minimizer.

    Returns ``(stable, report)``; ``stable`` is true exactly when the
    empirical rank on ``data`` equals the numeric model rank.

    Raises
    ------
    PreconditionViolated
        If ``theta`` does not interpolate ``data`` to within ``interp_tol``
        (scaled by ``max(1, max |y|)``).
    """
    residual = interpolation_residual(spec, theta, data)
    scale = max(1.0, float(np.max(np.abs(data.labels))))
    if residual > interp_tol * scale:
        raise PreconditionViolated(
            f"parameters do not interpolate the data (max residual {residual:.3g})")
    report = rank_report(spec, theta, data, rel_tol, probe_budget, seed)
    return report.empirical_rank == report.model_rank_numeric, report


def prefix_ranks(spec, theta, ordered_inputs, rel_tol=DEFAULT_REL_TOL):
    """Empirical rank of every prefix ``S_1, S_2, ...`` of the ordered inputs."""
    theta = spec.check_theta(theta)
    x = spec.check_inputs(ordered_inputs)
    jac = spec.jacobian(theta, x)
    return [numerics.numerical_rank(jac[:n].T, rel_tol) for n in range(1, len(x) + 1)]


def stability_onset(spec, theta, ordered_inputs, rel_tol=DEFAULT_REL_TOL,
                    probe_budget=None, seed=0):
    """
    Smallest prefix length whose empirical rank reaches the model rank.

    Raises
    ------
    NotFound
        If no prefix reaches it.
    """
    target = model_rank_numeric(spec, theta, rel_tol, probe_budget, seed)
    for n, r in enumerate(prefix_ranks(spec, theta, ordered_inputs, rel_tol), start=1):
        if r == target:
            return n
    raise NotFound(f"no prefix reaches model rank {target}")


def minimal_rank_factorization(matrix, rel_tol=DEFAULT_REL_TOL):
    """
    Factor a square matrix as ``A B`` with rank A = rank B = rank(matrix).

    Uses ``A = U S^(1/2)``, ``B = S^(1/2) V^T`` from the SVD, with the
    singular values below the relative threshold dropped.
    """
    m = numerics.as_matrix(matrix)
    if m.shape[0] != m.shape[1]:
        raise InvalidInput("matrix must be square")
    u, s, v = numerics.svd(m)
    r = numerics.rank_from_singular_values(s, rel_tol)
    root = np.sqrt(np.where(np.arange(len(s)) < r, s, 0.0))
    spec = MatFac(m.shape[0])
    return spec, spec.pack(u * root, (v * root).T)


# -- closed-form hierarchies -------------------------------------------------

@dataclass(frozen=True)
class MatFacTarget:
    r: int


@dataclass(frozen=True)
class Fc2Target:
    k: int


@dataclass(frozen=True)
class CnnTarget:
    """
    A CNN function with ``k`` independent kernels and ``m_null`` zero output weights.

    ``sharing``/``fc`` pick the architecture column: weight-shared CNN,
    CNN without sharing, or the equivalent fully-connected network. The
    spec only supplies the dimensions, so one spec serves all columns.
    """

    k: int
    m_null: int = 0
    sharing: bool = True
    fc: bool = False
    bias: bool = False


@dataclass(frozen=True)
class ToyTarget:
    has_x2: bool


def _check_count(name, value, upper):
    if not 0 <= value <= upper:
        raise InvalidInput(f"{name}={value} outside [0, {upper}]")


def closed_form_rank(spec, target):
    """
    Model rank of a target function from the rank hierarchy tables.

    Matrix factorization: ``2 r d - r^2``. Two-layer FC: ``k (d + 1)``
    (``k (d + 2)`` with bias). CNNs with ``P = d + 1 - s`` positions:

    ============  ===================  ==============================  ==============================
    column        shared               unshared                        fully connected
    ============  ===================  ==============================  ==============================
    1-D           ``k (d + 1)``        ``k (s + 1) P - s m_null``      ``k (d + 1) P - d m_null``
    1-D, bias     ``k (d + 2)``        ``k (s + 2) P - (s+1) m_null``  ``k (d + 2) P - (d+1) m_null``
    2-D           ``k (s^2 + P^2)``    ``k (s^2+1) P^2 - s^2 m_null``  ``k (d^2+1) P^2 - d^2 m_null``
    ============  ===================  ==============================  ==============================

    Null neurons are taken with nonzero input weights, so they keep their
    output-weight direction and lose only their input-weight directions.
    """
    if isinstance(spec, ToyNL):
        if not isinstance(target, ToyTarget):
            raise InvalidInput("toynl needs a ToyTarget")
        return 3 if target.has_x2 else 2
    if isinstance(spec, ToyLinear):
        if not isinstance(target, ToyTarget):
            raise InvalidInput("toylinear needs a ToyTarget")
        return 3
    if isinstance(spec, MatFac):
        if not isinstance(target, MatFacTarget):
            raise InvalidInput("matfac needs a MatFacTarget")
        _check_count("r", target.r, spec.d)
        return 2 * target.r * spec.d - target.r ** 2
    if isinstance(spec, Fc2):
        if not isinstance(target, Fc2Target):
            raise InvalidInput("fc2 needs an Fc2Target")
        _check_count("k", target.k, spec.m)
        return target.k * (spec.d + (2 if spec.bias else 1))
    if isinstance(spec, (Cnn1d, Cnn2d)):
        if not isinstance(target, CnnTarget):
            raise InvalidInput(f"{spec.family} needs a CnnTarget")
        return _cnn_rank(spec, target)
    if isinstance(spec, DeepFc):
        raise InvalidInput("deep networks only have rank upper bounds; see deep_rank_upper_bound")
    raise InvalidInput(f"no closed form for {spec.family}")


def _cnn_rank(spec, t):
    spec_bias = getattr(spec, "bias", False)
    if t.bias != spec_bias:
        raise InvalidInput(f"target bias={t.bias} does not match {spec}")
    _check_count("k", t.k, spec.m)
    p, s, d = spec.positions, spec.s, spec.d
    two_d = isinstance(spec, Cnn2d)
    neurons_per_kernel = p * p if two_d else p
    _check_count("m_null", t.m_null, t.k * neurons_per_kernel)
    extra = 1 if t.bias else 0
    if two_d:
        win, inp = s * s, d * d
    else:
        win, inp = s, d
    if t.fc:
        return t.k * (inp + 1 + extra) * neurons_per_kernel - (inp + extra) * t.m_null
    if t.sharing:
        return t.k * (win + neurons_per_kernel + extra)
    return t.k * (win + 1 + extra) * neurons_per_kernel - (win + extra) * t.m_null


def deep_rank_upper_bound(widths):
    """``d m1' + m1' m2' + ... + m_{L-1}'`` for hidden widths ``widths[1:-1]``."""
    widths = tuple(int(w) for w in widths)
    return sum(a * b for a, b in zip(widths[:-1], widths[1:]))


# -- stratification tables ---------------------------------------------------

@dataclass
class Stratum:
    rank: int
    stratum: str
    upper_bound: bool = False
    columns: dict = field(default_factory=dict)


@dataclass
class RankTable:
    model: str
    title: str
    rows: list

    def to_dict(self):
        return {"model": self.model, "title": self.title,
                "rows": [asdict(r) for r in self.rows]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    def to_text(self):
        lines = [f"{self.title}  [{self.model}]"]
        width = max(len(r.stratum) for r in self.rows)
        for r in self.rows:
            line = f"  {r.stratum.ljust(width)} → {r.rank}"
            if r.upper_bound:
                line += " (upper bound)"
            if r.columns:
                line += "   [" + ", ".join(f"{c} {v}" for c, v in r.columns.items()) + "]"
            lines.append(line)
        return "\n".join(lines)


def stratify(spec):
    """Rank hierarchy for the given architecture, one row per rank level."""
    if isinstance(spec, ToyNL):
        return RankTable(str(spec), "rank hierarchy of t0 + t1 x1 + t2 t3 x2", [
            Stratum(2, "span{1, x1}"),
            Stratum(3, "a0 + a1 x1 + a2 x2, a2 != 0"),
        ])
    if isinstance(spec, ToyLinear):
        return RankTable(str(spec), "rank hierarchy of t0 + t1 x1 + t2 x2", [
            Stratum(3, "a0 + a1 x1 + a2 x2"),
        ])
    if isinstance(spec, MatFac):
        rows = [Stratum(closed_form_rank(spec, MatFacTarget(r)), f"r={r}")
                for r in range(spec.d + 1)]
        return RankTable(str(spec), "rank hierarchy of the matrix factorization model A B", rows)
    if isinstance(spec, Fc2):
        rows = [Stratum(closed_form_rank(spec, Fc2Target(k)), f"k={k}")
                for k in range(spec.m + 1)]
        return RankTable(str(spec), "rank hierarchy of the two-layer tanh network "
                         "(k distinct effective neurons)", rows)
    if isinstance(spec, (Cnn1d, Cnn2d)):
        bias = getattr(spec, "bias", False)
        rows = []
        for k in range(spec.m + 1):
            cols = {
                "shared": _cnn_rank(_with_sharing(spec, True), CnnTarget(k, 0, True, False, bias)),
                "unshared": _cnn_rank(_with_sharing(spec, False), CnnTarget(k, 0, False, False, bias)),
                "fc": _cnn_rank(spec, CnnTarget(k, 0, spec.sharing, True, bias)),
            }
            rank = cols["shared" if spec.sharing else "unshared"]
            rows.append(Stratum(rank, f"k={k}", columns=cols))
        return RankTable(str(spec), "rank hierarchy of the two-layer tanh CNN "
                         "(k kernels, m_null=0)", rows)
    if isinstance(spec, DeepFc):
        rows = []
        hidden = spec.widths[1:-1]
        for w in range(1, max(hidden) + 1):
            primed = (spec.d,) + tuple(min(w, h) for h in hidden) + (1,)
            label = "widths " + "-".join(str(v) for v in primed[1:-1])
            rows.append(Stratum(deep_rank_upper_bound(primed), label, upper_bound=True))
        return RankTable(str(spec), "partial rank hierarchy of the deep tanh network", rows)
    raise InvalidInput(f"no rank hierarchy for {spec.family}")


def _with_sharing(spec, sharing):
    kwargs = asdict(spec)
    kwargs["sharing"] = sharing
    return type(spec)(**kwargs)
