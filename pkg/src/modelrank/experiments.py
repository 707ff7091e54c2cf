"""
Recovery experiments: phase-transition sweeps over (target, sample size),
initialization-scale sweeps, designed sampling orders, and singular-value
spectra of trained completions.

Every sweep cell ``(row, n, trial)`` owns a seed derived from the master
seed with :func:`cell_seed`, so a cell's result does not depend on which
other cells run, in which order, or on how many workers. Results are
exported as CSV (17 significant digits) or JSON, each stamped with the
master seed and the package version.

Config file grammar (INI, read with :mod:`configparser`)::

    [sweep]
    kind = phase              ; phase | variance | sequence | spectrum
    model = matfac:d=4        ; spec string, see models.parse_spec
    targets = M1,M2           ; matrix names, toy names, or nn
    sizes = 1-16              ; comma list, ranges a-b allowed
    trials = 50
    mask_policy = uniform     ; uniform | fixed-sequence | stable-only
    master_seed = 0
    test_size = 1000          ; test inputs for continuous-input models
    test_metric = unobserved  ; unobserved | all (matrix completion)
    success_threshold = 1e-4
    init_stds = 1e-10,1e-5,1  ; variance sweeps only, default 1e-10,1e-9,...,1
    sequences = seq1,seq2     ; sequence runs: built-in or [sequence NAME]
    spectrum_sizes = 7,12,15  ; spectrum runs only
    workers = 1

    [train]
    init_std = 1e-4
    lr = 0.05
    train_tol = 1e-9
    max_steps = 10000000
    history_every = 1000

    [sequence mine]
    entries = (1,1),(2,2),(1,2)   ; 1-based (i,j) list
"""
import configparser
import csv
import io
import json
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__, numerics, targets
from .errors import InvalidInput, NotFound
from .models import MatFac, ModelSpec, ToyLinear, ToyNL, format_spec, parse_spec
from .rank import Dataset, empirical_rank, minimal_rank_factorization, model_rank_numeric
from .training import TrainConfig, init_params, test_error, train

MASK_POLICIES = ("uniform", "fixed-sequence", "stable-only")
SWEEP_KINDS = ("phase", "variance", "sequence", "spectrum")
CELL_HEADER = ("target", "n", "trial", "seed", "test_error", "train_loss", "converged")
AGGREGATE_HEADER = ("target", "n", "mean_test_error", "success_fraction")
MAX_MASK_TRIES = 10_000
WORKERS_ENV = "MODELRANK_WORKERS"
# init-scale grid used by variance sweeps that do not list their own
DEFAULT_INIT_STDS = tuple(10.0 ** k for k in range(-10, 1))

_MASK64 = (1 << 64) - 1


def splitmix64(x):
    """One step of the splitmix64 mixer on a 64-bit integer."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def cell_seed(master_seed, target, n, trial):
    """
    Seed of one sweep cell.

    ``h = splitmix64(master)``, then ``h = splitmix64(h ^ v)`` for ``v`` in
    ``(crc32(target), n, trial)``. The top bit is cleared so the seed fits
    a signed 64-bit column.
    """
    h = splitmix64(int(master_seed) & _MASK64)
    for v in (zlib.crc32(str(target).encode()), int(n), int(trial)):
        h = splitmix64(h ^ (v & _MASK64))
    return h >> 1


def fmt(x):
    """17-significant-digit decimal, which round-trips every float64."""
    return format(float(x), ".17g")


def parse_int_list(text):
    """``"1-3,7"`` -> ``[1, 2, 3, 7]``."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        try:
            if "-" in part:
                lo, hi = part.split("-", 1)
                out.extend(range(int(lo), int(hi) + 1))
            else:
                out.append(int(part))
        except ValueError:
            raise InvalidInput(f"bad integer list item {part!r}") from None
    if not out:
        raise InvalidInput(f"empty integer list {text!r}")
    return out


def parse_float_list(text):
    out = [float(p) for p in str(text).split(",") if p.strip()]
    if not out:
        raise InvalidInput(f"empty number list {text!r}")
    return out


def default_workers():
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(value)
    except ValueError:
        raise InvalidInput(f"{WORKERS_ENV}={value!r} is not an integer") from None
    return max(1, workers)


# -- configuration -----------------------------------------------------------

@dataclass(frozen=True)
class SweepConfig:
    model: ModelSpec
    targets: tuple
    sizes: tuple
    trials: int = 50
    train: TrainConfig = field(default_factory=TrainConfig)
    mask_policy: str = "uniform"
    master_seed: int = 0
    test_size: int = 1000
    test_metric: str = "unobserved"
    success_threshold: float = 1e-4
    kind: str = "phase"
    init_stds: tuple = ()
    sequences: tuple = ()
    custom_sequences: dict = field(default_factory=dict)
    spectrum_sizes: tuple = (7, 12, 15)
    workers: int = 1

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise InvalidInput(f"kind must be one of {SWEEP_KINDS}, got {self.kind!r}")
        if self.mask_policy not in MASK_POLICIES:
            raise InvalidInput(f"mask_policy must be one of {MASK_POLICIES}, got {self.mask_policy!r}")
        if self.test_metric not in ("unobserved", "all"):
            raise InvalidInput(f"test_metric must be unobserved or all, got {self.test_metric!r}")
        if self.trials < 1 or self.test_size < 1 or self.workers < 1:
            raise InvalidInput("trials, test_size and workers must be positive")
        if any(n < 1 for n in self.sizes):
            raise InvalidInput("sample sizes must be positive")
        if isinstance(self.model, MatFac) and any(n > self.model.d ** 2 for n in self.sizes):
            raise InvalidInput(f"sample sizes exceed the {self.model.d ** 2} matrix entries")
        if self.kind == "variance" and not self.init_stds:
            object.__setattr__(self, "init_stds", DEFAULT_INIT_STDS)
        if any(s < 0 for s in self.init_stds):
            raise InvalidInput("init_stds must be nonnegative")

    @classmethod
    def from_parser(cls, parser):
        if not parser.has_section("sweep"):
            raise InvalidInput("config needs a [sweep] section")
        s = parser["sweep"]
        known = {"kind", "model", "targets", "sizes", "trials", "mask_policy", "master_seed",
                 "test_size", "test_metric", "success_threshold", "init_stds", "sequences",
                 "spectrum_sizes", "workers"}
        unknown = set(s) - known
        if unknown:
            raise InvalidInput(f"unknown [sweep] keys: {sorted(unknown)}")
        train_kwargs = {}
        if parser.has_section("train"):
            t = parser["train"]
            casts = {"init_std": float, "lr": float, "train_tol": float,
                     "max_steps": lambda v: int(float(v)), "seed": int,
                     "history_every": int}
            for key, value in t.items():
                if key not in casts:
                    raise InvalidInput(f"unknown [train] key {key!r}")
                train_kwargs[key] = casts[key](value)
        custom = {}
        for section in parser.sections():
            if section.startswith("sequence "):
                name = section.split(None, 1)[1].strip()
                custom[name] = targets.format_entries(
                    targets.parse_entries(parser[section].get("entries", "")))
        if "model" not in s:
            raise InvalidInput("[sweep] needs a model")
        kind = s.get("kind", "phase")
        return cls(
            model=parse_spec(s["model"]),
            targets=tuple(t.strip() for t in s.get("targets", "").split(",") if t.strip()),
            sizes=tuple(parse_int_list(s["sizes"])) if "sizes" in s else (),
            trials=int(s.get("trials", 50)),
            train=TrainConfig(**train_kwargs),
            mask_policy=s.get("mask_policy", "fixed-sequence" if kind == "sequence" else "uniform"),
            master_seed=int(s.get("master_seed", 0)),
            test_size=int(s.get("test_size", 1000)),
            test_metric=s.get("test_metric", "unobserved"),
            success_threshold=float(s.get("success_threshold", 1e-4)),
            kind=kind,
            init_stds=tuple(parse_float_list(s["init_stds"])) if "init_stds" in s else (),
            sequences=tuple(q.strip() for q in s.get("sequences", "").split(",") if q.strip()),
            custom_sequences=custom,
            spectrum_sizes=tuple(parse_int_list(s.get("spectrum_sizes", "7,12,15"))),
            workers=int(s.get("workers", 1)),
        )

    @classmethod
    def from_text(cls, text):
        parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InvalidInput(f"bad config: {exc}") from None
        return cls.from_parser(parser)

    @classmethod
    def from_file(cls, path):
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise InvalidInput(f"cannot read config {path}: {exc}") from None
        return cls.from_text(text)

    def to_text(self):
        parser = configparser.ConfigParser()
        sweep = {
            "kind": self.kind,
            "model": format_spec(self.model),
            "targets": ",".join(self.targets),
            "sizes": ",".join(str(n) for n in self.sizes),
            "trials": str(self.trials),
            "mask_policy": self.mask_policy,
            "master_seed": str(self.master_seed),
            "test_size": str(self.test_size),
            "test_metric": self.test_metric,
            "success_threshold": fmt(self.success_threshold),
            "workers": str(self.workers),
            "spectrum_sizes": ",".join(str(n) for n in self.spectrum_sizes),
        }
        if self.init_stds:
            sweep["init_stds"] = ",".join(fmt(v) for v in self.init_stds)
        if self.sequences:
            sweep["sequences"] = ",".join(self.sequences)
        parser["sweep"] = {k: v for k, v in sweep.items() if v != ""}
        parser["train"] = {k: fmt(v) if isinstance(v, float) else str(v)
                           for k, v in self.train.to_dict().items()}
        for name, entries in self.custom_sequences.items():
            parser[f"sequence {name}"] = {"entries": entries}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()


# -- targets and data --------------------------------------------------------

@dataclass(frozen=True)
class Target:
    """A named target bound to a model: labels, a minimal-rank parameter point."""

    name: str
    spec: ModelSpec
    theta_star: object = None
    matrix: object = None

    def labels(self, inputs):
        if self.matrix is not None:
            x = np.asarray(inputs)
            return self.matrix[x[:, 0], x[:, 1]]
        if isinstance(self.spec, (ToyNL, ToyLinear)):
            return targets.toy_function(self.name)(inputs)
        return self.spec.forward_batch(self.theta_star, self.spec.check_inputs(inputs))


def resolve_target(spec, name):
    """
    Bind a target name to a model.

    Matrix targets (``M1``..``M8``) need ``matfac:d=4``; toy names need a toy
    model; ``nn`` is the three-neuron target expressed in any CNN or
    two-layer network wide enough to hold it.
    """
    if isinstance(spec, MatFac):
        m = targets.matrix(name)
        if m.shape != (spec.d, spec.d):
            raise InvalidInput(f"{name} is {m.shape[0]}x{m.shape[1]} but the model has d={spec.d}")
        _, theta = minimal_rank_factorization(m)
        return Target(name, spec, theta, m)
    if isinstance(spec, (ToyNL, ToyLinear)):
        a0, a1, a2 = targets.TOY_TARGETS.get(name, (None,) * 3)
        if a0 is None:
            raise NotFound(f"unknown toy target {name!r}; choose from {list(targets.TOY_TARGETS)}")
        theta = [a0, a1, a2, 1.0 if a2 else 0.0] if isinstance(spec, ToyNL) else [a0, a1, a2]
        return Target(name, spec, np.array(theta))
    if name != "nn":
        raise NotFound(f"{spec.family} supports only the 'nn' target")
    narrow, theta = targets.nn_target_params(bias=getattr(spec, "bias", False))
    return Target(name, spec, _express(narrow, theta, spec))


def _express(narrow, theta, spec):
    from .models import Cnn1d, Fc2, embed_wider, to_fully_connected, unshare
    if isinstance(spec, Cnn1d) and (spec.d, spec.s) == (narrow.d, narrow.s):
        if not spec.sharing:
            narrow, theta = unshare(narrow, theta)
        return embed_wider(narrow, theta, spec)
    if isinstance(spec, Fc2) and spec.d == narrow.d and spec.bias == narrow.bias:
        fc, fc_theta = to_fully_connected(narrow, theta)
        return embed_wider(fc, fc_theta, spec)
    raise InvalidInput(f"the nn target does not fit {spec}")


def _stable_mask_ok(target, entries, model_rank):
    r = empirical_rank(target.spec, target.theta_star, entries)
    return r == min(len(entries), model_rank)


def sample_inputs(cfg, target, n, rng, model_rank=None, sequence=None):
    """Training inputs of one cell under the configured mask policy."""
    spec = cfg.model
    policy = cfg.mask_policy
    if policy == "fixed-sequence":
        if sequence is None:
            raise InvalidInput("fixed-sequence policy needs a sequence")
        if n > len(sequence):
            raise InvalidInput(f"n={n} exceeds the sequence length {len(sequence)}")
        return sequence[:n]
    for _ in range(MAX_MASK_TRIES):
        if isinstance(spec, MatFac):
            x = spec.all_entries()[rng.permutation(spec.d ** 2)[:n]]
        else:
            x = spec.sample_inputs(n, rng)
        if policy == "uniform" or _stable_mask_ok(target, x, model_rank):
            return x
    raise NotFound(f"no generic sample of size {n} for {target.name} in {MAX_MASK_TRIES} draws")


def _test_set(cfg, target, train_inputs, master_seed):
    spec = cfg.model
    if isinstance(spec, MatFac):
        every = spec.all_entries()
        if cfg.test_metric == "all":
            return every
        seen = {(int(i), int(j)) for i, j in train_inputs}
        rest = np.array([e for e in every if (int(e[0]), int(e[1])) not in seen]).reshape(-1, 2)
        return rest if len(rest) else every
    rng = np.random.default_rng(cell_seed(master_seed, "test:" + target.name, 0, 0))
    return spec.sample_inputs(cfg.test_size, rng)


# -- cells -------------------------------------------------------------------

@dataclass
class Cell:
    target: str
    n: int
    trial: int
    seed: int
    test_error: float
    train_loss: float
    converged: bool
    steps: int = 0
    diverged: bool = False


def run_cell(cfg, target, row, n, trial, init_std=None, model_rank=None, sequence=None,
             return_theta=False):
    """Seed, sample, initialize, train and evaluate one cell."""
    seed = cell_seed(cfg.master_seed, row, n, trial)
    rng = np.random.default_rng(seed)
    x = sample_inputs(cfg, target, n, rng, model_rank, sequence)
    data = Dataset(x, target.labels(x))
    std = cfg.train.init_std if init_std is None else init_std
    theta0 = init_params(cfg.model, std, splitmix64(seed))
    result = train(cfg.model, theta0, data, cfg.train)
    test_x = _test_set(cfg, target, x, cfg.master_seed)
    err = test_error(cfg.model, result.theta, Dataset(test_x, target.labels(test_x))) \
        if not result.diverged else float("inf")
    cell = Cell(row, n, trial, seed, err, result.final_train_loss, result.converged,
                result.steps_used, result.diverged)
    if return_theta:
        return cell, result.theta, x
    return cell


def _run_cell_job(job):
    return run_cell(*job[0], **job[1])


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cell_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_cell_job, jobs, chunksize=max(1, len(jobs) // (8 * workers))))


# -- grids -------------------------------------------------------------------

@dataclass
class SweepGrid:
    """Cells of a (row x size x trial) sweep; rows are targets or init scales."""

    rows: list
    sizes: list
    trials: int
    cells: list
    master_seed: int = 0
    version: str = __version__
    success_threshold: float = 1e-4
    row_axis: str = "target"

    def __post_init__(self):
        self.cells = sorted(self.cells, key=self._key)
        expected = len(self.rows) * len(self.sizes) * self.trials
        if len(self.cells) != expected:
            raise InvalidInput(f"grid has {len(self.cells)} cells, expected {expected}")

    def _key(self, c):
        return (self.rows.index(c.target), self.sizes.index(c.n), c.trial)

    def cell_values(self, row, n):
        return [c for c in self.cells if c.target == row and c.n == n]

    def aggregate(self):
        """One dict per ``(row, n)`` with the mean test error and success fraction."""
        out = []
        for row in self.rows:
            for n in self.sizes:
                errs = np.array([c.test_error for c in self.cell_values(row, n)])
                out.append({
                    "target": row,
                    "n": n,
                    "mean_test_error": float(np.mean(errs)),
                    "success_fraction": float(np.mean(errs < self.success_threshold)),
                })
        return out

    def mean_error(self, row, n):
        return float(np.mean([c.test_error for c in self.cell_values(row, n)]))

    def header_comment(self):
        return (f"# modelrank {self.version} master_seed={self.master_seed} "
                f"rows={self.row_axis} trials={self.trials} "
                f"success_threshold={fmt(self.success_threshold)}")

    def cells_csv(self):
        buf = io.StringIO()
        buf.write(self.header_comment() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CELL_HEADER)
        for c in self.cells:
            w.writerow([c.target, c.n, c.trial, c.seed, fmt(c.test_error), fmt(c.train_loss),
                        "true" if c.converged else "false"])
        return buf.getvalue()

    def aggregate_csv(self):
        buf = io.StringIO()
        buf.write(self.header_comment() + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(AGGREGATE_HEADER)
        for a in self.aggregate():
            w.writerow([a["target"], a["n"], fmt(a["mean_test_error"]), fmt(a["success_fraction"])])
        return buf.getvalue()

    def to_dict(self):
        return {
            "version": self.version,
            "master_seed": self.master_seed,
            "row_axis": self.row_axis,
            "rows": self.rows,
            "sizes": self.sizes,
            "trials": self.trials,
            "success_threshold": self.success_threshold,
            "cells": [_json_floats(asdict(c)) for c in self.cells],
            "aggregate": [_json_floats(a) for a in self.aggregate()],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d):
        cells = [Cell(**{k: _from_json_float(v) if k in ("test_error", "train_loss") else v
                         for k, v in c.items()}) for c in d["cells"]]
        return cls(list(d["rows"]), list(d["sizes"]), d["trials"], cells, d["master_seed"],
                   d["version"], d["success_threshold"], d.get("row_axis", "target"))

    @classmethod
    def from_cells_csv(cls, text):
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# modelrank "):
            raise InvalidInput("missing modelrank header comment")
        meta = dict(part.split("=", 1) for part in lines[0].split()[3:])
        version = lines[0].split()[2]
        reader = csv.reader(lines[1:])
        header = next(reader)
        if tuple(header) != CELL_HEADER:
            raise InvalidInput(f"unexpected CSV header {header}")
        cells, rows, sizes = [], [], []
        for r in reader:
            c = Cell(r[0], int(r[1]), int(r[2]), int(r[3]), float(r[4]), float(r[5]),
                     r[6] == "true")
            cells.append(c)
            if c.target not in rows:
                rows.append(c.target)
            if c.n not in sizes:
                sizes.append(c.n)
        return cls(rows, sizes, int(meta["trials"]), cells, int(meta["master_seed"]), version,
                   float(meta["success_threshold"]), meta["rows"])


def _json_floats(d):
    return {k: (None if isinstance(v, float) and not np.isfinite(v) else v) for k, v in d.items()}


def _from_json_float(v):
    return float("inf") if v is None else float(v)


# -- sweeps ------------------------------------------------------------------

def _target_rank(target):
    return model_rank_numeric(target.spec, target.theta_star)


def run_phase_sweep(cfg, workers=None):
    """Mean test error over ``(target, n, trial)``; divergent cells are recorded, never raised."""
    workers = cfg.workers if workers is None else workers
    bound = [resolve_target(cfg.model, t) for t in cfg.targets]
    if not bound:
        raise InvalidInput("phase sweep needs at least one target")
    ranks = {t.name: _target_rank(t) for t in bound} if cfg.mask_policy == "stable-only" else {}
    sequence = _fixed_sequence(cfg) if cfg.mask_policy == "fixed-sequence" else None
    jobs = [((cfg, t, t.name, n, trial), {"model_rank": ranks.get(t.name), "sequence": sequence})
            for t in bound for n in cfg.sizes for trial in range(cfg.trials)]
    cells = _map(jobs, workers)
    return SweepGrid([t.name for t in bound], list(cfg.sizes), cfg.trials, cells,
                     cfg.master_seed, __version__, cfg.success_threshold)


def run_variance_sweep(cfg, workers=None):
    """Rows are initialization standard deviations; the single target is ``cfg.targets[0]``."""
    workers = cfg.workers if workers is None else workers
    if len(cfg.targets) != 1:
        raise InvalidInput("variance sweeps take exactly one target")
    target = resolve_target(cfg.model, cfg.targets[0])
    rank = _target_rank(target) if cfg.mask_policy == "stable-only" else None
    sequence = _fixed_sequence(cfg) if cfg.mask_policy == "fixed-sequence" else None
    rows = [f"std={float(s)!r}" for s in cfg.init_stds]
    jobs = [((cfg, target, row, n, trial),
             {"init_std": std, "model_rank": rank, "sequence": sequence})
            for row, std in zip(rows, cfg.init_stds) for n in cfg.sizes for trial in range(cfg.trials)]
    cells = _map(jobs, workers)
    return SweepGrid(rows, list(cfg.sizes), cfg.trials, cells, cfg.master_seed, __version__,
                     cfg.success_threshold, row_axis="init_std")


def _fixed_sequence(cfg):
    names = cfg.sequences
    if len(names) != 1:
        raise InvalidInput("fixed-sequence sweeps take exactly one sequence")
    return get_sequence(cfg, names[0])


def get_sequence(cfg, name):
    if name in cfg.custom_sequences:
        return targets.dedupe_entries(targets.parse_entries(cfg.custom_sequences[name]))
    return targets.sequence(name)


@dataclass
class SequenceResult:
    name: str
    entries: list
    onset: int
    prefix_ranks: list
    model_rank: int
    grid: SweepGrid

    def recovery_onset(self):
        """Smallest n from which every longer prefix has mean error below the threshold."""
        means = [self.grid.mean_error(self.name, n) for n in self.grid.sizes]
        ok = [m < self.grid.success_threshold for m in means]
        for i in range(len(ok)):
            if all(ok[i:]):
                return self.grid.sizes[i]
        return None

    def first_recovery(self):
        for n in self.grid.sizes:
            if self.grid.mean_error(self.name, n) < self.grid.success_threshold:
                return n
        return None

    def to_dict(self):
        return {
            "sequence": self.name,
            "entries": targets.format_entries(self.entries),
            "n_t": self.onset,
            "model_rank": self.model_rank,
            "prefix_ranks": self.prefix_ranks,
            "first_recovery": self.first_recovery(),
            "aggregate": [_json_floats(a) for a in self.grid.aggregate()],
        }


def run_sequence_experiment(cfg, workers=None):
    """
    For each sequence: stability onset n_t at the target's minimal-rank
    factorization, and trained test error for every prefix length.
    """
    from .rank import prefix_ranks, stability_onset
    workers = cfg.workers if workers is None else workers
    if len(cfg.targets) != 1 or not isinstance(cfg.model, MatFac):
        raise InvalidInput("sequence runs take one matrix target and a matfac model")
    target = resolve_target(cfg.model, cfg.targets[0])
    names = cfg.sequences or tuple(targets.SEQUENCES_TEXT)
    out = []
    for name in names:
        seq = get_sequence(cfg, name)
        ranks = prefix_ranks(cfg.model, target.theta_star, seq)
        try:
            onset = stability_onset(cfg.model, target.theta_star, seq)
        except NotFound:
            onset = None
        sizes = [n for n in (cfg.sizes or range(1, len(seq) + 1)) if n <= len(seq)]
        sub = replace(cfg, mask_policy="fixed-sequence", sequences=(name,), sizes=tuple(sizes))
        jobs = [((sub, target, name, n, trial), {"sequence": seq})
                for n in sizes for trial in range(cfg.trials)]
        grid = SweepGrid([name], sizes, cfg.trials, _map(jobs, workers), cfg.master_seed,
                         __version__, cfg.success_threshold)
        out.append(SequenceResult(name, seq.tolist(), onset, ranks,
                                  _target_rank(target), grid))
    return out


def _spectrum_trial(job):
    cfg, target, n, mask, trial = job
    cell, theta, _ = run_cell(cfg, target, f"spectrum:{n}", n, trial,
                              sequence=mask, return_theta=True)
    spec = cfg.model
    learned = numerics.singular_values(spec.product(theta))
    emp = numerics.singular_values(spec.jacobian(theta, mask).T)
    full = numerics.singular_values(spec.jacobian(theta, spec.all_entries()).T)
    return cell, learned, emp, full


def run_spectrum_experiment(cfg, workers=None):
    """
    Singular values of trained completions from fixed masks.

    For each mask size n returns the trial means of (a) the singular values
    of the learned matrix, (b) those of the empirical tangent matrix
    (M x n) and of the full tangent matrix (M x d^2) at the trained point,
    plus per-trial numerical ranks of the two tangent matrices.
    """
    workers = cfg.workers if workers is None else workers
    if len(cfg.targets) != 1 or not isinstance(cfg.model, MatFac):
        raise InvalidInput("spectrum runs take one matrix target and a matfac model")
    target = resolve_target(cfg.model, cfg.targets[0])
    sub = replace(cfg, mask_policy="fixed-sequence")
    jobs = []
    for n in cfg.spectrum_sizes:
        mask = (get_sequence(cfg, f"mask{n}") if f"mask{n}" in cfg.custom_sequences
                else targets.spectrum_mask(n))
        jobs.extend((sub, target, n, mask, t) for t in range(cfg.trials))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_spectrum_trial, jobs))
    else:
        results = [_spectrum_trial(j) for j in jobs]
    bundle = {"version": __version__, "master_seed": cfg.master_seed, "target": target.name,
              "rel_tol": numerics.DEFAULT_REL_TOL, "sizes": []}
    for n in cfg.spectrum_sizes:
        rs = [r for j, r in zip(jobs, results) if j[2] == n]
        learned = np.array([r[1] for r in rs])
        emp = np.array([r[2] for r in rs])
        full = np.array([r[3] for r in rs])
        ratios = learned / learned[:, :1]
        bundle["sizes"].append({
            "n": n,
            "learned_mean": learned.mean(axis=0).tolist(),
            "learned_ratio_mean": ratios.mean(axis=0).tolist(),
            "empirical_tangent_mean": emp.mean(axis=0).tolist(),
            "full_tangent_mean": full.mean(axis=0).tolist(),
            "empirical_tangent_ranks": [numerics.rank_from_singular_values(s) for s in emp],
            "full_tangent_ranks": [numerics.rank_from_singular_values(s) for s in full],
            "converged": [bool(r[0].converged) for r in rs],
            "test_errors": [r[0].test_error for r in rs],
        })
    return bundle


def spectrum_csv(bundle):
    buf = io.StringIO()
    buf.write(f"# modelrank {bundle['version']} master_seed={bundle['master_seed']} "
              f"target={bundle['target']}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n", "kind", "index", "mean_singular_value"))
    for entry in bundle["sizes"]:
        for kind in ("learned_mean", "empirical_tangent_mean", "full_tangent_mean"):
            for i, v in enumerate(entry[kind]):
                w.writerow((entry["n"], kind.replace("_mean", ""), i + 1, fmt(v)))
    return buf.getvalue()


# -- export ------------------------------------------------------------------

def _write(path, text):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def export(obj, path, fmt_name="csv", aggregate=False):
    """
    Write a SweepGrid (cells or aggregate) or a spectrum bundle to ``path``.

    ``fmt_name`` is ``csv`` or ``json``.
    """
    if fmt_name not in ("csv", "json"):
        raise InvalidInput(f"format must be csv or json, got {fmt_name!r}")
    if isinstance(obj, SweepGrid):
        if fmt_name == "json":
            return _write(path, obj.to_json() + "\n")
        return _write(path, obj.aggregate_csv() if aggregate else obj.cells_csv())
    if isinstance(obj, dict):
        if fmt_name == "json":
            return _write(path, json.dumps(obj, indent=2) + "\n")
        return _write(path, spectrum_csv(obj))
    raise InvalidInput(f"cannot export {type(obj).__name__}")


def import_grid(path):
    """Read a SweepGrid written by :func:`export` (cells CSV or JSON)."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if str(path).endswith(".json"):
        return SweepGrid.from_dict(json.loads(text))
    return SweepGrid.from_cells_csv(text)
