"""
Command-line interface.

Exit codes: 0 on success, 1 on invalid input, 2 when a numerical warning
is raised and ``--strict`` is set.
"""
import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, experiments, models, numerics
from .errors import InvalidInput, NotFound, NumericalWarning, PreconditionViolated
from .rank import (
    DEFAULT_REL_TOL, Dataset, is_linearly_stable, rank_report, stratify,
)

SPEC_HELP = (
    "model spec string family:key=val,flag,noflag. Families: toynl, toylinear, "
    "matfac:d=4, fc2:d=5,m=3[,bias], cnn1d:d=5,s=3,m=1[,nosharing][,bias], "
    "cnn2d:d=28,s=3,m=1[,nosharing], deepfc:widths=5-4-1"
)

FILE_HELP = """
file formats:
  --params  whitespace- or comma-separated numbers (flattened in the
            canonical layout of the model), a JSON list, or a .npy array
  --data    CSV/whitespace table, one sample per row: the input values
            followed by the label. Matrix-factorization rows are
            "i j y" with 0-based entry indices; 2-D CNN inputs are
            flattened row-major.
"""

OUTPUT_HELP = """
outputs written to --out:
  sweep     cells.csv  (target,n,trial,seed,test_error,train_loss,converged)
            aggregate.csv (target,n,mean_test_error,success_fraction)
            grid.json, config.ini
  sequence  sequences.json, <name>_aggregate.csv, config.ini
  spectrum  spectrum.json, spectrum.csv (n,kind,index,mean_singular_value), config.ini
Every CSV starts with a '# modelrank <version> master_seed=...' comment.
"""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _load_numbers(path):
    p = Path(path)
    try:
        if p.suffix == ".npy":
            return np.load(p).astype(float).ravel()
        text = p.read_text()
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from None
    if p.suffix == ".json":
        return np.asarray(json.loads(text), dtype=float).ravel()
    try:
        return np.array(text.replace(",", " ").split(), dtype=float)
    except ValueError:
        raise InvalidInput(f"{path} is not a list of numbers") from None


def _load_dataset(spec, path):
    try:
        rows = [line.replace(",", " ").split() for line in Path(path).read_text().splitlines()
                if line.strip() and not line.lstrip().startswith("#")]
    except OSError as exc:
        raise InvalidInput(f"cannot read {path}: {exc}") from None
    try:
        table = np.array(rows, dtype=float)
    except ValueError:
        raise InvalidInput(f"{path} is not a rectangular numeric table") from None
    if table.ndim != 2 or table.shape[1] < 2:
        raise InvalidInput(f"{path} needs at least one input column and a label column")
    x, y = table[:, :-1], table[:, -1]
    if isinstance(spec, models.MatFac):
        x = x.astype(int) if np.array_equal(x, np.round(x)) else x
    elif isinstance(spec, models.Cnn2d):
        x = x.reshape(len(x), spec.d, spec.d) if x.shape[1] == spec.d ** 2 else x
    return Dataset(x, y)


def _emit(obj):
    print(json.dumps(obj, indent=2))


def cmd_stratify(args):
    table = stratify(models.parse_spec(args.model))
    if args.json:
        print(table.to_json())
    else:
        print(table.to_text())
    return 0


def cmd_rank(args):
    spec = models.parse_spec(args.model)
    theta = _load_numbers(args.params)
    data = _load_dataset(spec, args.data) if args.data else None
    report = rank_report(spec, theta, data, args.rel_tol, args.probes, args.seed)
    print(report.to_json())
    return 0


def cmd_stable(args):
    spec = models.parse_spec(args.model)
    theta = _load_numbers(args.params)
    data = _load_dataset(spec, args.data)
    stable, report = is_linearly_stable(spec, theta, data, args.rel_tol, args.probes, args.seed)
    out = {"linearly_stable": stable, "n": len(data)}
    out.update(report.to_dict())
    _emit(out)
    return 0


def cmd_verify_lemma(args):
    if args.d < 1 or args.trials < 1:
        raise InvalidInput("--d and --trials must be positive")
    cells = numerics.verify_gamma_ranks(args.d, args.trials, np.random.default_rng(args.seed),
                                        args.rel_tol)
    failed = [c for c in cells if not c["passed"]]
    if args.json:
        _emit({"d": args.d, "trials": args.trials, "cells": cells})
    else:
        for c in cells:
            mark = "ok" if c["passed"] else "FAIL"
            print(f"r_A={c['rank_a']} r_B={c['rank_b']} expected={c['expected']} "
                  f"observed={sorted(set(c['observed']))} {mark}")
    if failed:
        print(f"{len(failed)} of {len(cells)} (r_A,r_B) cells fail")
        warnings.warn(NumericalWarning("rank formula check failed", failed=len(failed)))
    else:
        print(f"all {len(cells)} (r_A,r_B) cells pass")
    return 0


def cmd_gradcheck(args):
    spec = models.parse_spec(args.model)
    if args.trials < 1:
        raise InvalidInput("--trials must be positive")
    result = models.gradient_check(spec, args.trials, args.seed)
    _emit(result)
    if not result["passed"]:
        warnings.warn(NumericalWarning("gradient check failed", **result))
    return 0


def _config(args):
    cfg = experiments.SweepConfig.from_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(cfg.to_text())
    return cfg, out


def cmd_sweep(args):
    cfg, out = _config(args)
    if cfg.kind == "variance":
        grid = experiments.run_variance_sweep(cfg, args.workers)
    elif cfg.kind == "phase":
        grid = experiments.run_phase_sweep(cfg, args.workers)
    else:
        raise InvalidInput(f"sweep runs kind=phase or kind=variance; use the {cfg.kind} command")
    experiments.export(grid, out / "cells.csv")
    experiments.export(grid, out / "aggregate.csv", aggregate=True)
    experiments.export(grid, out / "grid.json", "json")
    print(grid.aggregate_csv(), end="")
    return 0


def cmd_sequence(args):
    cfg, out = _config(args)
    results = experiments.run_sequence_experiment(cfg, args.workers)
    payload = {"version": __version__, "master_seed": cfg.master_seed,
               "target": cfg.targets[0], "sequences": [r.to_dict() for r in results]}
    (out / "sequences.json").write_text(json.dumps(payload, indent=2) + "\n")
    for r in results:
        experiments.export(r.grid, out / f"{r.name}_aggregate.csv", aggregate=True)
        print(f"{r.name}: n_t={r.onset} first_recovery={r.first_recovery()}")
    return 0


def cmd_spectrum(args):
    cfg, out = _config(args)
    bundle = experiments.run_spectrum_experiment(cfg, args.workers)
    experiments.export(bundle, out / "spectrum.json", "json")
    experiments.export(bundle, out / "spectrum.csv")
    for entry in bundle["sizes"]:
        ratios = " ".join(f"{v:.3g}" for v in entry["learned_ratio_mean"])
        print(f"n={entry['n']}: mean sigma_k/sigma_1 = {ratios}")
    return 0


def build_parser():
    parser = _Parser(prog="modelrank", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"modelrank {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_text, epilog=None):
        p = sub.add_parser(name, help=help_text, description=help_text, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--strict", action="store_true",
                       help="turn numerical warnings into exit code 2")
        p.set_defaults(func=func)
        return p

    def rank_flags(p):
        p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL,
                       help="relative singular-value threshold (default %(default)g)")
        p.add_argument("--probes", type=int, default=None,
                       help="probe inputs for the model rank (default 4 x parameter count)")
        p.add_argument("--seed", type=int, default=0, help="probe seed")

    p = add("stratify", cmd_stratify, "print the rank hierarchy of an architecture")
    p.add_argument("--model", required=True, help=SPEC_HELP)
    p.add_argument("--json", action="store_true", help="emit JSON instead of text")

    p = add("rank", cmd_rank, "rank report (JSON) at a parameter point", FILE_HELP)
    p.add_argument("--model", required=True, help=SPEC_HELP)
    p.add_argument("--params", required=True)
    p.add_argument("--data")
    rank_flags(p)

    p = add("stable", cmd_stable, "linear-stability certificate of an interpolating point",
            FILE_HELP)
    p.add_argument("--model", required=True, help=SPEC_HELP)
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    rank_flags(p)

    p = add("verify-lemma", cmd_verify_lemma,
            "check rank [I(x)B; A^T(x)I] = d^2 - (d-r_A)(d-r_B) on random matrices")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rel-tol", type=float, default=DEFAULT_REL_TOL)
    p.add_argument("--json", action="store_true")

    grammar = experiments.__doc__[experiments.__doc__.index("Config file grammar"):]
    for name, func, text in (
            ("sweep", cmd_sweep, "phase-transition or init-scale sweep"),
            ("sequence", cmd_sequence, "designed sampling orders: n_t and error per prefix"),
            ("spectrum", cmd_spectrum, "singular values of trained completions")):
        p = add(name, func, text, grammar + OUTPUT_HELP)
        p.add_argument("--config", required=True, help="INI config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--workers", type=int, default=None,
                       help=f"worker processes (default ${experiments.WORKERS_ENV} or 1)")

    p = add("gradcheck", cmd_gradcheck, "analytic vs finite-difference parameter gradients")
    p.add_argument("--model", required=True, help=SPEC_HELP)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", 0) is None:
        try:
            args.workers = experiments.default_workers()
        except InvalidInput as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
    with warnings.catch_warnings():
        if args.strict:
            warnings.simplefilter("error", NumericalWarning)
        try:
            return args.func(args)
        except NumericalWarning as exc:
            print(f"numerical warning: {exc}", file=sys.stderr)
            return 2
        except (InvalidInput, PreconditionViolated, NotFound, ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
