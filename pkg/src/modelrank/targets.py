"""
Built-in targets: toy linear functions, eight 4x4 matrices of ranks 1 to 4,
the six designed sampling orders and three fixed masks used with them, and
the three-neuron convolutional target.

Entry indices are 0-based here; the published listings are 1-based.
"""
import re

import numpy as np

from . import numerics
from .errors import InvalidInput, NotFound
from .models import Cnn1d

# ``(a0, a1, a2)`` of ``a0 + a1 x1 + a2 x2``
TOY_TARGETS = {
    "1": (1.0, 0.0, 0.0),
    "x1": (0.0, 1.0, 0.0),
    "1+x1": (1.0, 1.0, 0.0),
    "x2": (0.0, 0.0, 1.0),
    "1+x2": (1.0, 0.0, 1.0),
    "x1+x2": (0.0, 1.0, 1.0),
    "1+x1+x2": (1.0, 1.0, 1.0),
}

_M3 = [[-1.8, 2.4, 7.7, -5.3],
       [0.4, 1.8, 5.4, -3.6],
       [3.2, 1.8, 4.8, -3.0],
       [6.6, 2.4, 5.9, -3.5]]

_MATRICES = {
    "M1": [[1.0, 0.3, 0.7, -0.4],
           [2.0, 0.6, 1.4, -0.8],
           [4.0, 1.2, 2.8, -1.6],
           [7.0, 2.1, 4.9, -2.8]],
    "M2": [[4.0, 0.6, 1.8, 0.8],
           [6.0, 0.9, 2.7, 1.2],
           [8.0, 1.2, 3.6, 1.6],
           [18.0, 2.7, 8.1, 3.6]],
    "M3": _M3,
    "M4": [[7.6, 3.3, 19.8, -7.3],
           [7.6, 2.1, 10.7, -2.4],
           [8.8, 1.8, 7.6, -0.2],
           [19.2, 3.6, 14.1, 0.9]],
    # The published listing repeats M3 here, which has rank 2. A rank-one
    # update keeps the entries close while making the rank 3.
    "M5": (np.array(_M3) + np.outer([1.0, 2.0, 0.0, 1.0], [0.3, -0.5, 0.2, 0.4])).tolist(),
    "M6": [[8.5, 9.3, 22.5, -6.1],
           [8.2, 6.1, 12.5, -1.6],
           [11.5, 19.8, 15.7, 3.4],
           [20.4, 11.6, 17.7, 2.5]],
    "M7": [[3.6, -1.2, 8.1, -3.5],
           [8.1, -3.5, 3.6, -1.2],
           [9.1, -1.7, 11.4, -0.6],
           [11.4, -0.6, 9.1, -1.7]],
    "M8": [[12.1, 17.3, 24.1, -4.9],
           [16.3, 24.1, 16.1, 1.1],
           [14.2, 25.8, 16.9, 4.3],
           [22.2, 15.6, 18.5, 3.1]],
}

MATRIX_RANKS = {"M1": 1, "M2": 1, "M3": 2, "M4": 2, "M5": 3, "M6": 3, "M7": 4, "M8": 4}

# full-rank target for the singular-value experiment
SPECTRUM_TARGET = "M8"


def parse_entries(text, one_based=True):
    """Parse ``"(3,1),(4,3),..."`` into an ``(n, 2)`` integer array."""
    pairs = re.findall(r"\(\s*(-?\d+)\s*,\s*(-?\d+)\s*\)", text)
    if not pairs:
        raise InvalidInput(f"no (i,j) pairs in {text!r}")
    out = np.array(pairs, dtype=int)
    return out - 1 if one_based else out


def format_entries(entries, one_based=True):
    off = 1 if one_based else 0
    return ",".join(f"({i + off},{j + off})" for i, j in np.asarray(entries))


def dedupe_entries(entries):
    """Drop repeated entries, keeping first occurrences in order."""
    seen, out = set(), []
    for i, j in np.asarray(entries):
        if (int(i), int(j)) not in seen:
            seen.add((int(i), int(j)))
            out.append((int(i), int(j)))
    return np.array(out, dtype=int).reshape(-1, 2)


# 1-based, exactly as published; the third lists (3,3) twice and omits (3,2)
SEQUENCES_TEXT = {
    "seq1": "(3,1),(4,3),(2,1),(1,3),(2,4),(4,1),(1,1),(1,2),(4,2),(4,4),(3,2),(3,4),(3,3),(2,2),(2,3),(1,4)",
    "seq2": "(3,4),(2,1),(2,3),(4,3),(4,1),(4,4),(1,1),(3,3),(1,2),(1,4),(1,3),(2,4),(3,2),(2,2),(3,1),(4,2)",
    "seq3": "(2,4),(3,3),(3,1),(4,4),(4,3),(3,4),(1,3),(1,4),(2,3),(3,3),(1,1),(1,2),(4,2),(2,2),(2,1),(4,1)",
    "seq4": "(4,4),(2,3),(4,2),(1,2),(1,4),(3,2),(4,1),(3,1),(1,1),(3,4),(1,3),(2,2),(2,4),(2,1),(3,3),(4,3)",
    "seq5": "(2,4),(3,4),(4,1),(1,2),(2,2),(4,4),(1,1),(3,1),(3,2),(4,2),(2,1),(1,3),(4,3),(3,3),(2,3),(1,4)",
    "seq6": "(4,3),(4,4),(2,1),(3,4),(3,3),(3,1),(2,3),(1,1),(4,1),(2,4),(1,4),(1,3),(1,2),(2,2),(3,2),(4,2)",
}
SEQUENCE_TARGET = "M2"

SPECTRUM_MASKS_TEXT = {
    7: "(1,1),(1,2),(1,3),(1,4),(2,2),(3,3),(4,4)",
    12: "(1,1),(1,2),(1,3),(1,4),(2,1),(2,2),(2,3),(2,4),(3,3),(3,4),(4,3),(4,4)",
    15: "(1,1),(1,2),(1,3),(1,4),(2,1),(2,2),(2,3),(2,4),(3,1),(3,2),(3,3),(3,4),(4,2),(4,3),(4,4)",
}


def matrix(name, check=True):
    """
    Target matrix by name (``"M1"`` ... ``"M8"``).

    With ``check`` the numerical rank is verified against ``MATRIX_RANKS``.
    """
    if name not in _MATRICES:
        raise NotFound(f"unknown matrix target {name!r}; choose from {sorted(_MATRICES)}")
    m = np.array(_MATRICES[name], dtype=float)
    if check:
        r = numerics.numerical_rank(m)
        if r != MATRIX_RANKS[name]:
            raise InvalidInput(f"{name} has rank {r}, expected {MATRIX_RANKS[name]}")
    return m


def matrix_names():
    return sorted(_MATRICES)


def sequence(name):
    """Designed sampling order (0-based), with repeated entries removed."""
    if name not in SEQUENCES_TEXT:
        raise NotFound(f"unknown sequence {name!r}; choose from {sorted(SEQUENCES_TEXT)}")
    return dedupe_entries(parse_entries(SEQUENCES_TEXT[name]))


def spectrum_mask(n):
    if n not in SPECTRUM_MASKS_TEXT:
        raise NotFound(f"no fixed mask of size {n}; choose from {sorted(SPECTRUM_MASKS_TEXT)}")
    return parse_entries(SPECTRUM_MASKS_TEXT[n])


def toy_function(name):
    """Vectorized ``x -> a0 + a1 x1 + a2 x2`` for a named toy target."""
    if name not in TOY_TARGETS:
        raise NotFound(f"unknown toy target {name!r}; choose from {list(TOY_TARGETS)}")
    a0, a1, a2 = TOY_TARGETS[name]

    def f(x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return a0 + a1 * x[:, 0] + a2 * x[:, 1]

    return f


NN_KERNEL = np.array([1.0, 0.8, 0.6])  # element alpha multiplies x[i + 2 - alpha]
NN_OUTPUT = np.array([1.0, 1.0, 1.0])


def nn_target_spec(bias=True):
    return Cnn1d(d=5, s=3, m=1, sharing=True, bias=bias)


def nn_target_params(bias=True):
    """
    One-kernel CNN parameters of the three-neuron shift target.

    The hidden weight rows are ``[0.6, 0.8, 1, 0, 0]`` and its two shifts,
    the output weights are all one, and the bias (if any) is zero.
    """
    spec = nn_target_spec(bias)
    return spec, spec.pack(NN_OUTPUT[None, :], NN_KERNEL[None, :])


def nn_target_function():
    spec, theta = nn_target_params(bias=False)
    return lambda x: spec.forward_batch(theta, spec.check_inputs(x))
