"""
Dense linear algebra kernel: SVD, numerical rank, Kronecker products and
the stacked Kronecker matrix whose rank gives the matrix-factorization
model rank.
"""
from typing import NamedTuple

import numpy as np

from .errors import InvalidInput

DEFAULT_REL_TOL = 1e-8

# refuse Kronecker products larger than this many entries
MAX_KRON_ENTRIES = 50_000_000


class SvdResult(NamedTuple):
    left_vectors: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray


def as_matrix(m, name="matrix"):
    """Validate and convert ``m`` to a finite 2-D float array."""
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise InvalidInput(f"{name} must be 2-D, got shape {a.shape}")
    if a.size == 0:
        raise InvalidInput(f"{name} is empty")
    if not np.all(np.isfinite(a)):
        raise InvalidInput(f"{name} has non-finite entries")
    return a


def svd(m):
    """
    Full singular value decomposition ``m = U diag(s) V^T``.

    Parameters
    ----------
    m : array_like, shape (p, q)

    Returns
    -------
    SvdResult
        ``left_vectors`` (p, p), ``singular_values`` (min(p, q),) sorted
        descending, ``right_vectors`` (q, q) with orthonormal columns.
    """
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    return SvdResult(u, s, vt.T)


def singular_values(m):
    """Singular values of ``m`` in nonincreasing order."""
    return np.linalg.svd(as_matrix(m), compute_uv=False)


def rank_from_singular_values(s, rel_tol=DEFAULT_REL_TOL):
    s = np.asarray(s, dtype=float)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > rel_tol * s[0]))


def numerical_rank(m, rel_tol=DEFAULT_REL_TOL):
    """
    Count singular values above ``rel_tol * sigma_max``.

    The threshold is relative, so the result is invariant to nonzero
    scaling and to transposition. The zero matrix has rank 0.
    """
    if not 0.0 < rel_tol < 1.0:
        raise InvalidInput(f"rel_tol must lie in (0, 1), got {rel_tol}")
    return rank_from_singular_values(singular_values(m), rel_tol)


def spectral_gap(s, rank):
    """Ratio ``s[rank-1] / s[rank]``; ``inf`` when nothing follows the cut."""
    s = np.asarray(s, dtype=float)
    if rank <= 0 or rank >= s.size:
        return float("inf")
    if s[rank] == 0.0:
        return float("inf")
    return float(s[rank - 1] / s[rank])


def kron(a, b):
    """Kronecker product, shape ``(p*r, q*t)`` for ``a`` (p, q), ``b`` (r, t)."""
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    size = a.size * b.size
    if size > MAX_KRON_ENTRIES:
        raise InvalidInput(f"Kronecker product would have {size} entries")
    return np.kron(a, b)


def gamma_matrix(a, b):
    """
    Stack ``I (x) B`` on top of ``A^T (x) I`` for square ``A``, ``B`` of side d.

    The result has shape (2 d^2, d^2); its rank is
    ``d^2 - (d - rank A)(d - rank B)``.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]:
        raise InvalidInput("a and b must be square")
    if a.shape != b.shape:
        raise InvalidInput(f"a and b differ in size: {a.shape} vs {b.shape}")
    eye = np.eye(a.shape[0])
    return np.vstack([kron(eye, b), kron(a.T, eye)])


def gamma_rank_formula(d, rank_a, rank_b):
    return d * d - (d - rank_a) * (d - rank_b)


def random_rank_matrix(d, r, rng):
    """Random d x d matrix of rank exactly ``r`` (a.s.), as a product of Gaussian factors."""
    if not 0 <= r <= d:
        raise InvalidInput(f"rank {r} outside [0, {d}]")
    if r == 0:
        return np.zeros((d, d))
    return rng.standard_normal((d, r)) @ rng.standard_normal((r, d))


def verify_gamma_ranks(d, trials, rng, rel_tol=DEFAULT_REL_TOL):
    """
    Check the Kronecker-stack rank formula on random matrices of every rank pair.

    Returns a list of dicts, one per ``(rank_a, rank_b)`` cell, with the
    expected rank, the observed ranks and a ``passed`` flag.
    """
    cells = []
    for ra in range(d + 1):
        for rb in range(d + 1):
            expected = gamma_rank_formula(d, ra, rb)
            observed = []
            for _ in range(trials):
                a = random_rank_matrix(d, ra, rng)
                b = random_rank_matrix(d, rb, rng)
                observed.append(numerical_rank(gamma_matrix(a, b), rel_tol))
            cells.append({
                "d": d,
                "rank_a": ra,
                "rank_b": rb,
                "expected": expected,
                "observed": observed,
                "passed": all(o == expected for o in observed),
            })
    return cells
