"""
Differentiable model zoo.

Every model maps a flat parameter vector ``theta`` and an input to a real
number, and provides the exact parameter gradient. Inputs are handled in
batches: ``forward_batch`` returns shape ``(n,)`` and ``jacobian`` returns
the ``(n, M)`` matrix whose rows are parameter gradients.

Canonical parameter layouts (all blocks flattened row-major, concatenated
in the order listed):

==========  ==============================================================
family      layout
==========  ==============================================================
toynl       ``[t0, t1, t2, t3]`` for ``t0 + t1 x1 + t2 t3 x2``
toylinear   ``[t0, t1, t2]`` for ``t0 + t1 x1 + t2 x2``
matfac      ``A (d, d)``, ``B (d, d)``; the input is an entry ``(i, j)``
fc2         ``a (m,)``, ``W (m, d)``, ``b (m,)`` if bias
cnn1d       shared: ``a (m, P)``, ``K (m, s)``, ``b (m,)`` if bias;
            unshared: ``a (m, P)``, ``K (m, P, s)``, ``b (m, P)`` if bias
cnn2d       shared: ``a (m, P, P)``, ``K (m, s, s)``;
            unshared: ``a (m, P, P)``, ``K (m, P, P, s, s)``
deepfc      ``W1 (m1, m0)``, ``W2 (m2, m1)``, ..., ``WL (1, m_{L-1})``
==========  ==============================================================

Here ``P = d + 1 - s`` is the number of kernel positions (stride 1, no
padding). Kernel element ``alpha`` at position ``i`` multiplies input
``x[i + s - 1 - alpha]`` (0-based), and likewise along both axes in 2-D.
All hidden activations are ``tanh``.
"""
from dataclasses import asdict, dataclass, fields
from typing import ClassVar

import numpy as np

from .errors import InvalidInput


def _dtanh(h):
    return 1.0 - h * h


@dataclass(frozen=True)
class ModelSpec:
    """Base class; subclasses are frozen dataclasses describing an architecture."""

    family: ClassVar[str] = ""

    def param_count(self):
        raise NotImplementedError

    def unpack(self, theta):
        """Split a flat parameter vector into named, shaped blocks (views)."""
        raise NotImplementedError

    def check_inputs(self, x):
        """Return ``x`` as a batch array, raising InvalidInput on mismatch."""
        raise NotImplementedError

    def forward_batch(self, theta, x):
        raise NotImplementedError

    def jacobian(self, theta, x):
        raise NotImplementedError

    def vjp(self, theta, x, v):
        """``jacobian(theta, x).T @ v`` without forming the Jacobian where cheaper."""
        return self.jacobian(theta, x).T @ v

    def sample_inputs(self, n, rng):
        """Draw ``n`` i.i.d. standard-normal inputs."""
        raise NotImplementedError

    def single_input_ndim(self):
        return 1

    def check_theta(self, theta):
        theta = np.asarray(theta, dtype=float)
        m = self.param_count()
        if theta.shape != (m,):
            raise InvalidInput(f"{self.family} expects {m} parameters, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise InvalidInput("parameters contain non-finite values")
        return theta

    def to_config(self):
        cfg = {"family": self.family}
        cfg.update(asdict(self))
        return cfg

    def __str__(self):
        return format_spec(self)


def _check_vectors(x, d, family):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != d:
        raise InvalidInput(f"{family} expects inputs of length {d}, got shape {x.shape}")
    return x


def _positive(**values):
    for name, v in values.items():
        if int(v) != v or v < 1:
            raise InvalidInput(f"{name} must be a positive integer, got {v!r}")


@dataclass(frozen=True)
class ToyNL(ModelSpec):
    family: ClassVar[str] = "toynl"

    def param_count(self):
        return 4

    def unpack(self, theta):
        return {"theta": theta}

    def check_inputs(self, x):
        return _check_vectors(x, 2, self.family)

    def forward_batch(self, theta, x):
        return theta[0] + theta[1] * x[:, 0] + theta[2] * theta[3] * x[:, 1]

    def jacobian(self, theta, x):
        ones = np.ones(len(x))
        return np.stack([ones, x[:, 0], theta[3] * x[:, 1], theta[2] * x[:, 1]], axis=1)

    def sample_inputs(self, n, rng):
        return rng.standard_normal((n, 2))


@dataclass(frozen=True)
class ToyLinear(ModelSpec):
    family: ClassVar[str] = "toylinear"

    def param_count(self):
        return 3

    def unpack(self, theta):
        return {"theta": theta}

    def check_inputs(self, x):
        return _check_vectors(x, 2, self.family)

    def forward_batch(self, theta, x):
        return theta[0] + theta[1] * x[:, 0] + theta[2] * x[:, 1]

    def jacobian(self, theta, x):
        return np.stack([np.ones(len(x)), x[:, 0], x[:, 1]], axis=1)

    def sample_inputs(self, n, rng):
        return rng.standard_normal((n, 2))


@dataclass(frozen=True)
class MatFac(ModelSpec):
    """``f = A B`` with both factors d x d; the input is an entry index."""

    d: int
    family: ClassVar[str] = "matfac"

    def __post_init__(self):
        _positive(d=self.d)

    def param_count(self):
        return 2 * self.d * self.d

    def unpack(self, theta):
        d2 = self.d * self.d
        return {"A": theta[:d2].reshape(self.d, self.d),
                "B": theta[d2:].reshape(self.d, self.d)}

    def check_inputs(self, x):
        x = np.asarray(x)
        if x.ndim == 1:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != 2:
            raise InvalidInput(f"matfac inputs are (i, j) pairs, got shape {x.shape}")
        if not np.issubdtype(x.dtype, np.integer):
            xi = x.astype(int)
            if not np.array_equal(xi, x):
                raise InvalidInput("matfac entry indices must be integers")
            x = xi
        if x.min() < 0 or x.max() >= self.d:
            raise InvalidInput(f"entry index outside [0, {self.d})")
        return x

    def forward_batch(self, theta, x):
        p = self.unpack(theta)
        return np.einsum("nk,kn->n", p["A"][x[:, 0]], p["B"][:, x[:, 1]])

    def jacobian(self, theta, x):
        p = self.unpack(theta)
        n, d = len(x), self.d
        rows = np.arange(n)
        ja = np.zeros((n, d, d))
        jb = np.zeros((n, d, d))
        # d(AB)_ij / dA_ik = B_kj ; d(AB)_ij / dB_kj = A_ik
        ja[rows, x[:, 0], :] = p["B"][:, x[:, 1]].T
        jb[rows, :, x[:, 1]] = p["A"][x[:, 0], :]
        return np.concatenate([ja.reshape(n, -1), jb.reshape(n, -1)], axis=1)

    def vjp(self, theta, x, v):
        p = self.unpack(theta)
        r = np.zeros((self.d, self.d))
        np.add.at(r, (x[:, 0], x[:, 1]), v)
        return np.concatenate([(r @ p["B"].T).ravel(), (p["A"].T @ r).ravel()])

    def product(self, theta):
        p = self.unpack(theta)
        return p["A"] @ p["B"]

    def all_entries(self):
        """Every entry index, row-major."""
        i, j = np.divmod(np.arange(self.d * self.d), self.d)
        return np.stack([i, j], axis=1)

    def sample_inputs(self, n, rng):
        entries = self.all_entries()
        return entries[rng.choice(len(entries), size=n, replace=n > len(entries))]

    def pack(self, a, b):
        return np.concatenate([np.asarray(a, float).ravel(), np.asarray(b, float).ravel()])


@dataclass(frozen=True)
class Fc2(ModelSpec):
    """``f(x) = sum_i a_i tanh(w_i . x [+ b_i])``."""

    d: int
    m: int
    bias: bool = False
    family: ClassVar[str] = "fc2"

    def __post_init__(self):
        _positive(d=self.d, m=self.m)

    def param_count(self):
        return self.m * (self.d + 2 if self.bias else self.d + 1)

    def unpack(self, theta):
        m, d = self.m, self.d
        out = {"a": theta[:m], "W": theta[m:m + m * d].reshape(m, d)}
        if self.bias:
            out["b"] = theta[m + m * d:]
        return out

    def pack(self, a, w, b=None):
        parts = [np.ravel(a), np.ravel(w)]
        if self.bias:
            parts.append(np.zeros(self.m) if b is None else np.ravel(b))
        return np.concatenate(parts).astype(float)

    def check_inputs(self, x):
        return _check_vectors(x, self.d, self.family)

    def _hidden(self, p, x):
        z = x @ p["W"].T
        if self.bias:
            z = z + p["b"]
        return np.tanh(z)

    def forward_batch(self, theta, x):
        p = self.unpack(theta)
        return self._hidden(p, x) @ p["a"]

    def jacobian(self, theta, x):
        p = self.unpack(theta)
        h = self._hidden(p, x)
        g = _dtanh(h) * p["a"]
        blocks = [h, (g[:, :, None] * x[:, None, :]).reshape(len(x), -1)]
        if self.bias:
            blocks.append(g)
        return np.concatenate(blocks, axis=1)

    def sample_inputs(self, n, rng):
        return rng.standard_normal((n, self.d))


def _conv1d_index(d, s):
    p = d + 1 - s
    return np.arange(p)[:, None] + (s - 1) - np.arange(s)[None, :]


@dataclass(frozen=True)
class Cnn1d(ModelSpec):
    """Two-layer tanh CNN on length-d inputs, stride 1, no padding."""

    d: int
    s: int
    m: int
    sharing: bool = True
    bias: bool = False
    family: ClassVar[str] = "cnn1d"

    def __post_init__(self):
        _positive(d=self.d, s=self.s, m=self.m)
        if self.s > self.d:
            raise InvalidInput(f"kernel size {self.s} exceeds input length {self.d}")

    @property
    def positions(self):
        return self.d + 1 - self.s

    def _shapes(self):
        m, p, s = self.m, self.positions, self.s
        shapes = {"a": (m, p), "K": (m, s) if self.sharing else (m, p, s)}
        if self.bias:
            shapes["b"] = (m,) if self.sharing else (m, p)
        return shapes

    def param_count(self):
        return sum(int(np.prod(sh)) for sh in self._shapes().values())

    def unpack(self, theta):
        out, k = {}, 0
        for name, sh in self._shapes().items():
            size = int(np.prod(sh))
            out[name] = theta[k:k + size].reshape(sh)
            k += size
        return out

    def pack(self, a, k, b=None):
        parts = [np.ravel(a), np.ravel(k)]
        if self.bias:
            parts.append(np.zeros(self._shapes()["b"]).ravel() if b is None else np.ravel(b))
        return np.concatenate(parts).astype(float)

    def check_inputs(self, x):
        return _check_vectors(x, self.d, self.family)

    def patches(self, x):
        """Input windows, shape (n, P, s)."""
        return x[:, _conv1d_index(self.d, self.s)]

    def _hidden(self, p, win):
        if self.sharing:
            z = np.einsum("nps,ls->nlp", win, p["K"])
            if self.bias:
                z = z + p["b"][None, :, None]
        else:
            z = np.einsum("nps,lps->nlp", win, p["K"])
            if self.bias:
                z = z + p["b"][None]
        return np.tanh(z)

    def forward_batch(self, theta, x):
        p = self.unpack(theta)
        h = self._hidden(p, self.patches(x))
        return np.einsum("nlp,lp->n", h, p["a"])

    def jacobian(self, theta, x):
        p = self.unpack(theta)
        win = self.patches(x)
        h = self._hidden(p, win)
        g = _dtanh(h) * p["a"][None]
        n = len(x)
        if self.sharing:
            dk = np.einsum("nlp,nps->nls", g, win)
            db = g.sum(axis=2)
        else:
            dk = g[:, :, :, None] * win[:, None, :, :]
            db = g
        blocks = [h.reshape(n, -1), dk.reshape(n, -1)]
        if self.bias:
            blocks.append(db.reshape(n, -1))
        return np.concatenate(blocks, axis=1)

    def sample_inputs(self, n, rng):
        return rng.standard_normal((n, self.d))


@dataclass(frozen=True)
class Cnn2d(ModelSpec):
    """Two-layer tanh CNN on d x d images with s x s kernels, stride 1, no bias."""

    d: int
    s: int
    m: int
    sharing: bool = True
    family: ClassVar[str] = "cnn2d"

    def __post_init__(self):
        _positive(d=self.d, s=self.s, m=self.m)
        if self.s > self.d:
            raise InvalidInput(f"kernel size {self.s} exceeds image side {self.d}")

    @property
    def positions(self):
        return self.d + 1 - self.s

    def _shapes(self):
        m, p, s = self.m, self.positions, self.s
        return {"a": (m, p, p), "K": (m, s, s) if self.sharing else (m, p, p, s, s)}

    def param_count(self):
        return sum(int(np.prod(sh)) for sh in self._shapes().values())

    def unpack(self, theta):
        out, k = {}, 0
        for name, sh in self._shapes().items():
            size = int(np.prod(sh))
            out[name] = theta[k:k + size].reshape(sh)
            k += size
        return out

    def pack(self, a, k):
        return np.concatenate([np.ravel(a), np.ravel(k)]).astype(float)

    def single_input_ndim(self):
        return 2

    def check_inputs(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3 or x.shape[1:] != (self.d, self.d):
            raise InvalidInput(f"cnn2d expects {self.d}x{self.d} images, got shape {x.shape}")
        return x

    def patches(self, x):
        """Image windows, shape (n, P, P, s, s)."""
        idx = _conv1d_index(self.d, self.s)
        return x[:, idx[:, None, :, None], idx[None, :, None, :]]

    def _hidden(self, p, win):
        if self.sharing:
            z = np.einsum("nijab,lab->nlij", win, p["K"])
        else:
            z = np.einsum("nijab,lijab->nlij", win, p["K"])
        return np.tanh(z)

    def forward_batch(self, theta, x):
        p = self.unpack(theta)
        h = self._hidden(p, self.patches(x))
        return np.einsum("nlij,lij->n", h, p["a"])

    def jacobian(self, theta, x):
        p = self.unpack(theta)
        win = self.patches(x)
        h = self._hidden(p, win)
        g = _dtanh(h) * p["a"][None]
        n = len(x)
        if self.sharing:
            dk = np.einsum("nlij,nijab->nlab", g, win)
        else:
            dk = g[:, :, :, :, None, None] * win[:, None]
        return np.concatenate([h.reshape(n, -1), dk.reshape(n, -1)], axis=1)

    def sample_inputs(self, n, rng):
        return rng.standard_normal((n, self.d, self.d))


@dataclass(frozen=True)
class DeepFc(ModelSpec):
    """``W_L tanh(... tanh(W_1 x))`` without biases; ``widths = (d, m1, ..., 1)``."""

    widths: tuple
    family: ClassVar[str] = "deepfc"

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2:
            raise InvalidInput("deepfc needs at least input and output widths")
        _positive(**{f"m{i}": w for i, w in enumerate(self.widths)})
        if self.widths[-1] != 1:
            raise InvalidInput("deepfc output width must be 1")

    @property
    def d(self):
        return self.widths[0]

    def param_count(self):
        return sum(a * b for a, b in zip(self.widths[:-1], self.widths[1:]))

    def unpack(self, theta):
        ws, k = [], 0
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            ws.append(theta[k:k + fan_in * fan_out].reshape(fan_out, fan_in))
            k += fan_in * fan_out
        return {"W": ws}

    def pack(self, weights):
        return np.concatenate([np.ravel(w) for w in weights]).astype(float)

    def check_inputs(self, x):
        return _check_vectors(x, self.d, self.family)

    def _activations(self, ws, x):
        hs = [x]
        for w in ws[:-1]:
            hs.append(np.tanh(hs[-1] @ w.T))
        return hs

    def forward_batch(self, theta, x):
        ws = self.unpack(theta)["W"]
        return (self._activations(ws, x)[-1] @ ws[-1].T)[:, 0]

    def jacobian(self, theta, x):
        ws = self.unpack(theta)["W"]
        hs = self._activations(ws, x)
        n = len(x)
        delta = np.ones((n, 1))
        grads = []
        for layer in range(len(ws) - 1, -1, -1):
            grads.append((delta[:, :, None] * hs[layer][:, None, :]).reshape(n, -1))
            if layer > 0:
                delta = (delta @ ws[layer]) * _dtanh(hs[layer])
        return np.concatenate(grads[::-1], axis=1)

    def sample_inputs(self, n, rng):
        return rng.standard_normal((n, self.d))


FAMILIES = {cls.family: cls for cls in (ToyNL, ToyLinear, MatFac, Fc2, Cnn1d, Cnn2d, DeepFc)}


def param_count(spec):
    return spec.param_count()


def forward_batch(spec, theta, x):
    theta = spec.check_theta(theta)
    return spec.forward_batch(theta, spec.check_inputs(x))


def jacobian(spec, theta, x):
    """Parameter Jacobian, shape (n, M); row k is the gradient at input k."""
    theta = spec.check_theta(theta)
    return spec.jacobian(theta, spec.check_inputs(x))


def _check_single(spec, x):
    arr = np.asarray(x)
    if arr.ndim != spec.single_input_ndim():
        raise InvalidInput(f"expected a single {spec.family} input, got shape {arr.shape}")
    return arr


def forward(spec, theta, x):
    """Model output at a single input."""
    return float(forward_batch(spec, theta, _check_single(spec, x))[0])


def grad_param(spec, theta, x):
    """Exact gradient of the output with respect to ``theta`` at a single input."""
    return jacobian(spec, theta, _check_single(spec, x))[0]


def grad_fd(spec, theta, x, h=1e-5):
    """Central finite-difference gradient, component by component."""
    if not h > 0:
        raise InvalidInput("step h must be positive")
    theta = spec.check_theta(theta)
    xb = spec.check_inputs(_check_single(spec, x))
    out = np.empty_like(theta)
    for k in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[k] += h
        minus[k] -= h
        out[k] = (spec.forward_batch(plus, xb)[0] - spec.forward_batch(minus, xb)[0]) / (2 * h)
    return out


GRADCHECK_RTOL = 1e-6
GRADCHECK_ATOL = 1e-9


def gradient_check(spec, trials=100, seed=0, h=1e-5):
    """
    Compare ``grad_param`` with ``grad_fd`` at random points.

    Each trial draws standard-normal parameters and one random input. The
    discrepancy of a component is ``|g - f| / (|f| + atol / rtol)``, which
    is below ``rtol`` exactly when ``|g - f| <= rtol |f| + atol``: a
    relative error of 1e-6 with an absolute floor of 1e-9 for components
    near zero.

    Returns
    -------
    dict
        ``max_rel_error`` (the discrepancy above), ``max_abs_error``,
        ``passed`` and the settings used.
    """
    rng = np.random.default_rng(seed)
    floor = GRADCHECK_ATOL / GRADCHECK_RTOL
    worst_rel = worst_abs = 0.0
    for _ in range(trials):
        theta = rng.standard_normal(spec.param_count())
        x = spec.sample_inputs(1, rng)[0]
        g = grad_param(spec, theta, x)
        f = grad_fd(spec, theta, x, h)
        diff = np.abs(g - f)
        worst_abs = max(worst_abs, float(diff.max()))
        worst_rel = max(worst_rel, float(np.max(diff / (np.abs(f) + floor))))
    return {"model": format_spec(spec), "trials": trials, "seed": seed, "h": h,
            "rtol": GRADCHECK_RTOL, "atol": GRADCHECK_ATOL,
            "max_rel_error": worst_rel, "max_abs_error": worst_abs,
            "passed": worst_rel < GRADCHECK_RTOL}


def embed_wider(spec_narrow, theta_narrow, spec_wide):
    """
    Embed parameters into a wider network of the same family.

    Added hidden units get zero input and zero output weights, so the
    wide network computes exactly the same function.
    """
    theta_narrow = spec_narrow.check_theta(theta_narrow)
    if type(spec_narrow) is not type(spec_wide):
        raise InvalidInput(f"cannot embed {spec_narrow.family} into {spec_wide.family}")
    if isinstance(spec_narrow, (ToyNL, ToyLinear, MatFac)):
        raise InvalidInput(f"{spec_narrow.family} has no width to grow")

    if isinstance(spec_narrow, DeepFc):
        wn, ww = spec_narrow.widths, spec_wide.widths
        if len(wn) != len(ww) or wn[0] != ww[0] or any(a > b for a, b in zip(wn, ww)):
            raise InvalidInput(f"{spec_wide} is not wider than {spec_narrow}")
        out = np.zeros(spec_wide.param_count())
        for src, dst in zip(spec_narrow.unpack(theta_narrow)["W"], spec_wide.unpack(out)["W"]):
            dst[:src.shape[0], :src.shape[1]] = src
        return out

    fixed = [f.name for f in fields(spec_narrow) if f.name != "m"]
    if any(getattr(spec_narrow, k) != getattr(spec_wide, k) for k in fixed):
        raise InvalidInput(f"{spec_wide} differs from {spec_narrow} beyond width")
    if spec_wide.m < spec_narrow.m:
        raise InvalidInput(f"{spec_wide} is narrower than {spec_narrow}")
    out = np.zeros(spec_wide.param_count())
    wide = spec_wide.unpack(out)
    for name, block in spec_narrow.unpack(theta_narrow).items():
        wide[name][:block.shape[0]] = block
    return out


def unshare(spec, theta):
    """Equivalent weight-shared CNN written as a CNN without weight sharing."""
    if not isinstance(spec, (Cnn1d, Cnn2d)) or not spec.sharing:
        raise InvalidInput("unshare needs a weight-sharing CNN")
    theta = spec.check_theta(theta)
    p = spec.unpack(theta)
    wide = type(spec)(**{**asdict(spec), "sharing": False})
    pos = spec.positions
    if isinstance(spec, Cnn1d):
        k = np.repeat(p["K"][:, None, :], pos, axis=1)
        b = np.repeat(p["b"][:, None], pos, axis=1) if spec.bias else None
        return wide, wide.pack(p["a"], k, b)
    k = np.broadcast_to(p["K"][:, None, None], (spec.m, pos, pos, spec.s, spec.s))
    return wide, wide.pack(p["a"], k)


def to_fully_connected(spec, theta):
    """
    Equivalent two-layer fully-connected network of width ``m * P`` (``m * P^2`` in 2-D).

    Each hidden neuron's weight vector is its kernel placed at its window
    and zero elsewhere; 2-D images are flattened row-major.
    """
    if not isinstance(spec, (Cnn1d, Cnn2d)):
        raise InvalidInput("to_fully_connected needs a CNN")
    theta = spec.check_theta(theta)
    if spec.sharing:
        spec, theta = unshare(spec, theta)
    p = spec.unpack(theta)
    if isinstance(spec, Cnn1d):
        idx = _conv1d_index(spec.d, spec.s)
        n_hidden = spec.m * spec.positions
        fc = Fc2(spec.d, n_hidden, spec.bias)
        w = np.zeros((spec.m, spec.positions, spec.d))
        rows = np.arange(spec.positions)[:, None]
        w[:, rows, idx] = p["K"]
        b = p["b"].ravel() if spec.bias else None
        return fc, fc.pack(p["a"].ravel(), w.reshape(n_hidden, -1), b)
    idx = _conv1d_index(spec.d, spec.s)
    pos = spec.positions
    n_hidden = spec.m * pos * pos
    fc = Fc2(spec.d * spec.d, n_hidden)
    w = np.zeros((spec.m, pos, pos, spec.d, spec.d))
    ii = np.arange(pos)[:, None, None, None]
    jj = np.arange(pos)[None, :, None, None]
    rr = idx[:, None, :, None]
    cc = idx[None, :, None, :]
    w[:, ii, jj, rr, cc] = p["K"]
    return fc, fc.pack(p["a"].ravel(), w.reshape(n_hidden, -1))


# -- spec strings -----------------------------------------------------------

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(key, value):
    v = value.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise InvalidInput(f"flag {key} expects a boolean, got {value!r}")


def spec_from_config(cfg):
    """Build a spec from a key-value mapping with a ``family`` key."""
    cfg = dict(cfg)
    family = str(cfg.pop("family", "")).strip().lower()
    if family not in FAMILIES:
        raise InvalidInput(f"unknown model family {family!r}; known: {sorted(FAMILIES)}")
    cls = FAMILIES[family]
    kinds = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, value in cfg.items():
        if key not in kinds:
            raise InvalidInput(f"{family} has no field {key!r}")
        kind = kinds[key]
        if key == "widths":
            if isinstance(value, str):
                value = [int(v) for v in value.replace("-", " ").replace("x", " ").split()]
            kwargs[key] = tuple(int(v) for v in value)
        elif kind in (bool, "bool"):
            kwargs[key] = value if isinstance(value, bool) else _parse_bool(key, str(value))
        else:
            try:
                kwargs[key] = int(value)
            except (TypeError, ValueError):
                raise InvalidInput(f"{family}.{key} expects an integer, got {value!r}") from None
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise InvalidInput(f"bad fields for {family}: {exc}") from None


def parse_spec(text):
    """
    Parse ``family:key=val,key=val``.

    Bare keys are boolean flags set to true and a ``no`` prefix sets them
    false, so ``cnn1d:d=5,s=3,m=1,nosharing,bias`` is valid. Deep widths
    are dash-separated: ``deepfc:widths=5-4-1``.
    """
    family, _, rest = text.strip().partition(":")
    cfg = {"family": family}
    flag_names = {f.name for f in fields(FAMILIES.get(family.strip().lower(), ModelSpec))
                  if f.type in (bool, "bool")}
    for item in filter(None, (t.strip() for t in rest.split(","))):
        key, eq, value = item.partition("=")
        key = key.strip()
        if eq:
            cfg[key] = value.strip()
        elif key in flag_names:
            cfg[key] = True
        elif key.startswith("no") and key[2:] in flag_names:
            cfg[key[2:]] = False
        else:
            raise InvalidInput(f"cannot parse {item!r} in model string {text!r}")
    return spec_from_config(cfg)


def format_spec(spec):
    parts = []
    for key, value in asdict(spec).items():
        if isinstance(value, bool):
            parts.append(key if value else f"no{key}")
        elif isinstance(value, tuple):
            parts.append(f"{key}={'-'.join(str(v) for v in value)}")
        else:
            parts.append(f"{key}={value}")
    return spec.family + (":" + ",".join(parts) if parts else "")
