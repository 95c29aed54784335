"""
Second-order forward-mode differentiation.

A Jet2 carries a value together with its gradient and Hessian with respect to
a fixed set of seed variables. Values may be batched: with value shape B the
gradient is (s, *B) and the Hessian (s, s, *B), so one pass differentiates a
whole grid of points.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import config
from .constants import DIVISION_GUARD
from .errors import DivisionByZero, NonSmoothSample
from .numerics import richardson_diagonal

log = logging.getLogger(__name__)


def _outer_sym(a, b):
    """a⊗b + b⊗a over the two leading axes; symmetric bit-for-bit."""
    o = a[:, None] * b[None, :]
    return o + np.swapaxes(o, 0, 1)


def _guard(den):
    if np.any(np.abs(den) < DIVISION_GUARD):
        raise DivisionByZero("division by zero")


class Jet2:
    """Truncated second-order Taylor number."""

    __slots__ = ("value", "grad", "hess")
    # numpy must hand mixed operations back to Jet2 instead of broadcasting
    __array_ufunc__ = None

    def __init__(self, value, grad, hess):
        self.value = value
        self.grad = grad
        self.hess = hess

    @property
    def nvars(self) -> int:
        return self.grad.shape[0]

    def __repr__(self):
        return f"Jet2(value={self.value!r}, grad={self.grad!r}, hess={self.hess!r})"

    # --- Arithmetic ---

    def __neg__(self):
        return Jet2(-self.value, -self.grad, -self.hess)

    def __pos__(self):
        return self

    def __add__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value + other.value, self.grad + other.grad, self.hess + other.hess)
        return Jet2(self.value + other, self.grad, self.hess)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Jet2):
            return Jet2(self.value - other.value, self.grad - other.grad, self.hess - other.hess)
        return Jet2(self.value - other, self.grad, self.hess)

    def __rsub__(self, other):
        return Jet2(other - self.value, -self.grad, -self.hess)

    def __mul__(self, other):
        if isinstance(other, Jet2):
            a, b = self, other
            return Jet2(
                a.value * b.value,
                a.grad * b.value + b.grad * a.value,
                a.hess * b.value + b.hess * a.value + _outer_sym(a.grad, b.grad),
            )
        return Jet2(self.value * other, self.grad * other, self.hess * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet2):
            _guard(other.value)
            q = self.value / other.value
            g = (self.grad - q * other.grad) / other.value
            h = (self.hess - q * other.hess - _outer_sym(g, other.grad)) / other.value
            return Jet2(q, g, h)
        _guard(other)
        return Jet2(self.value / other, self.grad / other, self.hess / other)

    def __rtruediv__(self, other):
        _guard(self.value)
        q = other / self.value
        g = (-q * self.grad) / self.value
        h = (-q * self.hess - _outer_sym(g, self.grad)) / self.value
        return Jet2(q, g, h)

    def __pow__(self, k):
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
            raise TypeError("Jet2 powers must be integers")
        k = int(k)
        if k == 0:
            return Jet2(np.ones_like(self.value, dtype=float) if np.ndim(self.value) else 1.0,
                        np.zeros_like(self.grad), np.zeros_like(self.hess))
        if k == 1:
            return self
        v = self.value
        if k < 0:
            _guard(v)
        if k == 2:
            return self._unary(v * v, 2.0 * v, 2.0)
        return self._unary(v ** k, k * v ** (k - 1), k * (k - 1) * v ** (k - 2))

    # --- Transcendental functions ---

    def _unary(self, f0, f1, f2):
        g = self.grad
        return Jet2(f0, f1 * g, f1 * self.hess + f2 * (g[:, None] * g[None, :]))

    def sin(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._unary(s, c, -s)

    def cos(self):
        s, c = np.sin(self.value), np.cos(self.value)
        return self._unary(c, -s, -c)

    def exp(self):
        e = np.exp(self.value)
        return self._unary(e, e, e)


# --- Dispatchers shared by compiled expressions ---

def sin(x):
    return x.sin() if isinstance(x, Jet2) else np.sin(x)


def cos(x):
    return x.cos() if isinstance(x, Jet2) else np.cos(x)


def exp(x):
    return x.exp() if isinstance(x, Jet2) else np.exp(x)


def divide(a, b):
    if isinstance(a, Jet2) or isinstance(b, Jet2):
        return a / b
    _guard(b)
    return a / b


def power(x, k: int):
    if isinstance(x, Jet2):
        return x ** k
    if k < 0:
        _guard(x)
    if k == 2:
        return x * x
    return x ** k


# --- Seeding and extraction ---

def seed(values) -> list[Jet2]:
    """Seed one jet per input: value values[i], gradient e_i, zero Hessian.

    ``values`` may carry trailing batch axes, shape (s, *batch).
    """
    vals = np.asarray(values, dtype=float)
    s = vals.shape[0]
    batch = vals.shape[1:]
    jets = []
    for i in range(s):
        grad = np.zeros((s,) + batch)
        grad[i] = 1.0
        value = vals[i] if batch else float(vals[i])
        jets.append(Jet2(value, grad, np.zeros((s, s) + batch)))
    return jets


def jet_arith(a, b, op: str):
    """Apply a named operation to jets (b is ignored by unary operations)."""
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        return divide(a, b)
    if op == "pow_int":
        return power(a, int(b))
    if op == "sin":
        return sin(a)
    if op == "cos":
        return cos(a)
    if op == "exp_fn":
        return exp(a)
    raise ValueError(f"unknown jet operation {op!r}")


def _unpack(out, nvars: int, batch: tuple):
    if isinstance(out, Jet2):
        return (np.broadcast_to(out.value, batch),
                np.broadcast_to(out.grad, (nvars,) + batch),
                np.broadcast_to(out.hess, (nvars, nvars) + batch))
    return (np.broadcast_to(np.asarray(out, dtype=float), batch),
            np.zeros((nvars,) + batch),
            np.zeros((nvars, nvars) + batch))


def map_jet2(f, point):
    """Value, Jacobian and Hessian of f: R^n -> R^m at ``point``.

    ``f`` takes n positional scalars and returns m components. With point of
    shape (n, *batch) the results are (m, *batch), (m, n, *batch) and
    (m, n, n, *batch).
    """
    pt = np.asarray(point, dtype=float)
    n = pt.shape[0]
    batch = pt.shape[1:]
    outs = f(*seed(pt))
    parts = [_unpack(o, n, batch) for o in outs]
    value = np.stack([v for v, _, _ in parts])
    jac = np.stack([g for _, g, _ in parts])
    hess = np.stack([h for _, _, h in parts])
    return value, jac, hess


# --- Curves ---

@dataclass(frozen=True, eq=False)
class CurveJet:
    """c(t0), c'(t0), c''(t0) plus how they were obtained."""
    value: np.ndarray
    first: np.ndarray
    second: np.ndarray
    method: str                 # "jet" or "richardson"
    order: int | None = None    # truncation order in h of the extrapolated estimate
    residual: float = 0.0

    def __iter__(self):
        return iter((self.value, self.first, self.second))


def curve_jet2(c, t0: float = 0.0, h0: float | None = None, levels: int | None = None) -> CurveJet:
    """Second-order expansion of a curve at t0.

    Curves compiled from expressions (``supports_jets``) are differentiated
    exactly. Any other callable t -> R^n is sampled with central differences
    at steps h0, h0/2, ... and Richardson-extrapolated.
    """
    if getattr(c, "supports_jets", False):
        (t,) = seed([t0])
        parts = [_unpack(o, 1, ()) for o in c(t)]
        return CurveJet(
            value=np.array([float(v) for v, _, _ in parts]),
            first=np.array([float(g[0]) for _, g, _ in parts]),
            second=np.array([float(h[0, 0]) for _, _, h in parts]),
            method="jet",
        )

    h0 = config.richardson_h0() if h0 is None else h0
    levels = config.richardson_levels() if levels is None else levels
    steps = [h0 / 2 ** k for k in range(levels)]

    c0 = np.atleast_1d(np.asarray(c(t0), dtype=float))
    scale = max(1.0, float(np.max(np.abs(c0))))
    d1, d2 = [], []
    for h in steps:
        cp = np.atleast_1d(np.asarray(c(t0 + h), dtype=float))
        cm = np.atleast_1d(np.asarray(c(t0 - h), dtype=float))
        scale = max(scale, float(np.max(np.abs(cp))), float(np.max(np.abs(cm))))
        d1.append((cp - cm) / (2.0 * h))
        d2.append((cp - 2.0 * c0 + cm) / (h * h))

    diag1 = richardson_diagonal(d1, p=2)
    diag2 = richardson_diagonal(d2, p=2)
    residuals = [max(float(np.max(np.abs(diag1[k] - diag1[k - 1]))),
                     float(np.max(np.abs(diag2[k] - diag2[k - 1]))))
                 for k in range(1, levels)]

    # rounding in the second difference grows like eps/h^2
    floor = 1e3 * np.finfo(float).eps * scale / steps[-1] ** 2
    if len(residuals) >= 2 and residuals[-1] > floor and residuals[-1] >= residuals[-2]:
        raise NonSmoothSample(
            f"Richardson residuals do not contract at t0={t0:g}: "
            + ", ".join(f"{r:.3g}" for r in residuals))
    log.debug("curve_jet2 black-box at t0=%g: residuals %s", t0, residuals)

    return CurveJet(
        value=c0,
        first=np.asarray(diag1[-1]),
        second=np.asarray(diag2[-1]),
        method="richardson",
        order=2 * levels,
        residual=residuals[-1],
    )
