"""
Two-step nilpotent groups G_B = R^p x R^q for an arbitrary bilinear map B.

Group law (h, n) * (h', n') = (h + h', n + n' + B(h, h')). B need not be skew;
only its skew part reaches the Lie algebra. Algebra and group elements share
the GroupElement container; exp and log convert between them explicitly.

All operations accept batched elements: h of shape (p, *batch), n of shape
(q, *batch).
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from . import config
from .constants import RANK_TOLERANCE
from .errors import DimensionMismatch, NonpositiveScale, SkewPartMismatch

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class BilinearMap:
    """B(v, w)^k = sum_ij coeffs[k, i, j] v_i w_j."""
    coeffs: np.ndarray      # (q, p, p)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        if c.ndim != 3 or c.shape[1] != c.shape[2]:
            raise DimensionMismatch(f"bilinear coefficients must be (q, p, p), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, p: int, q: int) -> "BilinearMap":
        return cls(np.zeros((q, p, p)))

    @classmethod
    def from_entries(cls, p: int, q: int, entries: dict) -> "BilinearMap":
        """Build from {(k, i, j): value} with 0-based indices."""
        c = np.zeros((q, p, p))
        for (k, i, j), v in entries.items():
            c[k, i, j] = v
        return cls(c)

    @property
    def p(self) -> int:
        return self.coeffs.shape[1]

    @property
    def q(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, v, w) -> np.ndarray:
        return np.einsum("kij,i...,j...->k...", self.coeffs, v, w)

    def skew_part(self) -> "BilinearMap":
        return BilinearMap(0.5 * (self.coeffs - np.swapaxes(self.coeffs, 1, 2)))

    def symmetric_part(self) -> "BilinearMap":
        return BilinearMap(0.5 * (self.coeffs + np.swapaxes(self.coeffs, 1, 2)))

    def skew_rank(self) -> int:
        """Rank of h -> (w -> B(h, w) - B(w, h)) as a map R^p -> Hom(R^p, R^q)."""
        a = self.coeffs - np.swapaxes(self.coeffs, 1, 2)
        m = np.transpose(a, (1, 0, 2)).reshape(self.p, self.q * self.p)
        if not np.any(m):
            return 0
        return int(np.linalg.matrix_rank(m, tol=RANK_TOLERANCE * max(1.0, np.abs(m).max())))

    def iso_class(self) -> str:
        """Coarse isomorphism hint from the skew part."""
        rank = self.skew_rank()
        if rank == 0:
            return "abelian"
        if self.q == 1 and rank == self.p:
            return "heisenberg-like"
        return "other"

    def to_json(self) -> dict:
        return {"p": self.p, "q": self.q, "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "BilinearMap":
        b = cls(np.asarray(data["coeffs"], dtype=float).reshape(data["q"], data["p"], data["p"]))
        return b


@dataclass(frozen=True, eq=False)
class GroupElement:
    """A point (h, n) of G_B, or an algebra element in the same coordinates."""
    h: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "h", np.asarray(self.h, dtype=float))
        object.__setattr__(self, "n", np.asarray(self.n, dtype=float))

    @classmethod
    def identity(cls, p: int, q: int) -> "GroupElement":
        return cls(np.zeros(p), np.zeros(q))

    @property
    def p(self) -> int:
        return self.h.shape[0]

    @property
    def q(self) -> int:
        return self.n.shape[0]

    def vector(self) -> np.ndarray:
        """(h, n) stacked into one array of shape (p + q, *batch)."""
        return np.concatenate([self.h, self.n], axis=0)

    @classmethod
    def from_vector(cls, v, p: int) -> "GroupElement":
        v = np.asarray(v, dtype=float)
        return cls(v[:p], v[p:])

    def distance(self, other: "GroupElement") -> np.ndarray:
        """Euclidean distance in coordinates (per batch entry)."""
        return np.linalg.norm(self.vector() - other.vector(), axis=0)

    def allclose(self, other: "GroupElement", atol: float = 1e-12) -> bool:
        return bool(np.all(self.distance(other) <= atol))

    def __repr__(self):
        return f"GroupElement(h={self.h.tolist()}, n={self.n.tolist()})"

    def to_json(self) -> dict:
        return {"h": self.h.tolist(), "n": self.n.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "GroupElement":
        return cls(data["h"], data["n"])


def _check(B: BilinearMap, *elems: GroupElement):
    for g in elems:
        if g.p != B.p or g.q != B.q:
            raise DimensionMismatch(
                f"element with (p, q) = ({g.p}, {g.q}) does not fit G_B with ({B.p}, {B.q})")


# --- Group operations ---

def gb_mul(B: BilinearMap, a: GroupElement, b: GroupElement) -> GroupElement:
    _check(B, a, b)
    return GroupElement(a.h + b.h, a.n + b.n + B(a.h, b.h))


def gb_inv(B: BilinearMap, a: GroupElement) -> GroupElement:
    _check(B, a)
    return GroupElement(-a.h, -a.n + B(a.h, a.h))


def gb_commutator(B: BilinearMap, a: GroupElement, b: GroupElement) -> GroupElement:
    """a b a^-1 b^-1 = (0, B(h1, h2) - B(h2, h1))."""
    _check(B, a, b)
    return GroupElement(np.zeros_like(a.h + b.h), B(a.h, b.h) - B(b.h, a.h))


def gb_exp(B: BilinearMap, x: GroupElement) -> GroupElement:
    _check(B, x)
    return GroupElement(x.h, x.n + 0.5 * B(x.h, x.h))


def gb_log(B: BilinearMap, g: GroupElement) -> GroupElement:
    _check(B, g)
    return GroupElement(g.h, g.n - 0.5 * B(g.h, g.h))


def gb_bracket(B: BilinearMap, x: GroupElement, y: GroupElement) -> GroupElement:
    """Lie bracket; depends only on the skew part of B."""
    _check(B, x, y)
    return GroupElement(np.zeros_like(x.h + y.h), B(x.h, y.h) - B(y.h, x.h))


def gb_dilate(g: GroupElement, s: float) -> GroupElement:
    """delta_s(h, n) = (s h, s^2 n) for s > 0."""
    if not s > 0:
        raise NonpositiveScale(f"dilation scale must be positive, got {s}")
    return GroupElement(s * g.h, s * s * g.n)


def signed_dilate(g: GroupElement, t) -> GroupElement:
    """(t h, t^2 n) for any real t, possibly batched along the last axis.

    Not a group automorphism for t < 0; used to sample curves t -> delta_t v
    on both sides of t = 0.
    """
    return GroupElement(g.h * t, g.n * (np.asarray(t) ** 2))


def gb_iso_phi(B: BilinearMap, C: BilinearMap) -> Callable[[GroupElement], GroupElement]:
    """Isomorphism G_C -> G_B for maps with the same skew part.

    phi(h, n) = (h, n + B(h, h)/2 - C(h, h)/2).
    """
    if B.coeffs.shape != C.coeffs.shape:
        raise DimensionMismatch(f"shapes {B.coeffs.shape} and {C.coeffs.shape} differ")
    d = B.coeffs - C.coeffs
    asym = float(np.max(np.abs(d - np.swapaxes(d, 1, 2)))) if d.size else 0.0
    if asym > config.tolerance("skew"):
        raise SkewPartMismatch(f"B - C is not symmetric (max asymmetry {asym:.3g})")

    def phi(g: GroupElement) -> GroupElement:
        _check(C, g)
        return GroupElement(g.h, g.n + 0.5 * B(g.h, g.h) - 0.5 * C(g.h, g.h))

    return phi


# --- Osculating groups ---

@dataclass(frozen=True, eq=False)
class OsculatingGroup:
    """G_B with B the osculating tensor at a base point, in a named H-chart."""
    B: BilinearMap
    base: np.ndarray
    chart_id: str

    @property
    def p(self) -> int:
        return self.B.p

    @property
    def q(self) -> int:
        return self.B.q

    def identity(self) -> GroupElement:
        return GroupElement.identity(self.p, self.q)

    def mul(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return gb_mul(self.B, a, b)

    def inv(self, a: GroupElement) -> GroupElement:
        return gb_inv(self.B, a)

    def commutator(self, a: GroupElement, b: GroupElement) -> GroupElement:
        return gb_commutator(self.B, a, b)

    def exp(self, x: GroupElement) -> GroupElement:
        return gb_exp(self.B, x)

    def log(self, g: GroupElement) -> GroupElement:
        return gb_log(self.B, g)

    def bracket(self, x: GroupElement, y: GroupElement) -> GroupElement:
        return gb_bracket(self.B, x, y)

    def dilate(self, g: GroupElement, s: float) -> GroupElement:
        return gb_dilate(g, s)

    def to_json(self) -> dict:
        return {
            "base": np.asarray(self.base, dtype=float).tolist(),
            "chart_id": self.chart_id,
            "b": self.B.to_json(),
            "skew_rank": self.B.skew_rank(),
            "iso_class": self.B.iso_class(),
        }
