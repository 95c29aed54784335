"""
H-frames, H-charts and the osculating group at a point.

A Geometry wraps a parsed GeometrySpec. H at x is the span of the first p
frame fields at x. Every pointwise computation runs in the affine auto
H-chart at the base point, u = F(m)^-1 (x - m), whose coordinate vectors at m
are exactly the frame.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import config
from .constants import CURVE_VAR
from .errors import (
    DegenerateFrame,
    GeometryError,
    NonSmoothSample,
    NotCentered,
    NotHChartChange,
    NotHCompatible,
)
from .expr import BinOp, CompiledMap, GeometrySpec, Num, load_geometry, parse_expr
from .jets import curve_jet2, map_jet2
from .nilpotent import BilinearMap, GroupElement, OsculatingGroup, gb_bracket, gb_mul
from .numerics import sliding_richardson, solve_batched

log = logging.getLogger(__name__)


def _col(v: np.ndarray, batch_ndim: int) -> np.ndarray:
    """Reshape a vector so it broadcasts against (n, *batch) arrays."""
    return np.asarray(v, dtype=float).reshape((-1,) + (1,) * batch_ndim)


def format_point(m) -> str:
    return ",".join(f"{float(x):g}" for x in np.asarray(m, dtype=float))


# --- Charts and arrows ---

@dataclass(frozen=True, eq=False)
class AffineChart:
    """u = inverse (x - base); coordinate vectors at base are the columns of matrix."""
    base: np.ndarray
    matrix: np.ndarray
    inverse: np.ndarray
    chart_id: str

    def to_chart(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        d = x - _col(self.base, x.ndim - 1)
        return np.einsum("ij,j...->i...", self.inverse, d)

    def from_chart(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return _col(self.base, u.ndim - 1) + np.einsum("ij,j...->i...", self.matrix, u)


@dataclass(frozen=True, eq=False)
class ParabolicArrow:
    """Taylor coordinates (h, n) of a parabolic arrow at base, in chart_id."""
    base: np.ndarray
    h: np.ndarray
    n: np.ndarray
    chart_id: str

    def __post_init__(self):
        for name in ("base", "h", "n"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))

    def element(self) -> GroupElement:
        return GroupElement(self.h, self.n)

    def to_json(self) -> dict:
        return {
            "base": self.base.tolist(),
            "h": self.h.tolist(),
            "n": self.n.tolist(),
            "chart_id": self.chart_id,
        }


@dataclass(frozen=True)
class HChartCheck:
    valid: bool
    residual: float     # worst relative N-component of the first p coordinate vectors
    offset: float       # |chart(point)|

    def __bool__(self) -> bool:
        return self.valid


@dataclass(frozen=True, eq=False)
class TaylorEstimate:
    """Taylor coordinates extracted from sampled curve points."""
    h: np.ndarray
    n: np.ndarray
    normal_velocity: np.ndarray     # N-part of c'(0); zero for curves tangent to H
    spread: float                   # Richardson selection spread, an error estimate
    raw_h: np.ndarray | None = None     # (G, p) unextrapolated first-order estimates per t
    raw_n: np.ndarray | None = None     # (G, q) same for the normal second-order part

    def element(self) -> GroupElement:
        return GroupElement(self.h, self.n)


# --- The geometry ---

class Geometry:
    """Dimensions (n, p, q) and a compiled H-frame."""

    def __init__(self, spec: GeometrySpec):
        self.spec = spec
        self.n = spec.dim
        self.p = spec.h_dim
        self.q = spec.codim
        self.variables = spec.variables
        comps = [c for field in spec.frame for c in field]
        self._frame = CompiledMap(comps, spec.variables, name=f"{spec.name}.frame")

    @classmethod
    def load(cls, path: str) -> "Geometry":
        return cls(load_geometry(path))

    @property
    def name(self) -> str:
        return self.spec.name

    def __repr__(self):
        return f"Geometry({self.name!r}, n={self.n}, p={self.p})"

    # --- Frame evaluation ---

    def frame_matrix(self, x) -> np.ndarray:
        """F[a, f] = X_f^a(x); shape (n, n, *batch)."""
        x = np.asarray(x, dtype=float)
        vals = self._frame.evaluate(x).reshape((self.n, self.n) + x.shape[1:])
        return np.swapaxes(vals, 0, 1)

    def frame_jet(self, x) -> tuple[np.ndarray, np.ndarray]:
        """F and dF[a, f, l] = d_l X_f^a at x."""
        x = np.asarray(x, dtype=float)
        value, jac, _ = self._frame.jet2(x)
        batch = x.shape[1:]
        F = np.swapaxes(value.reshape((self.n, self.n) + batch), 0, 1)
        dF = np.swapaxes(jac.reshape((self.n, self.n, self.n) + batch), 0, 1)
        return F, dF

    def check_frame(self, m) -> np.ndarray:
        """Return F(m), raising DegenerateFrame if the frame is near-dependent."""
        F = self.frame_matrix(m)
        if not np.all(np.isfinite(F)):
            raise DegenerateFrame(f"{self.name}: frame not finite at {format_point(m)}")
        cond = np.linalg.cond(F.T @ F)
        if not np.isfinite(cond) or cond > config.tolerance("degenerate_condition"):
            raise DegenerateFrame(
                f"{self.name}: frame Gram condition {cond:.3g} at {format_point(m)}")
        return F

    def frame_coefficients(self, x, v) -> np.ndarray:
        """Coefficients c with v = sum_f c_f X_f(x)."""
        return solve_batched(self.frame_matrix(x), np.asarray(v, dtype=float))

    def h_residual(self, x, v) -> np.ndarray:
        """Relative N-part of v in the frame at x (0 for v in H_x)."""
        c = self.frame_coefficients(x, v)
        total = np.linalg.norm(c, axis=0)
        normal = np.linalg.norm(c[self.p:], axis=0)
        return np.where(total > 0, normal / np.where(total > 0, total, 1.0), 0.0)

    def auto_chart(self, m) -> AffineChart:
        m = np.asarray(m, dtype=float)
        F = self.check_frame(m)
        return AffineChart(m, F, np.linalg.inv(F), f"auto@{format_point(m)}")

    # --- Named data ---

    def field_index(self, name) -> int:
        if isinstance(name, (int, np.integer)):
            return int(name)
        try:
            return self.spec.frame_names.index(name)
        except ValueError:
            raise GeometryError(f"{self.name}: no frame field {name!r}") from None

    def frame_field(self, coeffs, name: str = ""):
        """The constant-coefficient field sum_f coeffs[f] X_f (short vectors pad with 0)."""
        from .flows import VectorField
        a = np.zeros(self.n)
        c = np.asarray(coeffs, dtype=float)
        a[:len(c)] = c
        comps = []
        for l in range(self.n):
            terms = []
            for f in range(self.n):
                if a[f] == 0.0:
                    continue
                e = self.spec.frame[f][l]
                terms.append(e if a[f] == 1.0 else BinOp("*", Num(float(a[f])), e))
            comp = terms[0] if terms else Num(0.0)
            for t in terms[1:]:
                comp = BinOp("+", comp, t)
            comps.append(comp)
        return VectorField(comps, self.variables, name=name or f"{self.name}.field")

    def field(self, name):
        """One frame field as a VectorField."""
        f = self.field_index(name)
        e = np.zeros(self.n)
        e[f] = 1.0
        return self.frame_field(e, name=self.spec.frame_names[f])

    def curve(self, name: str) -> CompiledMap:
        if name not in self.spec.curves:
            raise GeometryError(f"{self.name}: no curve {name!r}")
        return CompiledMap(self.spec.curves[name], (CURVE_VAR,), name=name)

    def chart(self, name: str) -> CompiledMap:
        if name not in self.spec.charts:
            raise GeometryError(f"{self.name}: no chart {name!r}")
        return CompiledMap(self.spec.charts[name], self.variables, name=name)


# --- H-charts ---

def _coordinate_vector_residual(geom: Geometry, point, vectors: np.ndarray) -> float:
    """Worst relative N-part among the columns of vectors (n, k)."""
    geom.check_frame(point)
    if vectors.shape[1] == 0:
        return 0.0
    res = geom.h_residual(np.repeat(np.asarray(point, float)[:, None], vectors.shape[1], axis=1),
                          vectors)
    return float(np.max(res))


def validate_h_chart(geom: Geometry, chart_map, point) -> HChartCheck:
    """Check that a chart centered at point has its first p coordinate vectors in H."""
    point = np.asarray(point, dtype=float)
    value, jac, _ = map_jet2(chart_map, point)
    offset = float(np.linalg.norm(value))
    if offset > config.tolerance("centered"):
        raise NotCentered(f"chart maps {format_point(point)} to {value.tolist()}, not 0")
    if np.linalg.cond(jac) > 1.0 / np.finfo(float).eps:
        raise DegenerateFrame(f"chart differential is singular at {format_point(point)}")
    coord_vectors = np.linalg.inv(jac)
    residual = _coordinate_vector_residual(geom, point, coord_vectors[:, :geom.p])
    return HChartCheck(residual <= config.tolerance("h_chart"), residual, offset)


def check_h_parametrization(geom: Geometry, m, value, jac) -> HChartCheck:
    """Same check for a chart given by its inverse E: u -> x with E(0) = m."""
    m = np.asarray(m, dtype=float)
    offset = float(np.linalg.norm(np.asarray(value, dtype=float) - m))
    if offset > config.tolerance("centered"):
        raise NotCentered(f"chart inverse sends 0 to {np.asarray(value).tolist()}, not {m.tolist()}")
    residual = _coordinate_vector_residual(geom, m, np.asarray(jac)[:, :geom.p])
    return HChartCheck(residual <= config.tolerance("h_chart"), residual, offset)


# --- The osculating structure ---

def osculating_b(geom: Geometry, point) -> BilinearMap:
    """b_ij^k = [F^-1 (DX_i . X_j)]_(p+k) at point, i, j < p."""
    m = np.asarray(point, dtype=float)
    geom.check_frame(m)
    F, dF = geom.frame_jet(m)
    p, n = geom.p, geom.n
    D = np.einsum("ail,lj->aij", dF[:, :p, :], F[:, :p])
    G = np.linalg.solve(F, D.reshape(n, p * p)).reshape(n, p, p)
    b = BilinearMap(G[p:])
    log.debug("b at %s on %s: %s", format_point(m), geom.name, b.coeffs.tolist())
    return b


def osculating_group(geom: Geometry, point) -> OsculatingGroup:
    m = np.asarray(point, dtype=float)
    return OsculatingGroup(osculating_b(geom, m), m, f"auto@{format_point(m)}")


def osculating_bracket(geom: Geometry, point, v, w) -> np.ndarray:
    """Central part of the osculating bracket of (v|0) and (w|0)."""
    B = osculating_b(geom, point)
    zero = np.zeros(geom.q)
    return gb_bracket(B, GroupElement(v, zero), GroupElement(w, zero)).n


# --- Taylor coordinate changes ---

def taylor_change_from_jets(jac: np.ndarray, hess: np.ndarray, arrow: GroupElement) -> GroupElement:
    """Apply h' = A h, n' = D n + H^N(h, h)/2 given the chart-change jets at 0."""
    p = arrow.p
    h2 = np.einsum("ij,j...->i...", jac[:p, :p], arrow.h)
    n2 = (np.einsum("ij,j...->i...", jac[p:, p:], arrow.n)
          + 0.5 * np.einsum("kij,i...,j...->k...", hess[p:, :p, :p], arrow.h, arrow.h))
    return GroupElement(h2, n2)


def taylor_change_inverse_from_jets(jac: np.ndarray, hess: np.ndarray,
                                    arrow: GroupElement) -> GroupElement:
    """Invert taylor_change_from_jets: recover (h, n) from (h', n')."""
    p = arrow.p
    h = np.linalg.solve(jac[:p, :p], arrow.h)
    rhs = arrow.n - 0.5 * np.einsum("kij,i...,j...->k...", hess[p:, :p, :p], h, h)
    return GroupElement(h, np.linalg.solve(jac[p:, p:], rhs))


def _chart_change_jets(psi, arrow: GroupElement, at=None):
    n = arrow.p + arrow.q
    at = np.zeros(n) if at is None else np.asarray(at, dtype=float)
    value, jac, hess = map_jet2(psi, at)
    if jac.shape != (n, n):
        raise NotHChartChange(f"chart change must map R^{n} to R^{n}, got Jacobian {jac.shape}")
    if np.linalg.norm(value) > config.tolerance("centered"):
        raise NotHChartChange(f"chart change moves the base point to {value.tolist()}")
    p = arrow.p
    leak = float(np.max(np.abs(jac[p:, :p]))) if p else 0.0
    if leak > config.tolerance("h_chart") * max(1.0, float(np.max(np.abs(jac)))):
        raise NotHChartChange(f"chart change does not preserve H (normal leak {leak:.3g})")
    if abs(np.linalg.det(jac)) < np.finfo(float).eps:
        raise NotHChartChange("chart change is singular")
    return jac, hess


def taylor_change(psi, arrow: GroupElement, at=None) -> GroupElement:
    """Taylor coordinates after an H-chart change psi (centered at ``at``, default 0)."""
    jac, hess = _chart_change_jets(psi, arrow, at)
    return taylor_change_from_jets(jac, hess, arrow)


def taylor_change_inverse(psi, arrow: GroupElement, at=None) -> GroupElement:
    """Taylor coordinates before the chart change psi."""
    jac, hess = _chart_change_jets(psi, arrow, at)
    return taylor_change_inverse_from_jets(jac, hess, arrow)


# --- Parabolic pushforward ---

def is_h_compatible(phi, source: Geometry, target: Geometry, m) -> tuple[bool, float]:
    """Whether Dphi(m) maps H_m into H'_phi(m); returns (ok, worst residual)."""
    m = np.asarray(m, dtype=float)
    value, jac, _ = map_jet2(phi, m)
    F = source.check_frame(m)
    images = jac @ F[:, :source.p]
    residual = _coordinate_vector_residual(target, value, images)
    return residual <= config.tolerance("h_chart"), residual


def parabolic_pushforward(phi, arrow: ParabolicArrow, source: Geometry,
                          target: Geometry) -> ParabolicArrow:
    """T_H phi: push the model curve c(t) = (t h, t^2 n) through phi.

    ``arrow`` is read in the auto H-chart of ``source`` at its base; the result
    is given in the auto H-chart of ``target`` at phi(base).
    """
    m = arrow.base
    ok, residual = is_h_compatible(phi, source, target, m)
    if not ok:
        raise NotHCompatible(f"Dphi does not map H into H' at {format_point(m)} "
                             f"(residual {residual:.3g})")
    src = source.auto_chart(m)
    m2 = map_jet2(phi, m)[0]
    dst = target.auto_chart(m2)
    h, n_ = arrow.h, arrow.n

    def pushed(t):
        u = [t * hi for hi in h] + [t * t * ni for ni in n_]
        x = [src.base[a] + sum(src.matrix[a, b] * u[b] for b in range(source.n))
             for a in range(source.n)]
        y = phi(*x)
        return [sum(dst.inverse[a, b] * (y[b] - dst.base[b]) for b in range(target.n))
                for a in range(target.n)]

    pushed.supports_jets = True
    _, d1, d2 = curve_jet2(pushed, 0.0)
    return ParabolicArrow(m2, d1[:target.p], 0.5 * d2[target.p:], dst.chart_id)


# --- Sampled Taylor extraction ---

def taylor_from_samples(chart: AffineChart, p: int, ts, plus, minus, center) -> TaylorEstimate:
    """Taylor coordinates of a curve from samples at +t_k, -t_k and 0.

    Central combinations (u(t) - u(-t))/2t and (u(t) + u(-t) - 2u(0))/2t^2 have
    even error expansions, so the dyadic grid is extrapolated with p = 2.
    """
    u0 = chart.to_chart(center)
    d1, d2 = [], []
    for t, xp, xm in zip(ts, plus, minus):
        up = chart.to_chart(xp)
        um = chart.to_chart(xm)
        d1.append((up - um) / (2.0 * t))
        d2.append((up + um - 2.0 * u0) / (2.0 * t * t))
    depth = config.richardson_depth()
    v1, s1 = sliding_richardson(d1, 2, depth)
    v2, s2 = sliding_richardson(d2, 2, depth)
    spread = max(s1, s2)
    scale = max(1.0, float(np.max(np.abs(v1))), float(np.max(np.abs(v2))))
    if not np.isfinite(spread) or spread > 1e-3 * scale:
        raise NonSmoothSample(f"Taylor extraction does not settle (spread {spread:.3g})")
    return TaylorEstimate(h=v1[:p], n=v2[p:], normal_velocity=v1[p:], spread=spread,
                          raw_h=np.array([d[:p] for d in d1]), raw_n=np.array([d[p:] for d in d2]))


# --- Reports and helpers ---

def describe(geom: Geometry, point) -> dict:
    """JSON-ready description of the osculating group at point."""
    m = np.asarray(point, dtype=float)
    group = osculating_group(geom, m)
    B = group.B
    names = geom.spec.frame_names[:geom.p]
    zero = np.zeros(geom.q)
    table = {}
    for i in range(geom.p):
        for j in range(i + 1, geom.p):
            e_i, e_j = np.eye(geom.p)[i], np.eye(geom.p)[j]
            br = gb_bracket(B, GroupElement(e_i, zero), GroupElement(e_j, zero)).n
            table[f"[{names[i]},{names[j]}]"] = br.tolist()
    samples = []
    for i in range(geom.p):
        for j in range(geom.p):
            a = GroupElement(np.eye(geom.p)[i], zero)
            b = GroupElement(np.eye(geom.p)[j], zero)
            samples.append({"a": a.to_json(), "b": b.to_json(), "product": gb_mul(B, a, b).to_json()})
    return {
        "geometry": geom.name,
        "point": m.tolist(),
        "chart_id": group.chart_id,
        "p": geom.p,
        "q": geom.q,
        "b": B.coeffs.tolist(),
        "skew_rank": B.skew_rank(),
        "iso_class": B.iso_class(),
        "bracket_table": table,
        "group_law_samples": samples,
    }


def rescaled_geometry(geom: Geometry, factor: str, point) -> Geometry:
    """Multiply every frame field by a smooth factor equal to 1 at point."""
    f = parse_expr(factor, geom.variables)
    value = CompiledMap([f], geom.variables).evaluate(np.asarray(point, dtype=float))[0]
    if abs(float(value) - 1.0) > config.tolerance("centered"):
        raise GeometryError(f"rescaling factor is {float(value):g} at the point, not 1")
    frame = tuple(tuple(BinOp("*", f, c) for c in field) for field in geom.spec.frame)
    return Geometry(replace(geom.spec, name=f"{geom.name}*({factor})", frame=frame))
