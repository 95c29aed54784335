"""
H-adapted exponential maps.

A handle evaluates exp_m on parabolic arrows given as Taylor coordinates
(h, n) in the auto H-chart at m. Three constructions are provided: frame
flows (Folland-Stein), geodesics of an H-preserving connection, and smooth
families of H-charts. verify_h_adapted measures whether t -> exp_m(delta_t v)
really represents v.
"""

import logging

import numpy as np

from . import config
from .constants import CHART_ARG_PREFIX, SAMPLE_RADIUS_FRACTION
from .errors import (
    DimensionMismatch,
    DomainError,
    GeodesicBlowup,
    InvalidHChartFamily,
    NotCentered,
    NotHPreserving,
    SchemaError,
)
from .expr import CompiledMap, Num, format_expr, parse_vector
from .flows import FrameCombination, broadcast_points, integrate_flow, rk4
from .geometry import (
    Geometry,
    ParabolicArrow,
    check_h_parametrization,
    format_point,
    osculating_b,
    taylor_change_inverse_from_jets,
    taylor_from_samples,
)
from .jets import map_jet2
from .nilpotent import GroupElement, gb_log, signed_dilate
from .numerics import fit_loglog_slope, inv_batched
from .reports import ProbeReport

log = logging.getLogger(__name__)


# --- Connections ---

class Connection:
    """Christoffel symbols Gamma[k, i, j](x) in the geometry's coordinates."""

    def __init__(self, geom: Geometry, kind: str, table: dict | None = None):
        self.geom = geom
        self.kind = kind
        self._table = None
        if kind == "table":
            n = geom.n
            entries = table or {}
            comps = [entries.get((k, i, j), Num(0.0))
                     for k in range(n) for i in range(n) for j in range(n)]
            self._table = CompiledMap(comps, geom.variables, name=f"{geom.name}.gamma")
        elif kind not in ("flat", "frame-parallel"):
            raise SchemaError(f"unknown connection kind {kind!r}")

    @classmethod
    def from_geometry(cls, geom: Geometry, kind: str | None = None) -> "Connection":
        """The connection declared in the geometry file, else frame-parallel."""
        kind = kind or geom.spec.connection_kind or "frame-parallel"
        table = geom.spec.christoffel if kind == "table" else None
        return cls(geom, kind, table)

    def __repr__(self):
        return f"Connection({self.geom.name}, {self.kind})"

    def christoffel(self, x) -> np.ndarray:
        """Gamma of shape (n, n, n, *batch)."""
        x = np.asarray(x, dtype=float)
        n = self.geom.n
        batch = x.shape[1:]
        if self.kind == "flat":
            return np.zeros((n, n, n) + batch)
        if self.kind == "table":
            return self._table.evaluate(x).reshape((n, n, n) + batch)
        # every frame field parallel: Gamma_i = -(d_i F) F^-1
        F, dF = self.geom.frame_jet(x)
        return -np.einsum("kfi...,fj...->kij...", dF, inv_batched(F))

    def acceleration(self, x, w) -> np.ndarray:
        """-Gamma(x)(w, w), the geodesic right-hand side."""
        return -np.einsum("kij...,i...,j...->k...", self.christoffel(x), w, w)


class ConnectionCheck:
    def __init__(self, preserves: bool, residual: float, worst_point):
        self.preserves = preserves
        self.residual = residual
        self.worst_point = worst_point

    def __bool__(self) -> bool:
        return self.preserves

    def to_json(self) -> dict:
        return {"preserves_h": self.preserves, "residual": self.residual,
                "worst_point": np.asarray(self.worst_point).tolist()}


def connection_preserves_h(geom: Geometry, conn: Connection, points) -> ConnectionCheck:
    """Whether nabla_Y X stays in H for the first p frame fields X, at every point.

    points has shape (n, K) or (n,).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    F, dF = geom.frame_jet(pts)
    gamma = conn.christoffel(pts)
    p = geom.p
    # (nabla_i X_a)^k = d_i X_a^k + Gamma^k_ij X_a^j
    cov = dF[:, :p, :] + np.einsum("kij...,ja...->kai...", gamma, F[:, :p])
    coeffs = np.einsum("fk...,kai...->fai...", inv_batched(F), cov)
    normal = np.abs(coeffs[p:]).reshape(-1, pts.shape[1]).max(axis=0)
    worst = int(np.argmax(normal))
    residual = float(normal[worst])
    ok = residual <= config.tolerance("generator_in_h")
    log.debug("%s preserves H on %d points: %s (residual %.3g)", conn, pts.shape[1], ok, residual)
    return ConnectionCheck(ok, residual, pts[:, worst])


# --- Handles ---

class ExpMapHandle:
    """exp_m on arrows (h, n), batched along trailing axes."""

    kind = ""

    def __init__(self, geom: Geometry, name: str = ""):
        self.geom = geom
        self.name = name or self.kind

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r} on {self.geom.name})"

    def evaluate(self, m, h, n) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        h = np.asarray(h, dtype=float)
        n = np.asarray(n, dtype=float)
        if m.shape != (self.geom.n,) or h.shape[:1] != (self.geom.p,) or n.shape[:1] != (self.geom.q,):
            raise DimensionMismatch(
                f"{self.name}: point {m.shape}, arrow ({h.shape}, {n.shape}) do not fit "
                f"(n, p, q) = ({self.geom.n}, {self.geom.p}, {self.geom.q})")
        size = float(np.max(np.sqrt(np.sum(h ** 2, axis=0) + np.sum(n ** 2, axis=0))))
        radius = config.domain_radius()
        if size > radius:
            raise DomainError(f"{self.name}: arrow of size {size:.3g} outside the domain box {radius:g}")
        return self._evaluate(m, h, n)

    def evaluate_arrow(self, arrow: ParabolicArrow) -> np.ndarray:
        return self.evaluate(arrow.base, arrow.h, arrow.n)

    def _evaluate(self, m, h, n) -> np.ndarray:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"name": self.name, "kind": self.kind}


def _log_coefficients(geom: Geometry, m, h, n) -> np.ndarray:
    """Frame coefficients (h, n - b(h, h)/2) of the logarithm of the arrow."""
    v = gb_log(osculating_b(geom, m), GroupElement(h, n))
    return np.concatenate([v.h, v.n], axis=0)


class FollandSteinHandle(ExpMapHandle):
    """exp_m(v) = time-1 flow of sum v_a X_a with v = log(arrow)."""

    kind = "frame-flow"

    def _evaluate(self, m, h, n):
        coeffs = _log_coefficients(self.geom, m, h, n)
        return integrate_flow(FrameCombination(self.geom, coeffs), m, 1.0)


class ConnectionHandle(ExpMapHandle):
    """Geodesic exponential with initial velocity F(m) (h, log n).

    The splitting N -> TM is the span of the last q frame fields.
    """

    kind = "connection"

    def __init__(self, geom: Geometry, connection: Connection, name: str = ""):
        super().__init__(geom, name)
        self.connection = connection
        self._checked = set()

    def ensure_preserves_h(self, m):
        key = tuple(np.asarray(m, dtype=float).tolist())
        if key in self._checked:
            return
        check = connection_preserves_h(self.geom, self.connection, m)
        if not check:
            raise NotHPreserving(f"{self.connection} does not preserve H at {format_point(m)} "
                                 f"(residual {check.residual:.3g})")
        self._checked.add(key)

    def _evaluate(self, m, h, n):
        self.ensure_preserves_h(m)
        geom = self.geom
        coeffs = _log_coefficients(geom, m, h, n)
        batch = coeffs.shape[1:]
        w0 = np.einsum("af,f...->a...", geom.frame_matrix(m), coeffs)
        state = np.concatenate([broadcast_points(m, batch), w0], axis=0)
        limit = config.blowup_limit()
        steps = config.flow_steps()
        nn = geom.n

        def rhs(y, s):
            return np.concatenate([y[nn:], self.connection.acceleration(y[:nn], y[nn:])], axis=0)

        def guard(k, y):
            if not np.all(np.isfinite(y)) or np.max(np.abs(y)) > limit:
                raise GeodesicBlowup(f"{self.name}: geodesic from {format_point(m)} "
                                     f"left |state| <= {limit:g} at step {k + 1}")

        return rk4(rhs, state, 0.0, 1.0 / steps, steps, on_step=guard)[:nn]

    def to_json(self) -> dict:
        return {**super().to_json(), "connection": self.connection.kind}


class ChartFamilyHandle(ExpMapHandle):
    """exp_m = E_m o F_m^-1 for a family of chart inverses E_m(u) with E_m(0) = m.

    With taylor_corrected the arrow is first re-expressed in E_m's own Taylor
    coordinates; without it (h, n) are fed to E_m directly, which is an
    exponential map but generally not H-adapted.
    """

    kind = "chart-family"

    def __init__(self, geom: Geometry, family: CompiledMap | None = None,
                 taylor_corrected: bool = True, name: str = ""):
        super().__init__(geom, name)
        self.family = family
        self.taylor_corrected = taylor_corrected
        self._jets = {}

    def _apply(self, m, u) -> np.ndarray:
        if self.family is None:
            return broadcast_points(m, u.shape[1:]) + np.einsum(
                "af,f...->a...", self.geom.frame_matrix(m), u)
        outs = self.family(*u, *m)
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), u.shape[1:]) for o in outs])

    def chart_jets(self, m):
        """Jacobian and Hessian at u = 0 of the chart change E_m -> auto chart."""
        key = tuple(np.asarray(m, dtype=float).tolist())
        if key in self._jets:
            return self._jets[key]
        geom = self.geom
        F = geom.check_frame(m)
        if self.family is None:
            value, jac, hess = m, F, np.zeros((geom.n,) * 3)
        else:
            value, jac, hess = map_jet2(lambda *u: self.family(*u, *m), np.zeros(geom.n))
        try:
            check = check_h_parametrization(geom, m, value, jac)
        except NotCentered as e:
            raise InvalidHChartFamily(f"{self.name}: {e}") from e
        if not check:
            raise InvalidHChartFamily(
                f"{self.name}: E_m is not an H-chart at {format_point(m)} "
                f"(residual {check.residual:.3g})")
        Finv = np.linalg.inv(F)
        jets = (Finv @ jac, np.einsum("ka,abc->kbc", Finv, hess))
        self._jets[key] = jets
        return jets

    def validate(self, points):
        """Check E_m at every column of points (n, K)."""
        pts = np.asarray(points, dtype=float)
        for col in (pts.T if pts.ndim == 2 else [pts]):
            self.chart_jets(col)

    def _evaluate(self, m, h, n):
        jac, hess = self.chart_jets(m)
        if self.taylor_corrected:
            own = taylor_change_inverse_from_jets(jac, hess, GroupElement(h, n))
            u = own.vector()
        else:
            u = np.concatenate([h, n], axis=0)
        return self._apply(m, u)

    def to_json(self) -> dict:
        return {**super().to_json(),
                "family": "auto" if self.family is None else ", ".join(map(format_expr, self.family.exprs)),
                "taylor_corrected": self.taylor_corrected}


# --- Constructors ---

def exp_folland_stein(geom: Geometry, name: str = "fs") -> FollandSteinHandle:
    return FollandSteinHandle(geom, name)


def exp_from_connection(geom: Geometry, connection: Connection | None = None,
                        points=None, name: str = "conn") -> ConnectionHandle:
    """Geodesic handle; the connection is checked at points now and at every base later."""
    handle = ConnectionHandle(geom, connection or Connection.from_geometry(geom), name)
    if points is not None:
        pts = np.asarray(points, dtype=float)
        for col in (pts.T if pts.ndim == 2 else [pts]):
            handle.ensure_preserves_h(col)
    return handle


def chart_family_variables(geom: Geometry) -> tuple[str, ...]:
    args = tuple(f"{CHART_ARG_PREFIX}{i + 1}" for i in range(geom.n))
    clash = set(args) & set(geom.variables)
    if clash:
        raise SchemaError(f"{geom.name}: variables {sorted(clash)} clash with chart arguments")
    return args


def exp_from_chart_family(geom: Geometry, family: str | CompiledMap | None = None,
                          taylor_corrected: bool = True, points=None,
                          name: str = "chart") -> ChartFamilyHandle:
    """Chart-family handle; family None or "auto" is E_m(u) = m + F(m) u.

    A string family is a vector of expressions over u1..un and the geometry
    variables (the base point).
    """
    if isinstance(family, str):
        if family.strip() == "auto":
            family = None
        else:
            args = chart_family_variables(geom) + geom.variables
            exprs = parse_vector(family, args)
            if len(exprs) != geom.n:
                raise DimensionMismatch(f"chart family has {len(exprs)} components, expected {geom.n}")
            family = CompiledMap(exprs, args, name=name)
    handle = ChartFamilyHandle(geom, family, taylor_corrected, name)
    if points is not None:
        handle.validate(points)
    return handle


# --- Verification ---

def default_samples(geom: Geometry, rng: np.random.Generator, count: int | None = None) -> GroupElement:
    """Random arrows (p, K), (q, K) inside the domain box, the zero arrow first."""
    count = config.verify_samples() if count is None else count
    dim = geom.n
    direction = rng.standard_normal((dim, count))
    direction /= np.linalg.norm(direction, axis=0)
    radius = SAMPLE_RADIUS_FRACTION * config.domain_radius() * rng.uniform(size=count) ** (1.0 / dim)
    v = direction * radius
    v[:, 0] = 0.0
    return GroupElement(v[:geom.p], v[geom.p:])


def verify_h_adapted(handle: ExpMapHandle, m, arrows: GroupElement) -> ProbeReport:
    """Taylor coordinates of t -> exp_m(delta_t v) against v for a batch of arrows.

    Reports the full defect |(h', n') - (h, n)| and, separately, the first-order
    defect |h' - h| + |c'(0)^N| of an ordinary exponential map. Both must stay
    below the oracle tolerance.
    """
    geom = handle.geom
    m = np.asarray(m, dtype=float)
    h = np.atleast_2d(np.asarray(arrows.h, dtype=float).T).T
    n = np.atleast_2d(np.asarray(arrows.n, dtype=float).T).T
    count = h.shape[1]
    ts = np.asarray(config.arrow_grid())
    g = len(ts)
    times = np.concatenate([ts, -ts])

    # every (sample, signed t) pair in one batched evaluation
    scaled = signed_dilate(GroupElement(h[:, :, None], n[:, :, None]), times[None, :])
    pts = handle.evaluate(m, scaled.h.reshape(geom.p, -1), scaled.n.reshape(geom.q, -1))
    pts = pts.reshape(geom.n, count, 2 * g)

    chart = geom.auto_chart(m)
    defects, first_order, raw = [], [], []
    for s in range(count):
        est = taylor_from_samples(chart, geom.p, ts, pts[:, s, :g].T, pts[:, s, g:].T, m)
        target = np.concatenate([h[:, s], n[:, s]])
        defects.append(float(np.linalg.norm(np.concatenate([est.h, est.n]) - target)))
        first_order.append(float(np.linalg.norm(est.h - h[:, s]) + np.linalg.norm(est.normal_velocity)))
        raw.append(np.linalg.norm(np.concatenate([est.raw_h, est.raw_n], axis=1) - target, axis=1))

    worst = int(np.argmax(defects))
    residuals = np.max(np.array(raw), axis=0)
    slope, exact = fit_loglog_slope(ts, residuals, config.tolerance("noise_floor"))
    defect = defects[worst]
    tol = config.tolerance("oracle")
    # an H-adapted map is first of all an exponential map: c'(0) = (h, 0)
    passed = defect < tol and max(first_order) < tol
    log.info("%s at %s: worst defect %.3g, first-order defect %.3g over %d arrows (%s)",
             handle.name, format_point(m), defect, max(first_order), count,
             "pass" if passed else "FAIL")
    return ProbeReport(
        kind="h-adapted",
        passed=passed,
        t_grid=ts.tolist(),
        residuals=residuals.tolist(),
        fitted_slope=slope,
        exact=exact,
        extrapolated_value=defect,
        predicted_value=0.0,
        details={
            "handle": handle.name,
            "defect": defect,
            "first_order_defect": max(first_order),
            "worst_arrow": {"h": h[:, worst].tolist(), "n": n[:, worst].tolist()},
            "samples": count,
        },
    )
