"""
Flows of vector fields and the flow-side oracles.

Fields are compiled expression vectors, optionally depending on the time
variable. Integration is fixed-step RK4 and batched along trailing axes, so a
whole t-grid (both signs) runs through the integrator in one pass.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import config
from .constants import SECOND_ORDER_SLOPE, TIME_VAR
from .errors import (
    DimensionMismatch,
    DomainError,
    FieldNotInH,
    NonFiniteState,
    NotTangentToH,
    StepUnderflow,
)
from .expr import BinOp, CompiledMap, Neg, Num, Var, format_expr
from .geometry import (
    Geometry,
    ParabolicArrow,
    format_point,
    osculating_b,
    osculating_bracket,
    taylor_from_samples,
)
from .jets import map_jet2
from .nilpotent import GroupElement, gb_log, gb_mul
from .numerics import fit_loglog_slope, sliding_richardson
from .reports import ProbeReport

log = logging.getLogger(__name__)

MIN_STEPS = 16


# --- Vector fields ---

class VectorField:
    """x' = X(x), or x' = X(x, t) when time_var is set."""

    batch_shape = ()

    def __init__(self, components, variables, time_var: str | None = None, name: str = ""):
        self.components = tuple(components)
        self.variables = tuple(variables)
        if len(self.components) != len(self.variables):
            raise DimensionMismatch(
                f"field {name or '?'} has {len(self.components)} components "
                f"for {len(self.variables)} variables")
        self.time_var = time_var
        self.name = name
        args = self.variables + ((time_var,) if time_var else ())
        self._map = CompiledMap(self.components, args, name=name)

    @property
    def dim(self) -> int:
        return len(self.variables)

    @property
    def time_dependent(self) -> bool:
        return self.time_var is not None

    def __repr__(self):
        comps = ", ".join(format_expr(c) for c in self.components)
        return f"VectorField({self.name or '?'}: ({comps}))"

    def evaluate(self, x, t=0.0) -> np.ndarray:
        """X at points x of shape (n, *batch); t may be batched too."""
        x = np.asarray(x, dtype=float)
        args = list(x)
        batch = x.shape[1:]
        if self.time_var is not None:
            t = np.asarray(t, dtype=float)
            batch = np.broadcast_shapes(batch, t.shape)
            args.append(t)
        outs = self._map(*args)
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), batch) for o in outs])

    def jet2(self, x, t: float = 0.0):
        """Value, Jacobian and Hessian in the space variables at fixed t."""
        if self.time_var is None:
            return self._map.jet2(x)
        return map_jet2(lambda *xs: self._map(*xs, float(t)), x)

    def negated(self) -> "VectorField":
        return VectorField([Neg(c) for c in self.components], self.variables,
                           self.time_var, name=f"-{self.name}" if self.name else "")


class FrameCombination:
    """x' = sum_f a_f X_f(x) with coefficients a of shape (n, *batch).

    One object carries a whole batch of constant-coefficient fields, each
    driving its own column of the integrator state.
    """

    time_var = None
    time_dependent = False

    def __init__(self, geom: Geometry, coeffs, name: str = ""):
        self.geom = geom
        self.coeffs = np.asarray(coeffs, dtype=float)
        self.name = name or f"{geom.name}.combination"

    @property
    def dim(self) -> int:
        return self.geom.n

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    def __repr__(self):
        return f"FrameCombination({self.name}, batch={self.batch_shape})"

    def evaluate(self, x, t=0.0) -> np.ndarray:
        return np.einsum("af...,f...->a...", self.geom.frame_matrix(x), self.coeffs)

    def negated(self) -> "FrameCombination":
        return FrameCombination(self.geom, -self.coeffs, name=f"-{self.name}")


# --- Integration ---

def _finite_state(k: int, x: np.ndarray):
    if not np.all(np.isfinite(x)):
        raise NonFiniteState(f"integrator state became non-finite at step {k + 1}")


def rk4(rhs, x, s0, ds, steps: int, on_step=_finite_state) -> np.ndarray:
    """Classical RK4 for x' = rhs(x, s); s0 and ds may be batched."""
    for k in range(steps):
        s = s0 + k * ds
        k1 = rhs(x, s)
        k2 = rhs(x + 0.5 * ds * k1, s + 0.5 * ds)
        k3 = rhs(x + 0.5 * ds * k2, s + 0.5 * ds)
        k4 = rhs(x + ds * k3, s + ds)
        x = x + (ds / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        on_step(k, x)
    return x


def broadcast_points(point, batch: tuple) -> np.ndarray:
    """Expand (n,) or (n, *b) points to (n, *batch)."""
    x = np.asarray(point, dtype=float)
    n = x.shape[0]
    if x.ndim == 1 and batch:
        x = x.reshape((n,) + (1,) * len(batch))
    return np.array(np.broadcast_to(x, (n,) + batch))


def integrate_flow(field, point, t, steps: int | None = None, *, inverse: bool = False) -> np.ndarray:
    """Endpoint of the flow of field from point for time t.

    With inverse=True applies (Phi_t)^-1 by integrating from time t back to 0,
    which for time-dependent fields differs from the flow for -t. t may be an
    array; the result then carries the broadcast batch shape.
    """
    steps = config.flow_steps() if steps is None else int(steps)
    if steps < MIN_STEPS:
        raise StepUnderflow(f"need at least {MIN_STEPS} RK4 steps, got {steps}")
    t = np.asarray(t, dtype=float)
    limit = config.max_abs_t()
    if np.any(np.abs(t) > limit):
        raise DomainError(f"flow time {float(np.max(np.abs(t))):g} exceeds {limit:g}")

    x0 = np.asarray(point, dtype=float)
    batch = np.broadcast_shapes(x0.shape[1:], t.shape, field.batch_shape)
    x = broadcast_points(x0, batch)
    if inverse:
        s0, ds = t, -t / steps
    else:
        s0, ds = np.zeros_like(t), t / steps
    return rk4(field.evaluate, x, s0, ds, steps)


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Composition of flows at a shared time; the last entry applies first."""
    fields: tuple
    inverse: tuple
    steps: int | None = None

    @classmethod
    def of(cls, field, steps: int | None = None) -> "FlowMap":
        return cls((field,), (False,), steps)

    def __call__(self, point, t) -> np.ndarray:
        x = point
        for field, inv in zip(reversed(self.fields), reversed(self.inverse)):
            x = integrate_flow(field, x, t, self.steps, inverse=inv)
        return x

    def compose(self, other: "FlowMap") -> "FlowMap":
        """self o other."""
        return FlowMap(self.fields + other.fields, self.inverse + other.inverse, self.steps)

    def inverted(self) -> "FlowMap":
        return FlowMap(self.fields[::-1], tuple(not i for i in self.inverse[::-1]), self.steps)

    def generator(self, m) -> np.ndarray:
        """d/dt at t = 0 of t -> Phi_t(m)."""
        m = np.asarray(m, dtype=float)
        total = np.zeros_like(m)
        for field, inv in zip(self.fields, self.inverse):
            v = field.evaluate(m, 0.0)
            total = total - v if inv else total + v
        return total


def as_flow(obj) -> FlowMap:
    return obj if isinstance(obj, FlowMap) else FlowMap.of(obj)


def compose_flows(flows, point, t) -> np.ndarray:
    """Apply flows[-1], ..., flows[0] at the shared time t."""
    x = point
    for f in reversed(list(flows)):
        x = f(x, t) if isinstance(f, FlowMap) else integrate_flow(f, x, t)
    return x


# --- Arrows of flow lines ---

def _grid() -> np.ndarray:
    return np.asarray(config.arrow_grid())


def _sample_flowline(flow: FlowMap, m: np.ndarray, ts: np.ndarray):
    """Points Phi_t(m) and Phi_-t(m) for every t in ts, as (G, n) arrays."""
    g = len(ts)
    x = flow(m, np.concatenate([ts, -ts]))
    return x[:, :g].T, x[:, g:].T


def _flowline_estimate(flow: FlowMap, m: np.ndarray, geom: Geometry):
    chart = geom.auto_chart(m)
    gen = flow.generator(m)
    residual = float(geom.h_residual(m, gen))
    if residual > config.tolerance("generator_in_h"):
        raise NotTangentToH(f"flow generator at {format_point(m)} leaves H (residual {residual:.3g})")
    ts = _grid()
    plus, minus = _sample_flowline(flow, m, ts)
    est = taylor_from_samples(chart, geom.p, ts, plus, minus, m)
    normal = float(np.max(np.abs(est.normal_velocity))) if geom.q else 0.0
    if normal > config.tolerance("tangent_to_h"):
        raise NotTangentToH(f"flow line at {format_point(m)} has normal velocity {normal:.3g}")
    return chart, ts, est


def arrow_of_flowline(flow, m, geom: Geometry) -> ParabolicArrow:
    """Taylor coordinates of t -> Phi_t(m) in the auto H-chart at m."""
    m = np.asarray(m, dtype=float)
    chart, _, est = _flowline_estimate(as_flow(flow), m, geom)
    log.debug("arrow at %s: h=%s n=%s (spread %.2g)", format_point(m), est.h, est.n, est.spread)
    return ParabolicArrow(m, est.h, est.n, chart.chart_id)


# --- Oracles ---

def _noise_floor(m) -> float:
    return config.tolerance("noise_floor") * max(1.0, float(np.max(np.abs(m))))


def oracle_second_order(X: VectorField, Y: VectorField, m) -> ProbeReport:
    """Phi^X_t Phi^Y_t(m) - Phi^X_t(m) - Phi^Y_t(m) + m = t^2 (nabla_Y X)(m) + O(t^3)."""
    m = np.asarray(m, dtype=float)
    ts = _grid()
    g = len(ts)
    times = np.concatenate([ts, -ts])

    _, jac, _ = X.jet2(m)
    predicted = jac @ Y.evaluate(m)

    both = integrate_flow(X, integrate_flow(Y, m, times), times)
    r = both - integrate_flow(X, m, times) - integrate_flow(Y, m, times) + m[:, None]
    central = [(r[:, k] + r[:, g + k]) / (2.0 * ts[k] ** 2) for k in range(g)]
    cross, spread = sliding_richardson(central, 2, config.richardson_depth())

    residuals = np.linalg.norm(r[:, :g] - np.outer(predicted, ts ** 2), axis=0)
    slope, exact = fit_loglog_slope(ts, residuals, _noise_floor(m))
    error = float(np.max(np.abs(cross - predicted)))
    passed = error <= config.tolerance("oracle") and (exact or slope >= SECOND_ORDER_SLOPE)
    log.debug("second-order oracle at %s: cross %s vs %s, slope %s", format_point(m),
              cross, predicted, slope)
    return ProbeReport(
        kind="second-order",
        passed=passed,
        t_grid=ts.tolist(),
        residuals=residuals.tolist(),
        fitted_slope=slope,
        exact=exact,
        extrapolated_value=cross.tolist(),
        predicted_value=predicted.tolist(),
        details={"error": error, "spread": spread, "fields": [X.name, Y.name]},
    )


def _require_in_h(geom: Geometry, field, m):
    residual = float(geom.h_residual(m, field.evaluate(m)))
    if residual > config.tolerance("generator_in_h"):
        raise FieldNotInH(f"{field.name or 'field'} leaves H at {format_point(m)} "
                          f"(residual {residual:.3g})")


def flow_commutator_probe(X: VectorField, Y: VectorField, m, geom: Geometry) -> ProbeReport:
    """Central value of Phi^X_t Phi^Y_t (Phi^X_t)^-1 (Phi^Y_t)^-1 (m) at order t^2."""
    m = np.asarray(m, dtype=float)
    _require_in_h(geom, X, m)
    _require_in_h(geom, Y, m)
    p = geom.p
    ts = _grid()
    g = len(ts)
    times = np.concatenate([ts, -ts])

    x = integrate_flow(Y.negated(), m, times)
    x = integrate_flow(X.negated(), x, times)
    x = integrate_flow(Y, x, times)
    x = integrate_flow(X, x, times)
    u = geom.auto_chart(m).to_chart(x)[p:]

    central = [(u[:, k] + u[:, g + k]) / (2.0 * ts[k] ** 2) for k in range(g)]
    value, spread = sliding_richardson(central, 2, config.richardson_depth())

    hx = geom.frame_coefficients(m, X.evaluate(m))[:p]
    hy = geom.frame_coefficients(m, Y.evaluate(m))[:p]
    predicted = osculating_bracket(geom, m, hx, hy)

    residuals = np.linalg.norm(u[:, :g] - np.outer(predicted, ts ** 2), axis=0)
    slope, exact = fit_loglog_slope(ts, residuals, _noise_floor(m))
    error = float(np.max(np.abs(value - predicted))) if geom.q else 0.0
    return ProbeReport(
        kind="commutator",
        passed=error <= config.tolerance("oracle"),
        t_grid=ts.tolist(),
        residuals=residuals.tolist(),
        fitted_slope=slope,
        exact=exact,
        extrapolated_value=value.tolist(),
        predicted_value=predicted.tolist(),
        details={"error": error, "spread": spread, "fields": [X.name, Y.name]},
    )


def check_hug(field: VectorField, m, geom: Geometry) -> ProbeReport:
    """The flow line of an H-field represents exp of its value: log(arrow) = (h, 0)."""
    m = np.asarray(m, dtype=float)
    ts = _grid()
    times = np.concatenate([ts, -ts])
    pts = integrate_flow(field, m, times)
    along = float(np.max(geom.h_residual(pts, field.evaluate(pts))))
    if along > config.tolerance("generator_in_h"):
        raise FieldNotInH(f"{field.name or 'field'} leaves H along its flow line "
                          f"(residual {along:.3g})")

    _, _, est = _flowline_estimate(FlowMap.of(field), m, geom)
    B = osculating_b(geom, m)
    h = geom.frame_coefficients(m, field.evaluate(m))[:geom.p]
    expected = GroupElement(h, np.zeros(geom.q))
    measured = gb_log(B, est.element())
    defect = float(expected.distance(measured))

    raw = gb_log(B, GroupElement(est.raw_h.T, est.raw_n.T))
    residuals = np.linalg.norm(raw.vector() - expected.vector()[:, None], axis=0)
    return ProbeReport(
        kind="hug",
        passed=defect <= config.tolerance("oracle"),
        t_grid=ts.tolist(),
        residuals=residuals.tolist(),
        exact=defect == 0.0,
        extrapolated_value=measured.to_json(),
        predicted_value=expected.to_json(),
        details={"defect": defect, "field": field.name},
    )


def oracle_equivalence(flow_a, flow_b, m, geom: Geometry) -> ProbeReport:
    """Arrow of Phi_a o Phi_b against the group product of the two arrows."""
    m = np.asarray(m, dtype=float)
    fa, fb = as_flow(flow_a), as_flow(flow_b)
    B = osculating_b(geom, m)
    a = arrow_of_flowline(fa, m, geom).element()
    b = arrow_of_flowline(fb, m, geom).element()
    target = gb_mul(B, a, b)
    _, ts, est = _flowline_estimate(fa.compose(fb), m, geom)
    measured = est.element()
    defect = float(target.distance(measured))
    raw = GroupElement(est.raw_h.T, est.raw_n.T)
    residuals = np.linalg.norm(raw.vector() - target.vector()[:, None], axis=0)
    slope, exact = fit_loglog_slope(ts, residuals, _noise_floor(m))
    return ProbeReport(
        kind="equivalence",
        passed=defect <= config.tolerance("oracle"),
        t_grid=ts.tolist(),
        residuals=residuals.tolist(),
        fitted_slope=slope,
        exact=exact,
        extrapolated_value=measured.to_json(),
        predicted_value=target.to_json(),
        details={"defect": defect},
    )


# --- Parabolic flows ---

def parabolic_field(geom: Geometry, h, n, m, name: str = "") -> VectorField:
    """X_t = sum h_i X_i + 2t sum_k c_k X_(p+k), c = n - b(h, h)/2.

    Its flow line through m has Taylor coordinates (h, n) in the auto H-chart;
    only X_0 lies in H.
    """
    h = np.asarray(h, dtype=float)
    n = np.asarray(n, dtype=float)
    if h.shape != (geom.p,) or n.shape != (geom.q,):
        raise DimensionMismatch(f"arrow ({h.shape}, {n.shape}) does not fit p={geom.p}, q={geom.q}")
    c = n - 0.5 * osculating_b(geom, m)(h, h)
    comps = list(geom.frame_field(np.concatenate([h, np.zeros(geom.q)])).components)
    for k in range(geom.q):
        if c[k] == 0.0:
            continue
        factor = BinOp("*", Num(2.0 * float(c[k])), Var(TIME_VAR))
        for l in range(geom.n):
            comps[l] = BinOp("+", comps[l], BinOp("*", factor, geom.spec.frame[geom.p + k][l]))
    return VectorField(comps, geom.variables, time_var=TIME_VAR,
                       name=name or f"parabolic({h.tolist()}|{n.tolist()})")
