"""
The parabolic tangent groupoid, probed numerically.

For t > 0 elements are pairs (a, b, t); at t = 0 they are parabolic arrows.
An exponential-map handle glues the two through chart_psi(m, v, t) =
(exp_m(delta_t v), m, t). Smoothness of that glueing is measured, not
asserted: transition_probe compares two handles and convergence_probe
follows pairs of curves into the t = 0 boundary.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import config
from .constants import CONVERGENCE_ORDER, RATIO_GROWTH_LIMIT, ROUNDING_SLACK
from .errors import DomainError, GroupError, NewtonDivergence, NotTangentToH
from .expmaps import ExpMapHandle
from .flows import FlowMap, arrow_of_flowline, parabolic_field
from .geometry import Geometry, ParabolicArrow, format_point, osculating_b
from .jets import curve_jet2
from .nilpotent import GroupElement, gb_inv, gb_mul, signed_dilate
from .numerics import fit_loglog_slope
from .reports import ProbeReport

log = logging.getLogger(__name__)


# --- Elements ---

@dataclass(frozen=True, eq=False)
class PairElement:
    """(a, b, t) with t > 0: an arrow from b to a at scale t."""
    a: np.ndarray
    b: np.ndarray
    t: float

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))
        if not self.t > 0:
            raise DomainError(f"pair elements need t > 0, got {self.t}")

    def to_json(self) -> dict:
        return {"a": self.a.tolist(), "b": self.b.tolist(), "t": self.t}


@dataclass(frozen=True, eq=False)
class ArrowElement:
    """A parabolic arrow, the t = 0 boundary of the groupoid."""
    arrow: ParabolicArrow

    @property
    def base(self) -> np.ndarray:
        return self.arrow.base

    def to_json(self) -> dict:
        return {"arrow": self.arrow.to_json(), "t": 0.0}


GroupoidElement = PairElement | ArrowElement


def _same_point(x, y) -> bool:
    scale = max(1.0, float(np.max(np.abs(x))), float(np.max(np.abs(y))))
    return float(np.max(np.abs(np.asarray(x) - np.asarray(y)))) <= config.tolerance("middle_point") * scale


def compose(geom: Geometry, g1: GroupoidElement, g2: GroupoidElement) -> GroupoidElement:
    """g1 . g2: (a, b, t)(b, c, t) = (a, c, t); arrows multiply in the osculating group."""
    if isinstance(g1, PairElement) and isinstance(g2, PairElement):
        if g1.t != g2.t:
            raise GroupError(f"cannot compose pairs at t={g1.t:g} and t={g2.t:g}")
        if not _same_point(g1.b, g2.a):
            raise GroupError(f"middle points differ: {format_point(g1.b)} vs {format_point(g2.a)}")
        return PairElement(g1.a, g2.b, g1.t)
    if isinstance(g1, ArrowElement) and isinstance(g2, ArrowElement):
        if not _same_point(g1.base, g2.base) or g1.arrow.chart_id != g2.arrow.chart_id:
            raise GroupError("arrows at different base points do not compose")
        B = osculating_b(geom, g1.base)
        prod = gb_mul(B, g1.arrow.element(), g2.arrow.element())
        return ArrowElement(ParabolicArrow(g1.base, prod.h, prod.n, g1.arrow.chart_id))
    raise GroupError("cannot compose a pair with an arrow")


def inverse(geom: Geometry, g: GroupoidElement) -> GroupoidElement:
    if isinstance(g, PairElement):
        return PairElement(g.b, g.a, g.t)
    inv = gb_inv(osculating_b(geom, g.base), g.arrow.element())
    return ArrowElement(ParabolicArrow(g.base, inv.h, inv.n, g.arrow.chart_id))


def unit(geom: Geometry, m, t: float) -> GroupoidElement:
    m = np.asarray(m, dtype=float)
    if t > 0:
        return PairElement(m, m, t)
    chart = geom.auto_chart(m)
    return ArrowElement(ParabolicArrow(m, np.zeros(geom.p), np.zeros(geom.q), chart.chart_id))


# --- Glueing charts ---

def chart_psi(handle: ExpMapHandle, m, v: GroupElement, t: float) -> GroupoidElement:
    """(exp_m(delta_t v), m, t) for t > 0, the arrow (m, v) at t = 0."""
    m = np.asarray(m, dtype=float)
    if not 0.0 <= t < 1.0:
        raise DomainError(f"glueing chart needs 0 <= t < 1, got {t}")
    if t == 0.0:
        chart = handle.geom.auto_chart(m)
        return ArrowElement(ParabolicArrow(m, v.h, v.n, chart.chart_id))
    scaled = signed_dilate(v, t)
    return PairElement(handle.evaluate(m, scaled.h, scaled.n), m, t)


@dataclass(frozen=True)
class ChartInverse:
    """An arrow recovered from a pair, with the residual it attains."""
    arrow: GroupElement
    residual: float         # |chart_b(exp_b(delta_t v)) - chart_b(a)|
    scaled_residual: float  # the same residual in delta_(1/t) coordinates
    iterations: int


def solve_chart_psi(handle: ExpMapHandle, a, b, t: float) -> ChartInverse:
    """The arrow v with exp_b(delta_t v) = a, by damped Newton from v = 0.

    Iterates on the rescaled map v -> delta_(1/t) chart_b(exp_b(delta_t v)),
    which is close to the identity for small t. The Jacobian comes from one
    batched central-difference evaluation whose steps are fd_step in the
    unscaled arrow, so the normal columns stay above rounding as t shrinks.
    Newton runs until the rescaled residual reaches the tolerance or stops
    decreasing; the unscaled residual must then be below the tolerance.
    """
    geom = handle.geom
    if not t > 0:
        raise DomainError(f"chart_psi_inverse needs t > 0, got {t}")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    p, n = geom.p, geom.n
    chart = geom.auto_chart(b)
    params = config.newton_params()
    tol = params["residual"]
    scale = np.concatenate([np.full(p, t), np.full(n - p, t * t)])
    steps = params["fd_step"] / scale
    # chart coordinates carry rounding of the absolute points; delta_(1/t) magnifies it
    noise = ROUNDING_SLACK * np.finfo(float).eps * max(1.0, float(np.max(np.abs(a))),
                                                       float(np.max(np.abs(b)))) / (t * t)

    def rescaled(v):
        x = handle.evaluate(b, v[:p] * t, v[p:] * (t * t))
        return chart.to_chart(x) / scale.reshape((n,) + (1,) * (v.ndim - 1))

    target = chart.to_chart(a) / scale
    v = np.zeros(n)
    r = rescaled(v) - target
    norm = float(np.linalg.norm(r))
    iterations = 0

    for it in range(params["max_iter"]):
        if norm < tol:
            break
        probes = v[:, None] + np.concatenate([np.diag(steps), -np.diag(steps)], axis=1)
        try:
            cols = rescaled(probes)
            step = np.linalg.solve((cols[:, :n] - cols[:, n:]) / (2.0 * steps), -r)
        except (DomainError, np.linalg.LinAlgError) as e:
            raise NewtonDivergence(f"Newton step failed at iteration {it}: {e}") from e

        lam = 1.0
        trial_norm = math.inf
        while lam > 1e-8:
            trial = v + lam * step
            try:
                trial_r = rescaled(trial) - target
                trial_norm = float(np.linalg.norm(trial_r))
            except DomainError:
                trial_norm = math.inf
            if trial_norm < norm:
                break
            lam *= params["damping"]
        if not trial_norm < norm:
            break       # rounding floor reached, or diverging; judged below
        v, r, norm = trial, trial_r, trial_norm
        iterations = it + 1

    residual = float(np.linalg.norm(r * scale))
    if residual >= tol or norm > max(tol, noise):
        raise NewtonDivergence(
            f"{handle.name}: no arrow from {format_point(b)} to {format_point(a)} "
            f"at t={t:g} (residual {residual:.3g}, rescaled {norm:.3g})")
    if norm >= tol:
        log.debug("Newton stopped at rounding level: rescaled residual %.3g (t=%g)", norm, t)
    return ChartInverse(GroupElement.from_vector(v, p), residual, norm, iterations)


def chart_psi_inverse(handle: ExpMapHandle, a, b, t: float) -> GroupElement:
    """The arrow v with exp_b(delta_t v) = a; see solve_chart_psi."""
    return solve_chart_psi(handle, a, b, t).arrow


# --- Probes ---

def _as_element(v, geom: Geometry) -> GroupElement:
    if isinstance(v, GroupElement):
        return v
    return GroupElement.from_vector(np.asarray(v, dtype=float), geom.p)


def transition_probe(h1: ExpMapHandle, h2: ExpMapHandle, m, v, ts=None) -> ProbeReport:
    """|psi_h1^-1(psi_h2(m, v, t)) - v| over the t-grid; bounded by C t for adapted pairs."""
    geom = h1.geom
    m = np.asarray(m, dtype=float)
    v = _as_element(v, geom)
    ts = np.asarray(config.arrow_grid() if ts is None else ts, dtype=float)

    distances, values, newton = [], [], []
    for t in ts:
        scaled = signed_dilate(v, t)
        x = h2.evaluate(m, scaled.h, scaled.n)
        solved = solve_chart_psi(h1, x, m, float(t))
        w = solved.arrow
        newton.append(solved.residual)
        values.append(w.vector().tolist())
        distances.append(float(w.distance(v)))
    d = np.array(distances)
    ratios = d / ts
    floor = config.tolerance("oracle")
    order, exact = fit_loglog_slope(ts, d, floor)
    above = ratios[d > floor]
    growth = float(above[-1] / above[0]) if len(above) >= 2 and above[0] > 0 else 1.0
    passed = exact or (order >= CONVERGENCE_ORDER and growth < RATIO_GROWTH_LIMIT)
    log.info("transition %s -> %s at %s: order %s, ratio growth %.3g", h2.name, h1.name,
             format_point(m), order, growth)
    return ProbeReport(
        kind="transition",
        passed=passed,
        t_grid=ts.tolist(),
        residuals=d.tolist(),
        fitted_slope=order,
        exact=exact,
        extrapolated_value=values[-1],
        predicted_value=v.vector().tolist(),
        details={"ratios": ratios.tolist(), "sup_ratio": float(np.max(ratios)),
                 "ratio_growth": growth, "handles": [h1.name, h2.name],
                 "newton_residual": max(newton)},
    )


def curve_arrow(geom: Geometry, curve) -> ParabolicArrow:
    """Taylor coordinates of a curve at t = 0 in the auto H-chart at curve(0)."""
    jet = curve_jet2(curve, 0.0)
    m = jet.value
    chart = geom.auto_chart(m)
    first = chart.inverse @ jet.first
    second = chart.inverse @ jet.second
    speed = float(np.linalg.norm(first))
    normal = float(np.linalg.norm(first[geom.p:]))
    if speed > 0 and normal / speed > config.tolerance("tangent_to_h"):
        raise NotTangentToH(f"curve velocity at {format_point(m)} leaves H "
                            f"(normal part {normal:.3g})")
    return ParabolicArrow(m, first[:geom.p], 0.5 * second[geom.p:], chart.chart_id)


def convergence_target(geom: Geometry, a, b) -> tuple[np.ndarray, GroupElement]:
    """Base point and [a] * [b]^-1 for two curves through the same point."""
    arrow_a = curve_arrow(geom, a)
    arrow_b = curve_arrow(geom, b)
    if not _same_point(arrow_a.base, arrow_b.base):
        raise DomainError(f"curves start at different points {format_point(arrow_a.base)} "
                          f"and {format_point(arrow_b.base)}")
    m = arrow_a.base
    B = osculating_b(geom, m)
    return m, gb_mul(B, arrow_a.element(), gb_inv(B, arrow_b.element()))


def _curve_points(curve, ts) -> np.ndarray:
    """curve(t) for every t, as (n, G)."""
    outs = curve(np.asarray(ts, dtype=float))
    return np.stack([np.broadcast_to(np.asarray(o, dtype=float), np.shape(ts)) for o in outs])


def convergence_probe(handle: ExpMapHandle, a, b, ts=None) -> ProbeReport:
    """psi^-1(a(t), b(t), t) against the algebraic limit [a] * [b]^-1."""
    geom = handle.geom
    ts = np.asarray(config.arrow_grid() if ts is None else ts, dtype=float)
    m, target = convergence_target(geom, a, b)
    pa = _curve_points(a, ts)
    pb = _curve_points(b, ts)

    residuals, values, newton = [], [], []
    for k, t in enumerate(ts):
        solved = solve_chart_psi(handle, pa[:, k], pb[:, k], float(t))
        w = solved.arrow
        newton.append(solved.residual)
        values.append(w.vector().tolist())
        residuals.append(float(w.distance(target)))
    floor = config.tolerance("oracle")
    order, exact = fit_loglog_slope(ts, residuals, floor)
    passed = exact or order >= CONVERGENCE_ORDER
    log.info("convergence via %s at %s: order %s", handle.name, format_point(m), order)
    return ProbeReport(
        kind="convergence",
        passed=passed,
        t_grid=ts.tolist(),
        residuals=residuals,
        fitted_slope=order,
        exact=exact,
        extrapolated_value=values[-1],
        predicted_value=target.vector().tolist(),
        details={"handle": handle.name, "target": target.to_json(), "base": m.tolist(),
                 "newton_residual": max(newton)},
    )


def flow_cross_check(geom: Geometry, a, b) -> ProbeReport:
    """Realize [a] and [b] by parabolic flows; Phi_a o (Phi_b)^-1 must give [a] * [b]^-1."""
    m, target = convergence_target(geom, a, b)
    arrow_a = curve_arrow(geom, a)
    arrow_b = curve_arrow(geom, b)
    pa = parabolic_field(geom, arrow_a.h, arrow_a.n, m, name="a")
    pb = parabolic_field(geom, arrow_b.h, arrow_b.n, m, name="b")
    flow = FlowMap((pa, pb), (False, True))
    measured = arrow_of_flowline(flow, m, geom).element()
    defect = float(measured.distance(target))
    return ProbeReport(
        kind="flow-cross-check",
        passed=defect <= config.tolerance("oracle"),
        exact=defect == 0.0,
        extrapolated_value=measured.to_json(),
        predicted_value=target.to_json(),
        details={"defect": defect, "base": m.tolist()},
    )
