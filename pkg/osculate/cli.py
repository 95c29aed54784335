"""
Batch front-end: describe, verify and probe commands over geometry and run files.

A target is either a geometry file (*.geom) or a run file (*.run) naming a
geometry plus handle descriptors. Reports are JSON on stdout or --output;
--csv exports the t-grid tables of every probe.
"""

import argparse
import configparser
import itertools
import logging
import os
from dataclasses import dataclass, field, replace

import numpy as np

from . import config
from .constants import (
    CURVE_VAR,
    DEFAULT_HANDLES,
    EXIT_CONFIG,
    EXIT_FAILURE,
    HANDLE_KINDS,
    MAX_GRID_EXPONENT,
    PROBE_KINDS,
    SUITES,
)
from .errors import ConfigError, DimensionMismatch, ExpressionError, OsculateError, SchemaError
from .expmaps import (
    Connection,
    ExpMapHandle,
    default_samples,
    exp_folland_stein,
    exp_from_chart_family,
    exp_from_connection,
    verify_h_adapted,
)
from .expr import BinOp, CompiledMap, Num, Var, parse_vector
from .flows import (
    check_hug,
    flow_commutator_probe,
    oracle_equivalence,
    oracle_second_order,
)
from .geometry import Geometry, describe, osculating_b, rescaled_geometry
from .groupoid import (
    PairElement,
    chart_psi,
    compose,
    convergence_probe,
    flow_cross_check,
    inverse,
    transition_probe,
    unit,
)
from .nilpotent import GroupElement, gb_exp, gb_inv, gb_log, gb_mul
from .reports import Check, Report, write_csv, write_report

log = logging.getLogger(__name__)

GROUP_SAMPLES = 200


# --- Run configuration ---

@dataclass(frozen=True)
class HandleSpec:
    """Exponential-map descriptor: a kind plus kind-specific parameters."""
    name: str
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class RunConfig:
    geometry: str
    command: str = "verify"
    points: list = field(default_factory=list)
    handles: list = field(default_factory=list)
    suite: str = "all"
    t_grid: list | None = None
    samples: int | None = None
    seed: int | None = None
    output: str | None = None
    csv: str | None = None


def default_handle_specs() -> list[HandleSpec]:
    kinds = {"fs": "frame-flow", "conn": "connection", "chart": "chart-family"}
    return [HandleSpec(name, kinds[name]) for name in DEFAULT_HANDLES]


def parse_point(text: str, dim: int | None = None) -> np.ndarray:
    try:
        values = [float(x) for x in text.replace("(", "").replace(")", "").split(",") if x.strip()]
    except ValueError:
        raise SchemaError(f"invalid point {text!r}") from None
    if dim is not None and len(values) != dim:
        raise DimensionMismatch(f"point {text!r} has {len(values)} coordinates, expected {dim}")
    return np.array(values)


def parse_arrow(text: str, p: int, q: int) -> GroupElement:
    """'h1,...,hp | n1,...,nq'."""
    if "|" not in text:
        raise SchemaError(f"arrow {text!r} must be written as 'h | n'")
    h_text, n_text = text.split("|", 1)
    return GroupElement(parse_point(h_text, p), parse_point(n_text, q))


def _parse_grid(raw: str) -> list[float]:
    try:
        if ".." in raw:
            lo, hi = (int(x) for x in raw.split("..", 1))
            exponents = range(lo, hi + 1)
        else:
            exponents = [int(x) for x in raw.split(",") if x.strip()]
    except ValueError:
        raise SchemaError(f"invalid t_grid {raw!r}") from None
    exponents = sorted(set(exponents))
    if exponents and not 1 <= exponents[0] <= exponents[-1] <= MAX_GRID_EXPONENT:
        raise SchemaError(f"t_grid {raw!r}: exponents must lie in 1..{MAX_GRID_EXPONENT}")
    grid = [2.0 ** -k for k in exponents]
    if len(grid) < 2:
        raise SchemaError(f"t_grid {raw!r} needs at least two exponents")
    return grid


def load_run_config(path: str) -> RunConfig:
    """Parse a *.run file; the geometry path is resolved against the run file."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    try:
        with open(path, encoding="utf-8") as f:
            cp.read_file(f, source=path)
    except configparser.Error as e:
        raise SchemaError(f"{path}: {e}") from e
    if not cp.has_section("run"):
        raise SchemaError(f"{path}: missing [run] section")
    run = cp["run"]
    geometry = run.get("geometry", "").strip()
    if not geometry:
        raise SchemaError(f"{path}: [run] is missing 'geometry'")
    geometry = os.path.join(os.path.dirname(os.path.abspath(path)), geometry)

    suite = run.get("suite", "all").strip()
    if suite not in SUITES:
        raise SchemaError(f"{path}: unknown suite {suite!r}")
    points = [p for p in run.get("point", "").split(";") if p.strip()]
    try:
        seed = run.getint("seed") if "seed" in run else None
        samples = run.getint("samples") if "samples" in run else None
    except ValueError as e:
        raise SchemaError(f"{path}: {e}") from None
    t_grid = _parse_grid(run["t_grid"]) if "t_grid" in run else None

    handles = []
    for section in cp.sections():
        if section == "run":
            continue
        if not section.startswith("handle."):
            raise SchemaError(f"{path}: unknown section [{section}]")
        sec = cp[section]
        kind = sec.get("kind", "").strip()
        if kind not in HANDLE_KINDS:
            raise SchemaError(f"{path}: [{section}] has unknown kind {kind!r}")
        params = {k: v.strip() for k, v in sec.items() if k != "kind"}
        handles.append(HandleSpec(section[len("handle."):], kind, params))

    log.debug("Loaded run %s: geometry %s, %d handle(s)", path, geometry, len(handles))
    return RunConfig(geometry=geometry, command=run.get("command", "verify").strip(),
                     points=points, handles=handles, suite=suite, t_grid=t_grid,
                     samples=samples, seed=seed)


def _flag(params: dict, key: str, default: bool) -> bool:
    raw = params.get(key)
    if raw is None:
        return default
    value = configparser.ConfigParser.BOOLEAN_STATES.get(raw.lower())
    if value is None:
        raise SchemaError(f"{key} = {raw!r} is not a boolean")
    return value


def build_handle(geom: Geometry, spec: HandleSpec) -> ExpMapHandle:
    if spec.kind == "frame-flow":
        return exp_folland_stein(geom, name=spec.name)
    if spec.kind == "connection":
        conn = Connection.from_geometry(geom, spec.params.get("connection"))
        return exp_from_connection(geom, conn, name=spec.name)
    if spec.kind == "chart-family":
        return exp_from_chart_family(geom, spec.params.get("map", "auto"),
                                     taylor_corrected=_flag(spec.params, "taylor_corrected", True),
                                     name=spec.name)
    raise SchemaError(f"unknown handle kind {spec.kind!r}")


# --- Shared helpers ---

@dataclass
class _Context:
    run: RunConfig
    geom: Geometry
    points: list
    rng: np.random.Generator

    @property
    def point(self) -> np.ndarray:
        return self.points[0]

    def handle_specs(self) -> list[HandleSpec]:
        return self.run.handles or default_handle_specs()


def _context(run: RunConfig) -> _Context:
    geom = Geometry.load(run.geometry)
    points = [parse_point(p, geom.n) for p in run.points] or [np.zeros(geom.n)]
    seed = config.verify_seed() if run.seed is None else run.seed
    return _Context(run, geom, points, np.random.default_rng(seed))


def _per_point(ctx: _Context, checks_at) -> list[Check]:
    """Run checks_at once per point; with several points each check records its point."""
    checks = []
    for m in ctx.points:
        found = checks_at(replace(ctx, points=[m]))
        if len(ctx.points) > 1:
            for check in found:
                check.details["point"] = m.tolist()
        checks += found
    return checks


def _guarded(name: str, fn, **details) -> Check:
    """Run one check; numerical and geometric errors become a failing entry."""
    try:
        return fn()
    except (ConfigError, ExpressionError):
        raise
    except OsculateError as e:
        log.warning("Check %s failed with %s: %s", name, type(e).__name__, e)
        return Check(name, False, None, {**details, "error": str(e), "error_type": type(e).__name__})


def field_from_text(geom: Geometry, text: str):
    """A frame field by name, or a vector expression over the geometry variables."""
    if text in geom.spec.frame_names:
        return geom.field(text)
    from .flows import VectorField
    return VectorField(parse_vector(text, geom.variables), geom.variables, name=text)


def curve_from_text(geom: Geometry, text: str) -> CompiledMap:
    """A named [curves] entry, or a vector expression in t."""
    if text in geom.spec.curves:
        return geom.curve(text)
    exprs = parse_vector(text, (CURVE_VAR,))
    if len(exprs) != geom.n:
        raise DimensionMismatch(f"curve {text!r} has {len(exprs)} components, expected {geom.n}")
    return CompiledMap(exprs, (CURVE_VAR,), name=text)


def line_curve(m, direction) -> CompiledMap:
    """t -> m + t * direction."""
    exprs = [BinOp("+", Num(float(a)), BinOp("*", Num(float(d)), Var(CURVE_VAR)))
             for a, d in zip(m, direction)]
    return CompiledMap(exprs, (CURVE_VAR,), name="line")


def _random_elements(rng, p: int, q: int, count: int) -> GroupElement:
    return GroupElement(rng.uniform(-1, 1, (p, count)), rng.uniform(-1, 1, (q, count)))


# --- Describe ---

def cmd_describe(run: RunConfig) -> Report:
    ctx = _context(run)
    descriptions = [describe(ctx.geom, m) for m in ctx.points]
    data = descriptions[0] if len(descriptions) == 1 else {"descriptions": descriptions}
    data = {k: v for k, v in data.items() if k != "geometry"}
    for d in descriptions:
        log.info("%s at %s: skew rank %d (%s)", ctx.geom.name, d["point"], d["skew_rank"], d["iso_class"])
    return Report("describe", ctx.geom.name, [], data)


# --- Verify suites ---

def _group_checks(ctx: _Context) -> list[Check]:
    geom, m = ctx.geom, ctx.point
    B = osculating_b(geom, m)
    a, b, c = (_random_elements(ctx.rng, geom.p, geom.q, GROUP_SAMPLES) for _ in range(3))
    e = GroupElement(np.zeros((geom.p, GROUP_SAMPLES)), np.zeros((geom.q, GROUP_SAMPLES)))
    assoc = gb_mul(B, gb_mul(B, a, b), c).distance(gb_mul(B, a, gb_mul(B, b, c)))
    ident = np.maximum(gb_mul(B, a, e).distance(a), gb_mul(B, e, a).distance(a))
    inv = gb_mul(B, a, gb_inv(B, a)).distance(GroupElement(a.h * 0, a.n * 0))
    axioms = float(max(assoc.max(), ident.max(), inv.max()))
    explog = float(gb_log(B, gb_exp(B, a)).distance(a).max())
    tol = 1e-12 * max(1.0, float(np.max(np.abs(B.coeffs))))

    def rescaled():
        v = geom.variables[0]
        g2 = rescaled_geometry(geom, f"1 + ({v} - ({float(m[0])!r}))^2", m)
        residual = float(np.max(np.abs(osculating_b(g2, m).coeffs - B.coeffs))) if B.coeffs.size else 0.0
        return Check("frame-extension-independence", residual <= 1e-10, residual)

    return [
        Check("group-axioms", axioms <= tol, axioms, {"samples": GROUP_SAMPLES}),
        Check("exp-log-inverse", explog <= tol, explog),
        _guarded("frame-extension-independence", rescaled),
    ]


def _combination_pairs(ctx: _Context, count: int):
    geom = ctx.geom
    for k in range(count):
        ca = np.concatenate([ctx.rng.uniform(-1, 1, geom.p), np.zeros(geom.q)])
        cb = np.concatenate([ctx.rng.uniform(-1, 1, geom.p), np.zeros(geom.q)])
        yield k, geom.frame_field(ca, name=f"A{k}"), geom.frame_field(cb, name=f"B{k}")


def _oracle_checks(ctx: _Context) -> list[Check]:
    geom, m = ctx.geom, ctx.point
    names = geom.spec.frame_names[:geom.p]
    checks = []
    basis_pairs = list(itertools.combinations(names, 2))
    for x, y in basis_pairs:
        X, Y = geom.field(x), geom.field(y)
        checks.append(_guarded(f"second-order:{x},{y}", lambda X=X, Y=Y, x=x, y=y: Check.from_probe(
            f"second-order:{x},{y}", oracle_second_order(X, Y, m))))
        checks.append(_guarded(f"commutator:{x},{y}", lambda X=X, Y=Y, x=x, y=y: Check.from_probe(
            f"commutator:{x},{y}", flow_commutator_probe(X, Y, m, geom))))
    for k, A, B in _combination_pairs(ctx, 5):
        checks.append(_guarded(f"second-order:random{k}", lambda A=A, B=B, k=k: Check.from_probe(
            f"second-order:random{k}", oracle_second_order(A, B, m))))
    for k, A, B in _combination_pairs(ctx, config.verify_pairs()):
        checks.append(_guarded(f"oracle-equivalence:{k}", lambda A=A, B=B, k=k: Check.from_probe(
            f"oracle-equivalence:{k}", oracle_equivalence(A, B, m, geom))))
    for x in names:
        checks.append(_guarded(f"hug:{x}", lambda x=x: Check.from_probe(
            f"hug:{x}", check_hug(geom.field(x), m, geom))))
    return checks


def _verification_arrows(ctx: _Context) -> GroupElement:
    geom = ctx.geom
    count = ctx.run.samples or config.verify_samples()
    samples = default_samples(geom, ctx.rng, count)
    basis = np.eye(geom.p)
    return GroupElement(np.concatenate([samples.h, basis], axis=1),
                        np.concatenate([samples.n, np.zeros((geom.q, geom.p))], axis=1))


class _Handles:
    """Handles of a run, built once; construction failures are remembered."""

    def __init__(self, ctx: _Context):
        self.ctx = ctx
        self.built = {}
        self.errors = {}
        self.adapted = {}
        for spec in ctx.handle_specs():
            try:
                self.built[spec.name] = build_handle(ctx.geom, spec)
            except (ConfigError, ExpressionError):
                raise
            except OsculateError as e:
                log.warning("Handle %s unavailable: %s", spec.name, e)
                self.errors[spec.name] = e

    def verify(self) -> list[Check]:
        arrows = _verification_arrows(self.ctx)
        checks = []
        for name, error in self.errors.items():
            checks.append(Check("h-adapted-defect", False, None,
                                {"handle": name, "error": str(error), "error_type": type(error).__name__}))
            self.adapted[name] = False
        for name, handle in self.built.items():
            def run_one(handle=handle, name=name):
                probe = verify_h_adapted(handle, self.ctx.point, arrows)
                return Check.from_probe("h-adapted-defect", probe, probe.details["defect"], handle=name)
            check = _guarded("h-adapted-defect", run_one, handle=name)
            self.adapted[name] = check.passed
            checks.append(check)
        return checks


def _expmap_checks(ctx: _Context, handles: _Handles) -> list[Check]:
    checks = handles.verify()
    geom, m = ctx.geom, ctx.point
    flows = [h for h in handles.built.values() if h.kind == "frame-flow"]
    conns = [h for h in handles.built.values() if h.kind == "connection"]
    if flows and conns:
        fs, conn = flows[0], conns[0]

        def agree():
            h = ctx.rng.uniform(-0.5, 0.5, (geom.p, 10))
            arrow = gb_exp(osculating_b(geom, m), GroupElement(h, np.zeros((geom.q, 10))))
            gap = float(np.max(np.abs(fs.evaluate(m, arrow.h, arrow.n) - conn.evaluate(m, arrow.h, arrow.n))))
            return Check("h-directions-agree", gap <= 1e-8, gap, {"handles": [fs.name, conn.name]})

        checks.append(_guarded("h-directions-agree", agree, handles=[fs.name, conn.name]))
    return checks


def _default_curves(ctx: _Context):
    geom, m = ctx.geom, ctx.point
    if "a" in geom.spec.curves and "b" in geom.spec.curves:
        a, b = geom.curve("a"), geom.curve("b")
        # named curves only serve the point they start from
        if np.allclose(a.evaluate([0.0]), m) and np.allclose(b.evaluate([0.0]), m):
            return a, b
    F = geom.check_frame(m)
    return line_curve(m, F[:, 0]), line_curve(m, F[:, 1] if geom.p > 1 else 0.5 * F[:, 0])


def _default_arrow(geom: Geometry) -> GroupElement:
    h = np.zeros(geom.p)
    h[0] = 0.5
    return GroupElement(h, np.full(geom.q, 0.25))


def _groupoid_laws(ctx: _Context, handle: ExpMapHandle) -> Check:
    geom, m = ctx.geom, ctx.point
    v = _default_arrow(geom)
    t = 0.25
    g1 = chart_psi(handle, m, v, t)
    g0 = unit(geom, m, t)
    g2 = PairElement(m, g1.a, t)
    assoc = compose(geom, compose(geom, g1, g0), g2)
    left = compose(geom, g1, compose(geom, g0, g2))
    residual = float(max(np.max(np.abs(assoc.a - left.a)), np.max(np.abs(assoc.b - left.b))))
    back = compose(geom, g1, inverse(geom, g1))
    residual = max(residual, float(np.max(np.abs(back.a - back.b))))
    a0 = chart_psi(handle, m, v, 0.0)
    e0 = compose(geom, a0, inverse(geom, a0))
    residual = max(residual, float(np.max(np.abs(e0.arrow.element().vector()))))
    return Check("groupoid-laws", residual <= 1e-12, residual, {"handle": handle.name})


def _groupoid_checks(ctx: _Context, handles: _Handles) -> list[Check]:
    geom, m = ctx.geom, ctx.point
    if not handles.adapted:
        handles.verify()
    names = list(handles.built)
    checks = []
    if not names:
        return [Check("groupoid", False, None, {"error": "no usable handle"})]
    ts = ctx.run.t_grid
    first = handles.built[names[0]]
    checks.append(_guarded("groupoid-laws", lambda: _groupoid_laws(ctx, first)))

    v = _default_arrow(geom)
    for other in names[1:]:
        h2 = handles.built[other]
        expected = handles.adapted.get(names[0], False) and handles.adapted.get(other, False)

        def transition(h2=h2, other=other, expected=expected):
            probe = transition_probe(first, h2, m, v, ts)
            return Check(f"transition:{names[0]},{other}", probe.passed == expected,
                         probe.details["sup_ratio"],
                         {"expected_bounded": expected, "bounded": probe.passed}, probe)

        checks.append(_guarded(f"transition:{names[0]},{other}", transition))

    a, b = _default_curves(ctx)
    for name, handle in handles.built.items():
        if not handles.adapted.get(name, False):
            continue
        checks.append(_guarded(f"convergence:{name}", lambda handle=handle, name=name: Check.from_probe(
            f"convergence:{name}", convergence_probe(handle, a, b, ts), handle=name)))
        checks.append(_guarded(f"convergence-diagonal:{name}", lambda handle=handle, name=name: Check.from_probe(
            f"convergence-diagonal:{name}", convergence_probe(handle, a, a, ts), handle=name)))
    checks.append(_guarded("flow-cross-check", lambda: Check.from_probe(
        "flow-cross-check", flow_cross_check(geom, a, b))))
    return checks


def _verify_at(ctx: _Context, suite: str) -> list[Check]:
    checks = []
    handles = None
    if suite in ("group", "all"):
        checks += _group_checks(ctx)
    if suite in ("oracle", "all"):
        checks += _oracle_checks(ctx)
    if suite in ("expmap", "groupoid", "all"):
        handles = _Handles(ctx)
    if suite in ("expmap", "all"):
        checks += _expmap_checks(ctx, handles)
    if suite in ("groupoid", "all"):
        checks += _groupoid_checks(ctx, handles)
    return checks


def cmd_verify(run: RunConfig) -> Report:
    ctx = _context(run)
    suite = run.suite
    checks = _per_point(ctx, lambda pctx: _verify_at(pctx, suite))
    data = {"suite": suite, "seed": config.verify_seed() if run.seed is None else run.seed}
    if len(ctx.points) > 1:
        data["points"] = [m.tolist() for m in ctx.points]
        data["descriptions"] = [describe(ctx.geom, m) for m in ctx.points]
    else:
        data["point"] = ctx.point.tolist()
        data["describe"] = describe(ctx.geom, ctx.point)
    report = Report("verify", ctx.geom.name, checks, data)
    if report.passed:
        log.info("verify %s (%s): %d checks passed", ctx.geom.name, suite, len(checks))
    else:
        log.info("verify %s (%s): failing %s", ctx.geom.name, suite, ", ".join(report.failing()))
    return report


# --- Probe ---

def _pick(handles: "_Handles", name: str) -> ExpMapHandle:
    if name in handles.errors:
        raise handles.errors[name]
    if name not in handles.built:
        raise SchemaError(f"no handle named {name!r} (have {', '.join(handles.built) or 'none'})")
    return handles.built[name]


def _probe_at(ctx: _Context, kind: str, args: argparse.Namespace) -> list[Check]:
    run, geom, m = ctx.run, ctx.geom, ctx.point
    names = geom.spec.frame_names
    checks = []
    if kind in ("second-order", "commutator"):
        X = field_from_text(geom, args.X or names[0])
        Y = field_from_text(geom, args.Y or names[1 if geom.p > 1 else 0])
        if kind == "second-order":
            checks.append(_guarded(kind, lambda: Check.from_probe(kind, oracle_second_order(X, Y, m))))
        else:
            checks.append(_guarded(kind, lambda: Check.from_probe(
                kind, flow_commutator_probe(X, Y, m, geom))))
    elif kind == "transition":
        handles = _Handles(ctx)
        v = parse_arrow(args.v, geom.p, geom.q) if args.v else _default_arrow(geom)

        def transition():
            h1 = _pick(handles, args.h1 or DEFAULT_HANDLES[0])
            h2 = _pick(handles, args.h2 or DEFAULT_HANDLES[1])
            return Check.from_probe(kind, transition_probe(h1, h2, m, v, run.t_grid))

        checks.append(_guarded(kind, transition))
    elif kind == "convergence":
        default_a, default_b = _default_curves(ctx)
        a = curve_from_text(geom, args.a) if args.a else default_a
        b = curve_from_text(geom, args.b) if args.b else default_b
        handles = _Handles(ctx)
        selected = [args.handle] if args.handle else list(handles.built) + list(handles.errors)
        for name in selected:
            checks.append(_guarded(f"{kind}:{name}", lambda name=name: Check.from_probe(
                f"{kind}:{name}", convergence_probe(_pick(handles, name), a, b, run.t_grid), handle=name),
                handle=name))
    else:
        raise SchemaError(f"unknown probe kind {kind!r}")
    return checks


def cmd_probe(run: RunConfig, kind: str, args: argparse.Namespace) -> Report:
    ctx = _context(run)
    checks = _per_point(ctx, lambda pctx: _probe_at(pctx, kind, args))
    data = {"probe": kind}
    if len(ctx.points) > 1:
        data["points"] = [m.tolist() for m in ctx.points]
    else:
        data["point"] = ctx.point.tolist()
    return Report("probe", ctx.geom.name, checks, data)


# --- Argument parsing ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="osculate",
                                     description="Osculating groups and parabolic tangent groupoids")
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("target", help="geometry (*.geom) or run (*.run) file")
        p.add_argument("--point", action="append", metavar="X1,...,XN",
                       help="base point (repeatable; default origin)")
        p.add_argument("--output", "-o", metavar="PATH", help="write the JSON report here")
        p.add_argument("--csv", metavar="PATH", help="export t-grid tables as CSV")
        p.add_argument("--seed", type=int, help="RNG seed for sampled checks")
        p.add_argument("--samples", type=int, help="random arrows per handle")

    common(sub.add_parser("describe", help="osculating group at a point"))

    p = sub.add_parser("verify", help="run a verification suite")
    common(p)
    p.add_argument("--suite", choices=SUITES, help="suite to run (default: all)")

    p = sub.add_parser("probe", help="run one numerical probe")
    p.add_argument("kind", choices=PROBE_KINDS)
    common(p)
    p.add_argument("--X", help="first field (frame name or expression vector)")
    p.add_argument("--Y", help="second field")
    p.add_argument("--h1", help="reference handle (default fs)")
    p.add_argument("--h2", help="compared handle (default conn)")
    p.add_argument("--v", help="arrow 'h1,...,hp | n1,...,nq'")
    p.add_argument("--a", help="first curve (name or expression vector in t)")
    p.add_argument("--b", help="second curve")
    p.add_argument("--handle", help="restrict convergence to one handle")
    return parser


def resolve_run(args: argparse.Namespace) -> RunConfig:
    """Load the target and apply command-line overrides."""
    if args.target.endswith(".run"):
        run = load_run_config(args.target)
    else:
        run = RunConfig(geometry=args.target)
    run.command = args.command
    if args.point:
        run.points = list(args.point)
    if getattr(args, "suite", None):
        run.suite = args.suite
    if args.seed is not None:
        run.seed = args.seed
    if args.samples is not None:
        run.samples = args.samples
    run.output = args.output
    run.csv = args.csv
    return run


def run(argv=None) -> int:
    """Parse argv, run the command, write the report; returns the exit code."""
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_run(args)
        if args.command == "describe":
            report = cmd_describe(cfg)
        elif args.command == "verify":
            report = cmd_verify(cfg)
        else:
            report = cmd_probe(cfg, args.kind, args)
    except (ConfigError, ExpressionError, OSError) as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_CONFIG
    except OsculateError as e:
        log.error("%s: %s", type(e).__name__, e)
        return EXIT_FAILURE
    write_report(report, cfg.output)
    if cfg.csv:
        write_csv(report, cfg.csv)
    return report.exit_code
