"""
Expression DSL for geometry files.

Grammar (lowest to highest binding):

    sum     := product (("+" | "-") product)*
    product := unary (("*" | "/") unary)*
    unary   := "-" unary | power
    power   := atom ("^" unary)?          exponent folds to an integer constant
    atom    := NUMBER | IDENT | FUNC "(" sum ")" | "(" sum ")"

Expressions compile to Python lambdas that run unchanged on floats, numpy
arrays and Jet2 values.
"""

import configparser
import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np

from . import jets
from .constants import CONNECTION_KINDS, CURVE_VAR, FUNCTIONS
from .errors import (
    DimensionMismatch,
    ExprSyntaxError,
    NonIntegerExponent,
    SchemaError,
    UnboundVariable,
    UnknownIdentifier,
)

log = logging.getLogger(__name__)


# --- AST ---

@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expression"


@dataclass(frozen=True)
class Func:
    name: str
    arg: "Expression"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


Expression = Num | Var | Neg | Func | BinOp | Pow


def free_variables(e: Expression) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Num):
        return set()
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, Func):
        return free_variables(e.arg)
    if isinstance(e, Pow):
        return free_variables(e.base)
    return free_variables(e.left) | free_variables(e.right)


# --- Tokenizer ---

_NUMBER = re.compile(r"(\d+\.\d*|\.\d+|\d+)([eE][+-]?\d+)?")
_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_OPERATORS = "+-*/^(),"


@dataclass(frozen=True)
class _Token:
    kind: str       # "num", "id", "op" or "end"
    text: str
    pos: int


def _tokenize(text: str, offset: int = 0) -> list[_Token]:
    tokens = []
    i = 0
    while i < len(text):
        c = text[i]
        if c.isspace():
            i += 1
            continue
        m = _NUMBER.match(text, i)
        if m:
            if not math.isfinite(float(m.group())):
                raise ExprSyntaxError(f"number {m.group()!r} out of range", offset + i)
            tokens.append(_Token("num", m.group(), offset + i))
            i = m.end()
            continue
        m = _IDENT.match(text, i)
        if m:
            tokens.append(_Token("id", m.group(), offset + i))
            i = m.end()
            continue
        if c in _OPERATORS:
            tokens.append(_Token("op", c, offset + i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {c!r}", offset + i)
    tokens.append(_Token("end", "", offset + len(text)))
    return tokens


# --- Parser ---

class _Parser:
    def __init__(self, text: str, variables, offset: int = 0):
        self.tokens = _tokenize(text, offset)
        self.variables = set(variables)
        self.i = 0

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _take(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _at(self, *ops: str) -> bool:
        return self.tok.kind == "op" and self.tok.text in ops

    def _expect(self, op: str):
        if not self._at(op):
            found = self.tok.text or "end of input"
            raise ExprSyntaxError(f"expected {op!r}, found {found!r}", self.tok.pos)
        self._take()

    def parse(self) -> Expression:
        if self.tok.kind == "end":
            raise ExprSyntaxError("empty expression", self.tok.pos)
        e = self._sum()
        if self.tok.kind != "end":
            raise ExprSyntaxError(f"unexpected {self.tok.text!r}", self.tok.pos)
        return e

    def _sum(self) -> Expression:
        left = self._product()
        while self._at("+", "-"):
            op = self._take().text
            left = BinOp(op, left, self._product())
        return left

    def _product(self) -> Expression:
        left = self._unary()
        while self._at("*", "/"):
            op = self._take().text
            left = BinOp(op, left, self._unary())
        return left

    def _unary(self) -> Expression:
        if self._at("-"):
            self._take()
            return Neg(self._unary())
        return self._power()

    def _power(self) -> Expression:
        base = self._atom()
        if self._at("^"):
            pos = self._take().pos
            # unary recurses into power, so a^b^c groups as a^(b^c)
            return Pow(base, _fold_exponent(self._unary(), pos))
        return base

    def _atom(self) -> Expression:
        t = self.tok
        if t.kind == "num":
            self._take()
            return Num(float(t.text))
        if t.kind == "id":
            self._take()
            if t.text in FUNCTIONS:
                if not self._at("("):
                    raise ExprSyntaxError(f"function {t.text!r} needs an argument", self.tok.pos)
                self._take()
                arg = self._sum()
                self._expect(")")
                return Func(t.text, arg)
            if t.text not in self.variables:
                raise UnknownIdentifier(t.text, t.pos)
            return Var(t.text)
        if self._at("("):
            self._take()
            e = self._sum()
            self._expect(")")
            return e
        found = t.text or "end of input"
        raise ExprSyntaxError(f"unexpected {found!r}", t.pos)


def _fold_exponent(e: Expression, pos: int) -> int:
    if free_variables(e):
        raise NonIntegerExponent(pos)
    try:
        v = float(evaluate(e, {}))
    except (OverflowError, ArithmeticError) as exc:
        raise NonIntegerExponent(pos) from exc
    if not math.isfinite(v) or not v.is_integer():
        raise NonIntegerExponent(pos)
    return int(v)


def parse_expr(text: str, variables, offset: int = 0) -> Expression:
    """Parse ``text`` into an AST closed over ``variables``.

    Error positions are 0-based offsets into ``text`` plus ``offset``.
    """
    return _Parser(text, variables, offset).parse()


def _split_top_level(text: str, offset: int) -> list[tuple[str, int]]:
    pieces, depth, start = [], 0, 0
    for i, c in enumerate(text):
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth < 0:
                raise ExprSyntaxError("unbalanced ')'", offset + i)
        elif c == "," and depth == 0:
            pieces.append((text[start:i], offset + start))
            start = i + 1
    if depth != 0:
        raise ExprSyntaxError("unbalanced '('", offset + len(text))
    pieces.append((text[start:], offset + start))
    return pieces


def _strip_enclosing_parens(text: str) -> tuple[str, int]:
    stripped = text.strip()
    lead = len(text) - len(text.lstrip())
    if not (stripped.startswith("(") and stripped.endswith(")")):
        return text, 0
    depth = 0
    for i, c in enumerate(stripped):
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0 and i != len(stripped) - 1:
                return text, 0
    return stripped[1:-1], lead + 1


def parse_vector(text: str, variables) -> tuple[Expression, ...]:
    """Parse "e1, e2, ..." (optionally wrapped in one pair of parens)."""
    inner, shift = _strip_enclosing_parens(text)
    components = []
    for piece, pos in _split_top_level(inner, shift):
        if not piece.strip():
            raise ExprSyntaxError("empty component", pos)
        components.append(parse_expr(piece, variables, offset=pos))
    return tuple(components)


# --- Printer ---

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def _prec(e: Expression) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return 3
    if isinstance(e, Pow):
        return 4
    return 5


def _format_number(v: float) -> str:
    if v < 0:
        return f"(-{_format_number(-v)})"
    if v.is_integer() and v < 1e16:
        return str(int(v))
    return repr(v)


def format_expr(e: Expression) -> str:
    """Canonical text: minimal parentheses, " + "/" - " spaced, "*"/"/" tight."""
    if isinstance(e, Num):
        return _format_number(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Func):
        return f"{e.name}({format_expr(e.arg)})"
    if isinstance(e, Neg):
        inner = format_expr(e.operand)
        return "-" + (f"({inner})" if _prec(e.operand) < 3 else inner)
    if isinstance(e, Pow):
        base = format_expr(e.base)
        if _prec(e.base) <= 4:
            base = f"({base})"
        k = str(e.exponent) if e.exponent >= 0 else f"(-{-e.exponent})"
        return f"{base}^{k}"
    p = _PREC[e.op]
    left = format_expr(e.left)
    right = format_expr(e.right)
    if _prec(e.left) < p:
        left = f"({left})"
    if _prec(e.right) <= p:
        right = f"({right})"
    sep = f" {e.op} " if p == 1 else e.op
    return f"{left}{sep}{right}"


# --- Evaluation ---

_FUNCS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp}


def _walk(e: Expression, env: dict):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return env[e.name]
    if isinstance(e, Neg):
        return -_walk(e.operand, env)
    if isinstance(e, Func):
        return _FUNCS[e.name](_walk(e.arg, env))
    if isinstance(e, Pow):
        return jets.power(_walk(e.base, env), e.exponent)
    a, b = _walk(e.left, env), _walk(e.right, env)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    return jets.divide(a, b)


def _check_bound(e: Expression, env: dict):
    for name in sorted(free_variables(e)):
        if name not in env:
            raise UnboundVariable(name)


def evaluate(e: Expression, env: dict):
    """Evaluate at plain reals (or arrays)."""
    _check_bound(e, env)
    return _walk(e, env)


def eval_jet(e: Expression, env: dict) -> jets.Jet2:
    """Evaluate over Jet2 bindings; constants come back as constant jets."""
    _check_bound(e, env)
    out = _walk(e, env)
    if isinstance(out, jets.Jet2):
        return out
    sample = next(iter(env.values()), None)
    if isinstance(sample, jets.Jet2):
        return jets.Jet2(out, np.zeros_like(sample.grad), np.zeros_like(sample.hess))
    return jets.Jet2(out, np.zeros(0), np.zeros((0, 0)))


# --- Compilation ---

_NAMESPACE = {
    "__builtins__": {},
    "_sin": jets.sin,
    "_cos": jets.cos,
    "_exp": jets.exp,
    "_div": jets.divide,
    "_pow": jets.power,
}


def _emit(e: Expression, index: dict[str, int]) -> str:
    if isinstance(e, Num):
        return f"({e.value!r})" if e.value < 0 else repr(e.value)
    if isinstance(e, Var):
        return f"_v{index[e.name]}"
    if isinstance(e, Neg):
        return f"(-{_emit(e.operand, index)})"
    if isinstance(e, Func):
        return f"_{e.name}({_emit(e.arg, index)})"
    if isinstance(e, Pow):
        return f"_pow({_emit(e.base, index)}, {e.exponent})"
    if e.op == "/":
        return f"_div({_emit(e.left, index)}, {_emit(e.right, index)})"
    return f"({_emit(e.left, index)} {e.op} {_emit(e.right, index)})"


class CompiledMap:
    """A vector of expressions compiled into one callable.

    Called with one positional value per variable (float, array or Jet2) it
    returns a tuple of components; constant components stay plain floats.
    """

    supports_jets = True

    def __init__(self, exprs, variables, name: str = ""):
        self.exprs = tuple(exprs)
        self.variables = tuple(variables)
        self.name = name
        index = {v: i for i, v in enumerate(self.variables)}
        for e in self.exprs:
            for v in sorted(free_variables(e)):
                if v not in index:
                    raise UnboundVariable(v)
        args = ", ".join(f"_v{i}" for i in range(len(self.variables)))
        body = "".join(_emit(e, index) + ", " for e in self.exprs)
        self.source = f"lambda {args}: ({body})"
        self._fn = eval(self.source, dict(_NAMESPACE))

    def __len__(self) -> int:
        return len(self.exprs)

    def __repr__(self):
        return f"CompiledMap({self.name or '?'}: {', '.join(format_expr(e) for e in self.exprs)})"

    def __call__(self, *args):
        return self._fn(*args)

    def evaluate(self, point) -> np.ndarray:
        """Evaluate at point of shape (k, *batch); returns (m, *batch)."""
        pt = np.asarray(point, dtype=float)
        batch = pt.shape[1:]
        outs = self._fn(*pt)
        return np.stack([np.broadcast_to(np.asarray(o, dtype=float), batch) for o in outs])

    def jet2(self, point):
        return jets.map_jet2(self._fn, point)


def compile_exprs(exprs, variables, name: str = "") -> CompiledMap:
    return CompiledMap(exprs, variables, name)


# --- Geometry files ---

@dataclass(frozen=True)
class GeometrySpec:
    """Parsed geometry file: dimensions, the H-frame and optional extras."""
    name: str
    dim: int
    h_dim: int
    variables: tuple[str, ...]
    frame_names: tuple[str, ...]
    frame: tuple[tuple[Expression, ...], ...]     # frame[i] = components of field i
    connection_kind: str | None = None
    christoffel: dict = field(default_factory=dict)   # (k, i, j), 0-based -> Expression
    curves: dict = field(default_factory=dict)        # name -> components over t
    charts: dict = field(default_factory=dict)        # name -> components over variables
    source: str = "<string>"

    @property
    def codim(self) -> int:
        return self.dim - self.h_dim


_GAMMA_KEY = re.compile(r"gamma_(\d+)_(\d+)_(\d+)$")
_SECTIONS = {"geometry", "frame", "connection", "curves", "charts"}


def _int_field(section, key: str, source: str) -> int:
    raw = section.get(key)
    if raw is None:
        raise SchemaError(f"{source}: [geometry] is missing {key!r}")
    try:
        return int(raw.strip())
    except ValueError:
        raise SchemaError(f"{source}: [geometry] {key} = {raw!r} is not an integer") from None


def _vector(text: str, variables, dim: int, where: str) -> tuple[Expression, ...]:
    try:
        comps = parse_vector(text, variables)
    except ExprSyntaxError as e:
        raise ExprSyntaxError(f"{where}: {e.message}", e.position) from e
    if len(comps) != dim:
        raise DimensionMismatch(f"{where}: expected {dim} components, got {len(comps)}")
    return comps


def _new_parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    return cp


def parse_geometry(text: str, source: str = "<string>") -> GeometrySpec:
    """Parse and validate a geometry file.

    Checks dimensions and free variables only; frame independence is a
    pointwise property checked where the frame is evaluated.
    """
    cp = _new_parser()
    try:
        cp.read_string(text, source=source)
    except configparser.Error as e:
        raise SchemaError(f"{source}: {e}") from e

    unknown = set(cp.sections()) - _SECTIONS
    if unknown:
        raise SchemaError(f"{source}: unknown section(s) {', '.join(sorted(unknown))}")
    if not cp.has_section("geometry"):
        raise SchemaError(f"{source}: missing [geometry] section")

    g = cp["geometry"]
    name = g.get("name", "").strip()
    if not name:
        raise SchemaError(f"{source}: [geometry] is missing 'name'")
    dim = _int_field(g, "dim", source)
    h_dim = _int_field(g, "h_dim", source)
    if h_dim < 1:
        raise SchemaError(f"{source}: h_dim must be at least 1")
    if h_dim >= dim:
        raise SchemaError(f"{source}: q = dim - h_dim must be at least 1 (dim={dim}, h_dim={h_dim})")

    variables = tuple(v.strip() for v in g.get("variables", "").split(",") if v.strip())
    if len(variables) != dim:
        raise DimensionMismatch(f"{source}: {len(variables)} variables for dim={dim}")
    for v in variables:
        if not _IDENT.fullmatch(v) or v in FUNCTIONS or v.startswith("_"):
            raise SchemaError(f"{source}: invalid variable name {v!r}")
    if len(set(variables)) != dim:
        raise SchemaError(f"{source}: duplicate variable names")

    if not cp.has_section("frame"):
        raise SchemaError(f"{source}: missing [frame] section")
    frame_items = list(cp["frame"].items())
    if len(frame_items) != dim:
        raise DimensionMismatch(f"{source}: frame has {len(frame_items)} fields, expected {dim}")
    frame_names = tuple(k for k, _ in frame_items)
    frame = tuple(_vector(v, variables, dim, f"[frame] {k}") for k, v in frame_items)

    connection_kind = None
    christoffel = {}
    if cp.has_section("connection"):
        sec = cp["connection"]
        gamma_keys = [k for k in sec if k != "kind"]
        connection_kind = sec.get("kind", "table" if gamma_keys else "flat").strip()
        if connection_kind not in CONNECTION_KINDS:
            raise SchemaError(f"{source}: unknown connection kind {connection_kind!r}")
        if gamma_keys and connection_kind != "table":
            raise SchemaError(f"{source}: Christoffel entries need kind = table")
        for key in gamma_keys:
            m = _GAMMA_KEY.match(key)
            if not m:
                raise SchemaError(f"{source}: bad connection key {key!r} (want gamma_k_i_j)")
            k, i, j = (int(x) - 1 for x in m.groups())
            if not all(0 <= x < dim for x in (k, i, j)):
                raise SchemaError(f"{source}: {key} out of range for dim={dim}")
            try:
                christoffel[(k, i, j)] = parse_expr(sec[key], variables)
            except ExprSyntaxError as e:
                raise ExprSyntaxError(f"[connection] {key}: {e.message}", e.position) from e

    curves = {}
    if cp.has_section("curves"):
        for k, v in cp["curves"].items():
            curves[k] = _vector(v, (CURVE_VAR,), dim, f"[curves] {k}")

    charts = {}
    if cp.has_section("charts"):
        for k, v in cp["charts"].items():
            charts[k] = _vector(v, variables, dim, f"[charts] {k}")

    log.debug("Parsed geometry %s from %s (n=%d, p=%d)", name, source, dim, h_dim)
    return GeometrySpec(
        name=name,
        dim=dim,
        h_dim=h_dim,
        variables=variables,
        frame_names=frame_names,
        frame=frame,
        connection_kind=connection_kind,
        christoffel=christoffel,
        curves=curves,
        charts=charts,
        source=source,
    )


def load_geometry(path: str) -> GeometrySpec:
    with open(path, encoding="utf-8") as f:
        return parse_geometry(f.read(), source=path)
