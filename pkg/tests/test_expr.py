"""Unit tests for the expression DSL and geometry-file parsing."""

import glob
import sys
import os
import unittest

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from osculate.errors import (
    DimensionMismatch,
    DivisionByZero,
    ExprSyntaxError,
    NonIntegerExponent,
    SchemaError,
    UnboundVariable,
    UnknownIdentifier,
)
from osculate.expr import (
    BinOp,
    CompiledMap,
    Func,
    Neg,
    Num,
    Pow,
    Var,
    eval_jet,
    evaluate,
    format_expr,
    load_geometry,
    parse_expr,
    parse_geometry,
    parse_vector,
)
from osculate.jets import seed

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
GEOMETRIES = sorted(glob.glob(os.path.join(ROOT, "geometries", "*.geom")))
FIXTURES = os.path.join(ROOT, "tests", "fixtures")
XYZ = ("x", "y", "z")

HEIS = """
[geometry]
name = heis3
dim = 3
h_dim = 2
variables = x, y, z

[frame]
X1 = (1, 0, -y/2)
X2 = (0, 1, x/2)
X3 = (0, 0, 1)
"""


def _expressions():
    leaves = st.one_of(
        st.floats(min_value=0, max_value=1e6, allow_nan=False, allow_infinity=False).map(abs).map(Num),
        st.sampled_from(XYZ).map(Var),
    )

    def extend(inner):
        return st.one_of(
            inner.map(Neg),
            st.tuples(st.sampled_from("+-*/"), inner, inner).map(lambda a: BinOp(*a)),
            st.tuples(inner, st.integers(-3, 4)).map(lambda a: Pow(*a)),
            st.tuples(st.sampled_from(("sin", "cos", "exp")), inner).map(lambda a: Func(*a)),
        )

    return st.recursive(leaves, extend, max_leaves=12)


class TestParser(unittest.TestCase):

    def test_precedence(self):
        self.assertEqual(parse_expr("x + 2*y", ["x", "y"]),
                         BinOp("+", Var("x"), BinOp("*", Num(2.0), Var("y"))))

    def test_unary_minus_binds_tighter_than_division(self):
        e = parse_expr("-y/2", XYZ)
        self.assertEqual(e, BinOp("/", Neg(Var("y")), Num(2.0)))
        self.assertEqual(evaluate(e, {"y": 3.0}), -1.5)

    def test_power_binds_tighter_than_minus(self):
        self.assertEqual(parse_expr("-x^2", XYZ), Neg(Pow(Var("x"), 2)))

    def test_power_is_right_associative(self):
        e = parse_expr("x ^ 2 ^ 3", XYZ)
        self.assertEqual(e, Pow(Var("x"), 8))
        self.assertEqual(evaluate(e, {"x": 2.0}), 256.0)

    def test_negative_exponent(self):
        self.assertEqual(parse_expr("x^-1", XYZ), Pow(Var("x"), -1))

    def test_functions(self):
        self.assertEqual(parse_expr("sin(x)*exp(y)", XYZ),
                         BinOp("*", Func("sin", Var("x")), Func("exp", Var("y"))))

    def test_syntax_error_position(self):
        with self.assertRaises(ExprSyntaxError) as cm:
            parse_expr("x + * y", XYZ)
        self.assertEqual(cm.exception.position, 4)
        self.assertIn("at position 4", str(cm.exception))

    def test_unbalanced_parenthesis(self):
        with self.assertRaises(ExprSyntaxError) as cm:
            parse_expr("(x + y", XYZ)
        self.assertEqual(cm.exception.position, 6)

    def test_unknown_identifier(self):
        with self.assertRaises(UnknownIdentifier) as cm:
            parse_expr("x + w", XYZ)
        self.assertEqual(cm.exception.name, "w")
        self.assertEqual(cm.exception.position, 4)

    def test_non_integer_exponents(self):
        for text in ("x^0.5", "x^y", "x^(1/3)"):
            with self.assertRaises(NonIntegerExponent):
                parse_expr(text, XYZ)

    def test_vector(self):
        comps = parse_vector("(1, 0, -y/2)", XYZ)
        self.assertEqual(len(comps), 3)
        self.assertEqual(comps[0], Num(1.0))

    def test_vector_error_positions_are_absolute(self):
        with self.assertRaises(ExprSyntaxError) as cm:
            parse_vector("(1, 0, -y/)", XYZ)
        self.assertEqual(cm.exception.position, 10)


class TestPrinter(unittest.TestCase):

    def test_canonical_text(self):
        self.assertEqual(format_expr(parse_expr("(x)+((2*y))", XYZ)), "x + 2*y")
        self.assertEqual(format_expr(parse_expr("x - (y - z)", XYZ)), "x - (y - z)")
        self.assertEqual(format_expr(parse_expr("(-x)^2", XYZ)), "(-x)^2")

    def test_bundled_corpus_round_trips(self):
        self.assertTrue(GEOMETRIES)
        for path in GEOMETRIES:
            spec = load_geometry(path)
            for field in spec.frame:
                for e in field:
                    text = format_expr(e)
                    self.assertEqual(parse_expr(text, spec.variables), e, msg=f"{path}: {text}")

    @given(_expressions())
    @settings(max_examples=300, deadline=None)
    def test_print_parse_is_fixed_point(self, e):
        text = format_expr(e)
        again = parse_expr(text, XYZ)
        self.assertEqual(again, e)
        self.assertEqual(format_expr(again), text)


class TestEvaluation(unittest.TestCase):

    def test_jet_of_product(self):
        x, y = seed([1.0, 2.0])
        jet = eval_jet(parse_expr("x*y", ["x", "y"]), {"x": x, "y": y})
        self.assertEqual(jet.value, 2.0)
        np.testing.assert_array_equal(jet.grad, [2.0, 1.0])

    def test_jet_of_constant(self):
        jet = eval_jet(parse_expr("5", []), {})
        self.assertEqual(jet.value, 5.0)
        self.assertFalse(np.any(jet.grad))
        self.assertFalse(np.any(jet.hess))

    def test_jet_value_matches_plain_evaluation(self):
        e = parse_expr("sin(x)*y^2 - exp(z)/(1 + x^2)", XYZ)
        pt = [0.4, -1.2, 0.3]
        jet = eval_jet(e, dict(zip(XYZ, seed(pt))))
        self.assertEqual(jet.value, evaluate(e, dict(zip(XYZ, pt))))

    def test_division_by_zero(self):
        with self.assertRaises(DivisionByZero):
            evaluate(parse_expr("1/x", XYZ), {"x": 0.0})

    def test_unbound_variable(self):
        with self.assertRaises(UnboundVariable):
            evaluate(parse_expr("x + y", XYZ), {"x": 1.0})

    def test_compiled_map_batches(self):
        f = CompiledMap(parse_vector("(x*y, 2, z)", XYZ), XYZ)
        pts = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(f.evaluate(pts), [[3.0, 8.0], [2.0, 2.0], [5.0, 6.0]])


class TestGeometryFiles(unittest.TestCase):

    def test_heisenberg(self):
        spec = parse_geometry(HEIS)
        self.assertEqual(spec.name, "heis3")
        self.assertEqual((spec.dim, spec.h_dim, spec.codim), (3, 2, 1))
        self.assertEqual(spec.frame_names, ("X1", "X2", "X3"))
        self.assertEqual(spec.frame[0][2], BinOp("/", Neg(Var("y")), Num(2.0)))
        self.assertIsNone(spec.connection_kind)

    def test_all_bundled_geometries_parse(self):
        names = {load_geometry(p).name for p in GEOMETRIES}
        self.assertTrue({"heis3", "heis3-polarized", "foliation"} <= names)

    def test_table_connection(self):
        spec = parse_geometry(HEIS + "\n[connection]\ngamma_3_1_2 = -1/2\ngamma_3_2_1 = 1/2\n")
        self.assertEqual(spec.connection_kind, "table")
        self.assertEqual(set(spec.christoffel), {(2, 0, 1), (2, 1, 0)})

    def test_curves_use_t(self):
        spec = parse_geometry(HEIS + "\n[curves]\na = (t, t, t^2)\n")
        self.assertEqual(spec.curves["a"][2], Pow(Var("t"), 2))

    def _fixture(self, name):
        return load_geometry(os.path.join(FIXTURES, name))

    def test_fixture_syntax_error(self):
        with self.assertRaises(ExprSyntaxError) as cm:
            self._fixture("bad_syntax.geom")
        self.assertEqual(cm.exception.position, 10)
        self.assertIn("[frame] X1", str(cm.exception))

    def test_fixture_unknown_identifier(self):
        with self.assertRaises(UnknownIdentifier) as cm:
            self._fixture("unknown_identifier.geom")
        self.assertEqual(cm.exception.name, "w")

    def test_fixture_fractional_power(self):
        with self.assertRaises(NonIntegerExponent):
            self._fixture("fractional_power.geom")

    def test_fixture_short_field(self):
        with self.assertRaises(DimensionMismatch):
            self._fixture("short_field.geom")

    def test_fixture_full_rank(self):
        with self.assertRaises(SchemaError):
            self._fixture("full_rank.geom")

    def test_schema_errors(self):
        bad = [
            HEIS.replace("[frame]", "[frames]"),
            HEIS.replace("name = heis3\n", ""),
            HEIS.replace("variables = x, y, z", "variables = x, x, z"),
            HEIS.replace("variables = x, y, z", "variables = x, _y, z"),
            HEIS + "\n[connection]\nkind = parallel\n",
            HEIS + "\n[connection]\ngamma_4_1_1 = 1\n",
        ]
        for text in bad:
            with self.assertRaises(SchemaError, msg=text):
                parse_geometry(text)

    def test_wrong_variable_count(self):
        with self.assertRaises(DimensionMismatch):
            parse_geometry(HEIS.replace("variables = x, y, z", "variables = x, y"))


if __name__ == '__main__':
    unittest.main()
