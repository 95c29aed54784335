"""Unit tests for H-frames, H-charts and osculating groups."""

import sys
import os
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from osculate.errors import DegenerateFrame, GeometryError, NotCentered, NotHChartChange
from osculate.expr import CompiledMap, parse_vector
from osculate.geometry import (
    Geometry,
    ParabolicArrow,
    describe,
    osculating_b,
    osculating_bracket,
    osculating_group,
    parabolic_pushforward,
    rescaled_geometry,
    taylor_change,
    taylor_change_inverse,
    taylor_from_samples,
    validate_h_chart,
)
from osculate.nilpotent import GroupElement, gb_mul

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
XYZ = ("x", "y", "z")
ORIGIN = np.zeros(3)


def _geometry(name):
    return Geometry.load(os.path.join(ROOT, "geometries", f"{name}.geom"))


def _map(text):
    return CompiledMap(parse_vector(text, XYZ), XYZ, name=text)


class TestOsculatingTensor(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")

    def test_heisenberg(self):
        np.testing.assert_allclose(osculating_b(self.heis, ORIGIN).coeffs, [[[0, -0.5], [0.5, 0]]])

    def test_polarized(self):
        b = osculating_b(_geometry("heis3-polarized"), ORIGIN)
        np.testing.assert_allclose(b.coeffs, [[[0, 0], [1, 0]]])
        self.assertEqual(b.iso_class(), "heisenberg-like")

    def test_foliation_is_abelian(self):
        group = osculating_group(_geometry("foliation"), [0.3, -1.0, 2.0])
        self.assertFalse(np.any(group.B.coeffs))
        self.assertEqual(group.B.iso_class(), "abelian")

    def test_twisted(self):
        b = osculating_b(_geometry("twisted3"), ORIGIN)
        np.testing.assert_allclose(b.coeffs, [[[0, 1], [0.5, 0]]], atol=1e-15)

    def test_away_from_origin(self):
        b = osculating_b(self.heis, [0.0, 1.0, 0.0])
        self.assertEqual(b.skew_rank(), 2)
        np.testing.assert_allclose(b.coeffs, [[[0, -0.5], [0.5, 0]]], atol=1e-15)

    def test_bracket(self):
        np.testing.assert_allclose(osculating_bracket(self.heis, ORIGIN, [1, 0], [0, 1]), [-1.0])

    def test_degenerate_frame(self):
        geom = Geometry.load(os.path.join(ROOT, "tests", "fixtures", "degenerate.geom"))
        with self.assertRaises(DegenerateFrame):
            osculating_b(geom, ORIGIN)
        self.assertEqual(osculating_b(geom, [1.0, 0.0, 0.0]).q, 1)

    def test_rescaling_by_a_unit_factor(self):
        geom = _geometry("twisted3")
        point = [0.1, -0.2, 0.3]
        scaled = rescaled_geometry(geom, "exp(y + 0.2)", point)
        np.testing.assert_allclose(osculating_b(scaled, point).coeffs,
                                   osculating_b(geom, point).coeffs, atol=1e-12)
        with self.assertRaises(GeometryError):
            rescaled_geometry(geom, "2 + x", point)

    def test_describe(self):
        data = describe(self.heis, ORIGIN)
        self.assertEqual(data["skew_rank"], 2)
        self.assertEqual(data["bracket_table"], {"[X1,X2]": [-1.0]})
        self.assertEqual(data["chart_id"], "auto@0,0,0")
        self.assertEqual(len(data["group_law_samples"]), 4)


class TestFrame(unittest.TestCase):

    def test_frame_matrix_columns_are_fields(self):
        heis = _geometry("heis3")
        F = heis.frame_matrix([0.0, 1.0, 0.0])
        np.testing.assert_allclose(F[:, 0], [1, 0, -0.5])
        np.testing.assert_allclose(F[:, 1], [0, 1, 0])

    def test_h_residual(self):
        heis = _geometry("heis3")
        # X1 at (0, 1, 0), then the same vector at the origin
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 0.0]])
        vecs = np.array([[1.0, 1.0], [0.0, 0.0], [-0.5, -0.5]])
        res = heis.h_residual(pts, vecs)
        self.assertAlmostEqual(res[0], 0.0)
        self.assertAlmostEqual(res[1], 0.5 / np.sqrt(1.25))

    def test_unknown_names(self):
        heis = _geometry("heis3")
        with self.assertRaises(GeometryError):
            heis.field("X9")
        with self.assertRaises(GeometryError):
            heis.curve("zeta")
        with self.assertRaises(GeometryError):
            heis.chart("polar")


class TestHCharts(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")

    def test_identity_is_an_h_chart_at_origin(self):
        check = validate_h_chart(self.heis, self.heis.chart("identity"), ORIGIN)
        self.assertTrue(check)
        self.assertEqual(check.residual, 0.0)

    def test_translation_is_not_an_h_chart_off_origin(self):
        check = validate_h_chart(self.heis, _map("(x, y - 1, z)"), [0.0, 1.0, 0.0])
        self.assertFalse(check.valid)
        self.assertAlmostEqual(check.residual, 0.5 / np.sqrt(1.25))

    def test_not_centered(self):
        with self.assertRaises(NotCentered):
            validate_h_chart(self.heis, self.heis.chart("identity"), [0.0, 1.0, 0.0])

    def test_shear_is_an_h_chart(self):
        self.assertTrue(validate_h_chart(self.heis, self.heis.chart("shear"), ORIGIN))


class TestTaylorChange(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")
        cls.shear = cls.heis.chart("shear")

    def test_shear_moves_the_normal_part(self):
        g = taylor_change(self.shear, GroupElement([1.0, 0.0], [0.0]))
        np.testing.assert_allclose(g.h, [1, 0])
        np.testing.assert_allclose(g.n, [1])

    def test_inverse(self):
        arrow = GroupElement([0.4, -0.3], [0.2])
        back = taylor_change_inverse(self.shear, taylor_change(self.shear, arrow))
        self.assertTrue(back.allclose(arrow, 1e-15))

    def test_group_law_is_covariant(self):
        B = osculating_b(self.heis, ORIGIN)
        B2 = osculating_b(_geometry("heis3-sheared"), ORIGIN)
        np.testing.assert_allclose(B2.coeffs, [[[2, -0.5], [0.5, 0]]])
        rng = np.random.default_rng(3)
        a = GroupElement(rng.uniform(-1, 1, (2, 1000)), rng.uniform(-1, 1, (1, 1000)))
        b = GroupElement(rng.uniform(-1, 1, (2, 1000)), rng.uniform(-1, 1, (1, 1000)))
        lhs = taylor_change(self.shear, gb_mul(B, a, b))
        rhs = gb_mul(B2, taylor_change(self.shear, a), taylor_change(self.shear, b))
        self.assertLessEqual(float(np.max(lhs.distance(rhs))), 1e-10)

    def test_rejects_non_h_changes(self):
        arrow = GroupElement([1.0, 0.0], [0.0])
        for text in ("(x, y, z + y)", "(x + 1, y, z)", "(x, x, z)"):
            with self.assertRaises(NotHChartChange, msg=text):
                taylor_change(_map(text), arrow)


class TestPushforward(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")
        cls.sheared = _geometry("heis3-sheared")

    def _arrow(self, h, n):
        return ParabolicArrow(ORIGIN, h, n, "auto@0,0,0")

    def test_shear(self):
        out = parabolic_pushforward(self.heis.chart("shear"), self._arrow([1, 0], [0]),
                                    self.heis, self.sheared)
        np.testing.assert_allclose(out.h, [1, 0], atol=1e-15)
        np.testing.assert_allclose(out.n, [1], atol=1e-15)

    def test_swap(self):
        out = parabolic_pushforward(_map("(y, x, -z)"), self._arrow([1, 0], [0]),
                                    self.heis, self.heis)
        np.testing.assert_allclose(out.h, [0, 1], atol=1e-15)
        np.testing.assert_allclose(out.n, [0], atol=1e-15)

    def test_identity(self):
        arrow = self._arrow([0.3, -0.2], [0.7])
        out = parabolic_pushforward(self.heis.chart("identity"), arrow, self.heis, self.heis)
        np.testing.assert_allclose(out.h, arrow.h, atol=1e-15)
        np.testing.assert_allclose(out.n, arrow.n, atol=1e-15)
        self.assertEqual(out.to_json()["chart_id"], "auto@0,0,0")

    def _assert_same_arrow(self, a, b, atol=1e-10):
        np.testing.assert_allclose(a.base, b.base, atol=atol)
        np.testing.assert_allclose(a.h, b.h, atol=atol)
        np.testing.assert_allclose(a.n, b.n, atol=atol)
        self.assertEqual(a.chart_id, b.chart_id)

    def test_composition_of_swap_and_shear(self):
        m = np.array([0.2, -0.1, 0.3])
        swap, shear = _map("(y, x, -z)"), self.heis.chart("shear")
        for h, n in (([1.0, 0.0], [0.0]), ([0.3, -0.7], [0.4]), ([-0.5, 0.9], [-1.2])):
            arrow = ParabolicArrow(m, h, n, self.heis.auto_chart(m).chart_id)
            swapped = parabolic_pushforward(swap, arrow, self.heis, self.heis)
            twice = parabolic_pushforward(shear, swapped, self.heis, self.sheared)
            direct = parabolic_pushforward(_map("(y, x, -z + y^2)"), arrow, self.heis, self.sheared)
            self._assert_same_arrow(twice, direct)

    def test_shear_then_its_inverse(self):
        m = np.array([0.2, -0.1, 0.3])
        arrow = ParabolicArrow(m, [0.6, 0.25], [-0.35], self.heis.auto_chart(m).chart_id)
        there = parabolic_pushforward(self.heis.chart("shear"), arrow, self.heis, self.sheared)
        back = parabolic_pushforward(_map("(x, y, z - x^2)"), there, self.sheared, self.heis)
        self._assert_same_arrow(back, arrow)

    def test_agrees_with_taylor_change_at_origin(self):
        # both auto charts at the origin are the identity
        shear = self.heis.chart("shear")
        rng = np.random.default_rng(17)
        for _ in range(50):
            h, n = rng.uniform(-1, 1, 2), rng.uniform(-1, 1, 1)
            out = parabolic_pushforward(shear, self._arrow(h, n), self.heis, self.sheared)
            expected = taylor_change(shear, GroupElement(h, n))
            np.testing.assert_allclose(out.h, expected.h, atol=1e-12)
            np.testing.assert_allclose(out.n, expected.n, atol=1e-12)


class TestSampledTaylor(unittest.TestCase):

    def test_parabola(self):
        heis = _geometry("heis3")
        chart = heis.auto_chart(ORIGIN)
        ts = [2.0 ** -k for k in range(3, 9)]
        plus = [np.array([t, 0.0, t * t]) for t in ts]
        minus = [np.array([-t, 0.0, t * t]) for t in ts]
        est = taylor_from_samples(chart, heis.p, ts, plus, minus, ORIGIN)
        np.testing.assert_allclose(est.h, [1, 0], atol=1e-12)
        np.testing.assert_allclose(est.n, [1], atol=1e-12)
        np.testing.assert_allclose(est.normal_velocity, [0], atol=1e-12)
        self.assertEqual(est.raw_h.shape, (6, 2))


if __name__ == '__main__':
    unittest.main()
