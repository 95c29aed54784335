"""Unit tests for second-order jets and curve expansions."""

import sys
import os
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from osculate.errors import DivisionByZero, NonSmoothSample
from osculate.expr import CompiledMap, parse_vector
from osculate.jets import Jet2, curve_jet2, map_jet2, seed


def _curve(text):
    return CompiledMap(parse_vector(text, ("t",)), ("t",), name=text)


class TestJetArithmetic(unittest.TestCase):

    def test_product_rule(self):
        value, jac, hess = map_jet2(lambda x, y: (x * y,), [1.0, 2.0])
        self.assertEqual(value[0], 2.0)
        np.testing.assert_array_equal(jac[0], [2.0, 1.0])
        np.testing.assert_array_equal(hess[0], [[0.0, 1.0], [1.0, 0.0]])

    def test_square_has_single_hessian_entry(self):
        _, jac, hess = map_jet2(lambda x, y, z: (z + x ** 2,), np.zeros(3))
        np.testing.assert_array_equal(jac[0], [0.0, 0.0, 1.0])
        expected = np.zeros((3, 3))
        expected[0, 0] = 2.0
        np.testing.assert_array_equal(hess[0], expected)

    def test_constant_component(self):
        value, jac, hess = map_jet2(lambda x: (5.0,), [3.0])
        self.assertEqual(value[0], 5.0)
        self.assertFalse(np.any(jac))
        self.assertFalse(np.any(hess))

    def test_quotient(self):
        # d/dx 1/x = -1/x^2, d2/dx2 = 2/x^3
        _, jac, hess = map_jet2(lambda x: (1.0 / x,), [2.0])
        self.assertAlmostEqual(jac[0, 0], -0.25)
        self.assertAlmostEqual(hess[0, 0, 0], 0.25)

    def test_division_by_zero(self):
        (x,) = seed([0.0])
        with self.assertRaises(DivisionByZero):
            _ = 1.0 / x
        with self.assertRaises(DivisionByZero):
            _ = x / 0.0

    def test_transcendentals(self):
        (x,) = seed([0.3])
        s = x.sin()
        self.assertAlmostEqual(s.grad[0], np.cos(0.3))
        self.assertAlmostEqual(s.hess[0, 0], -np.sin(0.3))
        e = x.exp()
        self.assertAlmostEqual(e.hess[0, 0], np.exp(0.3))

    def test_integer_powers_only(self):
        (x,) = seed([2.0])
        with self.assertRaises(TypeError):
            _ = x ** 0.5
        cube = x ** 3
        self.assertEqual(cube.value, 8.0)
        self.assertEqual(cube.grad[0], 12.0)
        self.assertEqual(cube.hess[0, 0], 12.0)

    def test_numpy_scalar_on_the_left(self):
        (x,) = seed([1.5])
        out = np.float64(2.0) * x
        self.assertIsInstance(out, Jet2)
        self.assertEqual(out.grad[0], 2.0)


class TestBatchedJets(unittest.TestCase):

    def test_batch_matches_pointwise(self):
        pts = np.array([[0.1, 0.2, -0.4], [1.0, -2.0, 0.5]])

        def f(x, y):
            return (x * y + x ** 2, (x - y).sin())

        value, jac, hess = map_jet2(f, pts)
        self.assertEqual(value.shape, (2, 3))
        self.assertEqual(jac.shape, (2, 2, 3))
        self.assertEqual(hess.shape, (2, 2, 2, 3))
        for k in range(3):
            v, j, h = map_jet2(f, pts[:, k])
            np.testing.assert_allclose(value[:, k], v)
            np.testing.assert_allclose(jac[..., k], j)
            np.testing.assert_allclose(hess[..., k], h)

    def test_hessian_is_symmetric(self):
        value, _, hess = map_jet2(lambda x, y: (x * y * y / (1.0 + x),), [0.7, -1.3])
        np.testing.assert_array_equal(hess[0], hess[0].T)


class TestCurveJet(unittest.TestCase):

    def test_compiled_curve_is_exact(self):
        jet = curve_jet2(_curve("(t, t^2, sin(t))"), 0.0)
        self.assertEqual(jet.method, "jet")
        np.testing.assert_array_equal(jet.first, [1.0, 0.0, 1.0])
        np.testing.assert_array_equal(jet.second, [0.0, 2.0, 0.0])

    def test_black_box_curve(self):
        jet = curve_jet2(lambda t: np.array([np.sin(t), t ** 3]), 0.3)
        self.assertEqual(jet.method, "richardson")
        np.testing.assert_allclose(jet.first, [np.cos(0.3), 3 * 0.09], atol=1e-9)
        np.testing.assert_allclose(jet.second, [-np.sin(0.3), 6 * 0.3], atol=1e-6)

    def test_kink_is_rejected(self):
        with self.assertRaises(NonSmoothSample):
            curve_jet2(lambda t: np.array([abs(t)]), 0.0)


if __name__ == '__main__':
    unittest.main()
