"""Unit tests for flow integration and the flow-side oracles."""

import sys
import os
import unittest

import numpy as np

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from osculate.errors import (
    DimensionMismatch,
    DomainError,
    FieldNotInH,
    NotTangentToH,
    StepUnderflow,
)
from osculate.expr import parse_vector
from osculate.flows import (
    FlowMap,
    VectorField,
    arrow_of_flowline,
    check_hug,
    compose_flows,
    flow_commutator_probe,
    integrate_flow,
    oracle_equivalence,
    oracle_second_order,
    parabolic_field,
)
from osculate.geometry import Geometry

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
ORIGIN = np.zeros(3)


def _geometry(name):
    return Geometry.load(os.path.join(ROOT, "geometries", f"{name}.geom"))


class TestIntegration(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")

    def test_linear_flow_is_exact(self):
        x = integrate_flow(self.heis.field("X1"), [0.0, 1.0, 0.0], 0.5)
        np.testing.assert_allclose(x, [0.5, 1.0, -0.25], atol=1e-15)

    def test_batched_times(self):
        ts = np.array([0.25, -0.25, 0.5])
        x = integrate_flow(self.heis.field("X2"), [1.0, 0.0, 0.0], ts)
        self.assertEqual(x.shape, (3, 3))
        np.testing.assert_allclose(x[2], ts / 2, atol=1e-15)

    def test_inverse_undoes_flow(self):
        geom = _geometry("twisted3")
        m = np.array([0.1, -0.2, 0.3])
        field = geom.field("X2")
        x = integrate_flow(field, m, 0.5)
        np.testing.assert_allclose(integrate_flow(field, x, 0.5, inverse=True), m, atol=1e-9)

    def test_compose(self):
        X1, X2 = self.heis.field("X1"), self.heis.field("X2")
        x = compose_flows([X1, X2], ORIGIN, 1.0)
        np.testing.assert_allclose(x, [1.0, 1.0, -0.5], atol=1e-15)
        flow = FlowMap((X1, X2), (False, False))
        np.testing.assert_allclose(flow.inverted()(x, 1.0), ORIGIN, atol=1e-12)

    def test_step_underflow(self):
        with self.assertRaises(StepUnderflow):
            integrate_flow(self.heis.field("X1"), ORIGIN, 0.5, steps=8)

    def test_time_out_of_range(self):
        with self.assertRaises(DomainError):
            integrate_flow(self.heis.field("X1"), ORIGIN, 2.0)

    def test_field_dimension(self):
        with self.assertRaises(DimensionMismatch):
            VectorField(parse_vector("(1, 0)", ("x", "y", "z")), ("x", "y", "z"))


class TestArrows(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")

    def test_product_of_flows(self):
        flow = FlowMap((self.heis.field("X1"), self.heis.field("X2")), (False, False))
        arrow = arrow_of_flowline(flow, ORIGIN, self.heis)
        np.testing.assert_allclose(arrow.h, [1, 1], atol=1e-12)
        np.testing.assert_allclose(arrow.n, [-0.5], atol=1e-12)
        self.assertEqual(arrow.chart_id, "auto@0,0,0")

    def test_normal_generator_is_rejected(self):
        with self.assertRaises(NotTangentToH):
            arrow_of_flowline(FlowMap.of(self.heis.field("X3")), ORIGIN, self.heis)

    def test_parabolic_field_realizes_its_arrow(self):
        for name, m in (("heis3", ORIGIN), ("twisted3", np.array([0.1, -0.2, 0.3]))):
            geom = _geometry(name)
            h, n = np.array([0.5, -0.3]), np.array([0.2])
            arrow = arrow_of_flowline(parabolic_field(geom, h, n, m), m, geom)
            np.testing.assert_allclose(arrow.h, h, atol=1e-8, err_msg=name)
            np.testing.assert_allclose(arrow.n, n, atol=1e-8, err_msg=name)

    def test_parabolic_field_shape(self):
        with self.assertRaises(DimensionMismatch):
            parabolic_field(self.heis, [1.0, 0.0, 0.0], [0.0], ORIGIN)


class TestOracles(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.heis = _geometry("heis3")

    def test_second_order(self):
        report = oracle_second_order(self.heis.field("X1"), self.heis.field("X2"), ORIGIN)
        self.assertTrue(report.passed)
        self.assertTrue(report.exact)
        np.testing.assert_allclose(report.extrapolated_value, [0, 0, -0.5], atol=1e-10)
        np.testing.assert_allclose(report.predicted_value, [0, 0, -0.5])

    def test_second_order_polarized(self):
        geom = _geometry("heis3-polarized")
        report = oracle_second_order(geom.field("Y2"), geom.field("Y1"), ORIGIN)
        self.assertTrue(report.passed)
        np.testing.assert_allclose(report.extrapolated_value, [0, 0, 1], atol=1e-10)

    def test_commutator(self):
        report = flow_commutator_probe(self.heis.field("X1"), self.heis.field("X2"), ORIGIN, self.heis)
        self.assertTrue(report.passed)
        np.testing.assert_allclose(report.extrapolated_value, [-1.0], atol=1e-10)
        np.testing.assert_allclose(report.predicted_value, [-1.0])

    def test_commutator_needs_h_fields(self):
        with self.assertRaises(FieldNotInH):
            flow_commutator_probe(self.heis.field("X1"), self.heis.field("X3"), ORIGIN, self.heis)

    def test_hug(self):
        geom = _geometry("heis3-polarized")
        report = check_hug(geom.frame_field([1.0, 1.0], name="Y1+Y2"), ORIGIN, geom)
        self.assertTrue(report.passed)
        self.assertLessEqual(report.details["defect"], 1e-10)

    def test_equivalence(self):
        report = oracle_equivalence(self.heis.field("X1"), self.heis.field("X2"), ORIGIN, self.heis)
        self.assertTrue(report.passed)
        np.testing.assert_allclose(report.predicted_value["n"], [-0.5])


if __name__ == '__main__':
    unittest.main()
