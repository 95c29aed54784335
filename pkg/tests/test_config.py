"""Unit tests for config loading, clamping and fallbacks."""

import sys
import os
import tempfile
import unittest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from osculate import config


class ConfigFileTest(unittest.TestCase):
    """Points OSCULATE_CONFIG at a temporary file for each test."""

    def setUp(self):
        self._saved = os.environ.get("OSCULATE_CONFIG")
        self._tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self._tmp.name, "config.ini")
        os.environ["OSCULATE_CONFIG"] = self.path
        config.reload_config()

    def tearDown(self):
        if self._saved is None:
            os.environ.pop("OSCULATE_CONFIG", None)
        else:
            os.environ["OSCULATE_CONFIG"] = self._saved
        config.reload_config()
        self._tmp.cleanup()

    def write(self, text: str):
        with open(self.path, "w") as f:
            f.write(text)
        config.reload_config()


class TestDefaults(ConfigFileTest):

    def test_missing_file_uses_defaults(self):
        self.assertEqual(config.flow_steps(), 256)
        self.assertEqual(config.max_abs_t(), 1.0)
        self.assertEqual(config.arrow_grid(), [2.0 ** -k for k in range(3, 11)])
        self.assertEqual(config.richardson_depth(), 3)
        self.assertEqual(config.tolerance("oracle"), 1e-6)
        self.assertEqual(config.tolerance("noise_floor"), 1e-10)
        self.assertEqual(config.domain_radius(), 1.0)
        self.assertEqual((config.verify_samples(), config.verify_seed(), config.verify_pairs()),
                         (50, 7, 20))
        params = config.newton_params()
        self.assertEqual(params["residual"], 1e-10)
        self.assertEqual(params["fd_step"], 1e-6)

    def test_unknown_tolerance(self):
        with self.assertRaises(KeyError):
            config.tolerance("precision")


class TestOverrides(ConfigFileTest):

    def test_values_are_read(self):
        self.write("[flows]\nsteps = 512\n[verify]\nseed = 99\n")
        self.assertEqual(config.flow_steps(), 512)
        self.assertEqual(config.verify_seed(), 99)

    def test_values_are_clamped(self):
        self.write("[flows]\nsteps = 4\n[newton]\nresidual = 1\n")
        self.assertEqual(config.flow_steps(), 16)
        self.assertEqual(config.newton_params()["residual"], 1e-3)

    def test_invalid_value_falls_back(self):
        self.write("[tolerances]\noracle = banana\n")
        self.assertEqual(config.tolerance("oracle"), 1e-6)

    def test_explicit_grid(self):
        self.write("[richardson]\narrow_grid = 5, 3, 4, 6, 7\n")
        self.assertEqual(config.arrow_grid(), [2.0 ** -k for k in range(3, 8)])

    def test_grid_exponent_is_capped(self):
        self.write("[richardson]\narrow_grid = 3..24\n")
        grid = config.arrow_grid()
        self.assertEqual(len(grid), 18)
        self.assertEqual(grid[-1], 2.0 ** -20)

    def test_short_grid_falls_back(self):
        self.write("[richardson]\narrow_grid = 3..4\n")
        self.assertEqual(len(config.arrow_grid()), 8)

    def test_malformed_file_uses_defaults(self):
        self.write("steps = 4\n")
        self.assertEqual(config.flow_steps(), 256)


if __name__ == '__main__':
    unittest.main()
