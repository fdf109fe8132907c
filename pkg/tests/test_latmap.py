import unittest

import numpy as np

from egmrank.errors import DataError, LayoutMismatchError, ShapeMismatchError
from egmrank.latmap import (
    ActivationMap,
    BlockSet,
    cell_activation_map,
    compare_maps,
    detect_blocks,
    egm_activation_map,
)
from egmrank.leadfield import ElectrodeArray
from egmrank.sigmamap import Sigma2Map
from egmrank.simulation import LATField, TissueModel, generate_ap_template, synthesize_cell_signals
from egmrank.spectral import BeatWindow

# 3x3 activation pattern with a late bottom row and right column
_L_SHAPE = [0.0, 0.0, 30.0, 0.0, 0.0, 30.0, 30.0, 30.0, 30.0]


class TestActivationMap(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(DataError):
            ActivationMap([0.0], "centroid")
        with self.assertRaises(DataError):
            ActivationMap([np.inf], "cell-threshold")
        with self.assertRaises(LayoutMismatchError):
            ActivationMap([0.0, 1.0, 2.0], "cell-threshold", (2, 2))
        with self.assertRaises(LayoutMismatchError):
            ActivationMap([0.0], "cell-threshold").grid()

    def test_shift_and_detection(self):
        act_map = ActivationMap([1.0, np.nan, 3.0, 4.0], "steepest-descent", (2, 2))

        np.testing.assert_array_equal(act_map.detected, [True, False, True, True])
        shifted = act_map.shifted(2.5)
        np.testing.assert_array_equal(shifted.grid(), [[3.5, np.nan], [5.5, 6.5]])
        self.assertEqual(shifted.method, "steepest-descent")


class TestCellActivation(unittest.TestCase):
    def test_crossing_plus_delay(self):
        template = generate_ap_template()
        tissue = TissueModel(1, 4, 1.0)
        delays = np.array([0.0, 10.0, 25.0, np.inf])
        field = synthesize_cell_signals(tissue, LATField.from_delays(delays, (1, 4)), [template])

        act_map = cell_activation_map(field)
        crossing = template.crossing_time(-40.0)
        np.testing.assert_allclose(act_map.lat[:3], crossing + delays[:3], atol=1e-9)
        self.assertTrue(np.isnan(act_map.lat[3]))
        self.assertEqual(act_map.shape, (1, 4))
        self.assertEqual(act_map.method, "cell-threshold")

    def test_linear_interpolation(self):
        traces = np.array(
            [
                [-100.0, -50.0, -30.0, 0.0],
                [-100.0, -100.0, -60.0, -20.0],
                [-90.0, -90.0, -90.0, -90.0],
                [0.0, 0.0, 0.0, 0.0],
            ]
        )
        act_map = cell_activation_map(traces, threshold=-40.0, rate=1000.0)

        np.testing.assert_allclose(act_map.lat[:2], [1.5, 2.5])
        self.assertTrue(np.all(np.isnan(act_map.lat[2:])))
        self.assertIsNone(act_map.shape)

        half_rate = cell_activation_map(traces, threshold=-40.0, rate=500.0)
        np.testing.assert_allclose(half_rate.lat[:2], [3.0, 5.0])

    def test_threshold_outside_range_warns(self):
        with self.assertLogs("egmrank.latmap", level="WARNING"):
            act_map = cell_activation_map(np.zeros((2, 5)), threshold=10.0)
        self.assertFalse(act_map.detected.any())


class TestEgmActivation(unittest.TestCase):
    def _beat(self, samples, layout=(1, 2)):
        array = ElectrodeArray.rectangular(*layout, 1.0)
        return BeatWindow(samples, (float(samples.shape[1]), 0.0), 0, 1000.0, array)

    def test_steepest_downstroke(self):
        n = np.arange(100, dtype=np.float64)
        samples = np.vstack([-np.tanh((n - 40.3) / 3.0), -2.0 * np.tanh((n - 55.0) / 3.0)])
        act_map = egm_activation_map(self._beat(samples))

        self.assertAlmostEqual(act_map.lat[0], 40.3, delta=0.1)
        self.assertAlmostEqual(act_map.lat[1], 55.0, delta=0.1)
        np.testing.assert_allclose(act_map.scores, [0.5, 1.0], rtol=1e-6)
        self.assertEqual(act_map.shape, (1, 2))

    def test_weak_and_flat_channels(self):
        n = np.arange(100, dtype=np.float64)
        strong = -np.tanh((n - 50.0) / 3.0)
        samples = np.vstack([strong, 0.01 * strong, np.zeros(100), strong])
        act_map = egm_activation_map(self._beat(samples, (2, 2)))

        detected = act_map.detected
        np.testing.assert_array_equal(detected, [True, False, False, True])
        relaxed = egm_activation_map(self._beat(samples, (2, 2)), floor=0.0)
        np.testing.assert_array_equal(relaxed.detected, [True, True, False, True])

    def test_layout_mismatch(self):
        with self.assertRaises(LayoutMismatchError):
            egm_activation_map(self._beat(np.zeros((2, 10))), layout=(2, 2))


class TestBlocks(unittest.TestCase):
    def setUp(self):
        self.act_map = ActivationMap(_L_SHAPE, "steepest-descent", (3, 3))

    def test_detects_late_edges(self):
        blocks = detect_blocks(self.act_map)

        self.assertEqual(blocks.edges, [(1, 2), (3, 6), (4, 5), (4, 7)])
        self.assertIn((5, 4), blocks)
        self.assertEqual(blocks.channels, {1, 2, 3, 4, 5, 6, 7})
        self.assertEqual(blocks.components(), [[(4, 5), (4, 7)], [(1, 2)], [(3, 6)]])

    def test_zero_threshold_flags_every_edge(self):
        self.assertEqual(len(detect_blocks(self.act_map, threshold=0.0)), 12)

    def test_monotone_in_threshold(self):
        lat = np.random.default_rng(0).uniform(0.0, 40.0, 25)
        act_map = ActivationMap(lat, "steepest-descent", (5, 5))
        previous = None
        for threshold in (0.0, 5.0, 12.0, 20.0, 35.0):
            edges = set(detect_blocks(act_map, threshold=threshold).edges)
            if previous is not None:
                self.assertTrue(edges <= previous)
            previous = edges

    def test_undetected_channels_are_skipped(self):
        lat = list(_L_SHAPE)
        lat[4] = np.nan
        blocks = detect_blocks(ActivationMap(lat, "steepest-descent", (3, 3)))
        self.assertEqual(blocks.edges, [(1, 2), (3, 6)])

    def test_layout_checks(self):
        with self.assertRaises(LayoutMismatchError):
            detect_blocks(ActivationMap([0.0] * 4, "cell-threshold"))
        with self.assertRaises(LayoutMismatchError):
            detect_blocks(self.act_map, layout=(2, 2))
        with self.assertRaises(LayoutMismatchError):
            BlockSet([(0, 4)], 12.0, (3, 3))


class TestCompareMaps(unittest.TestCase):
    def setUp(self):
        self.act_map = ActivationMap(_L_SHAPE, "steepest-descent", (3, 3))
        self.blocks = detect_blocks(self.act_map)
        self.sigma_map = Sigma2Map(np.array([[0.2, 0.01], [0.3, 0.0]]), 2, (3, 3))

    def test_report(self):
        report = compare_maps(self.act_map, self.blocks, self.sigma_map)

        self.assertEqual(report.elevated, [(0, 0), (1, 0)])
        self.assertEqual(report.elevated_with_block, [(1, 0)])
        self.assertEqual(report.elevated_without_block, [(0, 0)])
        self.assertEqual(report.blocks_without_elevation, [(1, 2), (4, 5)])
        self.assertEqual(report.block_fraction, 0.5)
        self.assertEqual(report.to_dict()["block_edges"], 4)

    def test_nothing_elevated(self):
        report = compare_maps(self.act_map, self.blocks, self.sigma_map, threshold=0.5)
        self.assertEqual(report.block_fraction, 0.0)
        self.assertEqual(len(report.blocks_without_elevation), 4)

    def test_layout_mismatch(self):
        other = Sigma2Map(np.zeros((3, 3)), 2, (4, 4))
        with self.assertRaises(ShapeMismatchError):
            compare_maps(self.act_map, self.blocks, other)


if __name__ == "__main__":
    unittest.main()
