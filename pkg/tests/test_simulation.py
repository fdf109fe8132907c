import heapq
import math
import unittest

import numpy as np

from egmrank.errors import (
    EnvelopeError,
    InsufficientDurationError,
    InvalidTemplateError,
    InvalidTissueError,
)
from egmrank.simulation import (
    APParams,
    APTemplate,
    LATField,
    TissueModel,
    colliding_scenario,
    diagonal_block_scenario,
    fractional_delay_taps,
    generate_ap_template,
    homogeneous_scenario,
    line_mask,
    morphology_family,
    paint_patches,
    plane_wave_scenario,
    rect_mask,
    solve_lat,
    synthesize_cell_signals,
    synthesize_ecg,
    two_region_scenario,
    uniform,
)


def _dijkstra(conductivity: np.ndarray, source: int, spacing: float, v0: float) -> np.ndarray:
    """4-connected shortest travel times, an upper bound for fast marching."""
    rows, cols = conductivity.shape
    flat = conductivity.reshape(-1)
    dist = np.full(flat.size, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, idx = heapq.heappop(heap)
        if d > dist[idx]:
            continue
        r, c = divmod(idx, cols)
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if 0 <= nr < rows and 0 <= nc < cols and flat[nr * cols + nc] > 0:
                nb = nr * cols + nc
                step = spacing / (v0 * math.sqrt(flat[nb]))
                if d + step < dist[nb]:
                    dist[nb] = d + step
                    heapq.heappush(heap, (d + step, nb))
    return dist


class TestTemplates(unittest.TestCase):
    def test_default_template(self):
        template = generate_ap_template(rate=1000.0, duration=600.0)
        samples = template.samples

        self.assertEqual(len(template), 600)
        self.assertEqual(template.duration_ms, 600.0)
        self.assertEqual(samples[0], -80.0)
        self.assertLess(abs(samples[-1] + 80.0), 1.0)
        upcrossings = np.flatnonzero((samples[:-1] < -40.0) & (samples[1:] >= -40.0))
        self.assertEqual(upcrossings.size, 1)
        self.assertAlmostEqual(samples.max(), 20.0, places=9)

    def test_crossing_time_interpolates(self):
        template = generate_ap_template()
        # t=0 ms is -80 mV, t=1 ms is half way up the raised cosine at -30 mV
        self.assertAlmostEqual(template.crossing_time(-40.0), 0.8, places=9)
        self.assertTrue(math.isnan(template.crossing_time(50.0)))

    def test_plateau_changes_the_spectrum(self):
        ap1 = generate_ap_template(APParams.preset("AP1"), 1000.0, 600.0, normalize=True)
        ap2 = generate_ap_template(APParams.preset("AP2"), 1000.0, 600.0, normalize=True)
        n = np.arange(600)
        basis = np.exp(-2j * np.pi * np.outer(np.arange(1, 301), n) / 600)
        s1 = np.abs(basis @ ap1.samples)
        s2 = np.abs(basis @ ap2.samples)
        similarity = s1 @ s2 / (np.linalg.norm(s1) * np.linalg.norm(s2))
        self.assertLess(similarity, 1.0 - 1e-6)

    def test_short_duration_names_the_envelope(self):
        with self.assertRaises(EnvelopeError) as ctx:
            generate_ap_template(duration=10.0)
        self.assertIn("5*repolarization", str(ctx.exception))
        self.assertIsInstance(ctx.exception, InvalidTemplateError)

    def test_normalize(self):
        template = generate_ap_template().normalize()

        self.assertTrue(template.normalized)
        self.assertEqual(template.resting_potential, 0.0)
        self.assertAlmostEqual(float(np.linalg.norm(template.samples)), 1.0, places=12)
        self.assertIs(template.normalize(), template)

    def test_template_validation(self):
        with self.assertRaises(InvalidTemplateError):
            APTemplate(np.full(100, -80.0), 1000.0, -80.0)
        with self.assertRaises(InvalidTemplateError):
            APTemplate(np.array([0.5, 0.5]), 1000.0, 0.0, normalized=True)
        with self.assertRaises(InvalidTemplateError):
            APParams(repolarization_ms=0.0)

    def test_presets_and_replace(self):
        ap1 = APParams.preset("AP1")
        ap2 = APParams.preset("ap2")

        self.assertEqual(ap1.plateau_ms, 150.0)
        self.assertEqual(ap2.plateau_ms, 80.0)
        self.assertEqual(ap1.replace(plateau_ms=80.0), ap2)
        self.assertEqual(APParams._from_dict(ap1.to_dict()), ap1)
        with self.assertRaises(InvalidTemplateError):
            APParams.preset("AP9")

    def test_morphology_family(self):
        family = morphology_family(plateaus_ms=(100.0, 50.0))

        self.assertEqual(len(family), 3)
        self.assertTrue(all(t.normalized for t in family))
        np.testing.assert_array_equal(
            family[0].samples, generate_ap_template(normalize=True).samples
        )
        self.assertEqual(family[2].params.plateau_ms, 50.0)


class TestTissue(unittest.TestCase):
    def test_masks(self):
        rect = rect_mask((10, 10), (2, 4), (3, 6))
        self.assertEqual(int(rect.sum()), 6)
        self.assertTrue(rect[2, 3] and rect[3, 5] and not rect[4, 3])

        line = line_mask((10, 10), (0.0, 0.0), (9.0, 9.0), 1.0)
        self.assertTrue(all(line[i, i] for i in range(10)))
        self.assertFalse(line[0, 9])

        with self.assertRaises(InvalidTissueError):
            line_mask((10, 10), (0.0, 0.0), (9.0, 9.0), 0.0)
        with self.assertRaises(InvalidTissueError):
            rect_mask((10, 10), (4, 4), (0, 3))

    def test_paint_patches_rejects_contradictions(self):
        a = rect_mask((10, 10), (0, 5), (0, 5))
        b = rect_mask((10, 10), (4, 8), (4, 8))

        same = paint_patches(uniform(10, 10), [("a", a, 0.5), ("b", b, 0.5)])
        self.assertEqual(int(np.sum(same == 0.5)), int(np.sum(a | b)))
        with self.assertRaises(InvalidTissueError) as ctx:
            paint_patches(uniform(10, 10), [("a", a, 0.5), ("b", b, 0.1)])
        self.assertIn("a", str(ctx.exception))
        self.assertIn("b overlaps", str(ctx.exception))

    def test_tissue_model(self):
        tissue = TissueModel(3, 4, 0.5, 1.0, 0, [(5, 2.0)])

        self.assertEqual(tissue.n_cells, 12)
        self.assertEqual(tissue.cell_index(1, 1), 5)
        x, y = tissue.coordinates
        self.assertEqual((x[5], y[5]), (0.5, 0.5))
        self.assertFalse(tissue.conductivity.flags.writeable)

        zero = uniform(3, 4)
        zero[0, 0] = 0.0
        with self.assertRaises(InvalidTissueError):
            TissueModel(3, 4, 0.5, zero, 0, [(0, 0.0)])
        with self.assertRaises(InvalidTissueError):
            TissueModel(3, 4, 0.5, 1.0, 0, [(0, -1.0)])
        with self.assertRaises(InvalidTissueError):
            TissueModel(3, 4, 0.5, 1.0, 2, [(0, 0.0)], n_morphologies=2)

    def test_scenarios(self):
        homogeneous = homogeneous_scenario(20, 20, 0.1)
        self.assertEqual(homogeneous.stimuli, ((0, 0.0),))

        regions = two_region_scenario(20, 20, 0.1)
        self.assertEqual(int(regions.morphology_id.sum()), 100)

        colliding = colliding_scenario(20, 20, 0.1)
        self.assertEqual([s[0] for s in colliding.stimuli], [0, 19])
        self.assertTrue(np.all(colliding.morphology_id[:, 10:] == 1))

        block = diagonal_block_scenario(50, 50, 0.1)
        self.assertEqual(block.conductivity[25, 24], 0.01)
        self.assertEqual(block.conductivity[0, 0], 1.0)
        self.assertEqual(block.conductivity[45, 45], 1.0)

        plane = plane_wave_scenario(5, 7, 0.1)
        self.assertEqual(len(plane.stimuli), 7)


class TestSolveLat(unittest.TestCase):
    def test_point_source_tracks_euclidean_distance(self):
        tissue = homogeneous_scenario(60, 60, 0.1)
        lat = solve_lat(tissue, v0=1.0)

        self.assertEqual(lat.status, "ok")
        self.assertEqual(lat.tau[0], 0.0)
        rr, cc = np.divmod(np.arange(tissue.n_cells), 60)
        exact = np.hypot(rr, cc) * 0.1
        far = np.hypot(rr, cc) >= 10
        error = np.abs(lat.tau[far] - exact[far]) / exact[far]
        self.assertLess(error.max(), 0.05)

    def test_stimulus_onset(self):
        tissue = TissueModel(10, 10, 0.1, 1.0, 0, [(44, 3.0)])
        lat = solve_lat(tissue)

        self.assertEqual(lat.tau[44], 3.0)
        self.assertTrue(lat.source_mask[44])
        self.assertEqual(int(lat.source_mask.sum()), 1)
        self.assertEqual(lat.order[0], 44)
        self.assertTrue(np.all(lat.tau >= 3.0))

    def test_barrier_forces_detour(self):
        conductivity = uniform(30, 40)
        conductivity[10, :] = 0.0
        conductivity[10, 5] = 1.0
        tissue = TissueModel(30, 40, 0.1, conductivity, 0, [(0, 0.0)])
        lat = solve_lat(tissue, v0=1.0)

        target = 20 * 40 + 30
        detour = (math.hypot(10, 5) + math.hypot(10, 25)) * 0.1
        upper = _dijkstra(conductivity, 0, 0.1, 1.0)
        self.assertGreaterEqual(lat.tau[target], 0.97 * detour)
        self.assertLessEqual(lat.tau[target], upper[target] + 1e-9)
        free = solve_lat(TissueModel(30, 40, 0.1, 1.0, 0, [(0, 0.0)]), v0=1.0)
        self.assertGreater(lat.tau[target], free.tau[target] + 0.05)

    def test_acceptance_order_is_causal(self):
        barrier = uniform(30, 40)
        barrier[10, :35] = 0.0
        slow = uniform(30, 40)
        slow[5:25, 10:20] = 0.2
        tissues = (
            homogeneous_scenario(30, 40, 0.1),
            TissueModel(30, 40, 0.1, barrier, 0, [(0, 0.0)]),
            TissueModel(30, 40, 0.1, slow, 0, [(0, 0.0), (39 * 30 + 5, 4.0)]),
        )
        for tissue in tissues:
            lat = solve_lat(tissue)
            self.assertEqual(lat.order.size, int(np.isfinite(lat.tau).sum()))
            self.assertEqual(len(set(lat.order.tolist())), lat.order.size)
            self.assertTrue(np.all(np.diff(lat.tau[lat.order]) >= 0.0))

    def test_warnings(self):
        walled = uniform(10, 10)
        walled[5, :] = 0.0
        lat = solve_lat(TissueModel(10, 10, 0.1, walled, 0, [(0, 0.0)]))
        self.assertEqual(lat.status, "warning")
        self.assertTrue(np.all(np.isinf(lat.grid()[6:])))
        self.assertTrue(np.all(np.isinf(lat.tau[50:60])))

        single = solve_lat(TissueModel(1, 1, 0.1, 1.0, 0, [(0, 0.0)]))
        self.assertIn("no reachable cells beyond sources", single.warnings)

    def test_speed_scales_with_conductivity(self):
        fast = solve_lat(TissueModel(1, 20, 0.1, 1.0, 0, [(0, 0.0)]), v0=0.5)
        slow = solve_lat(TissueModel(1, 20, 0.1, 0.25, 0, [(0, 0.0)]), v0=0.5)
        np.testing.assert_allclose(slow.tau, 2.0 * fast.tau)

    def test_invalid_speed(self):
        with self.assertRaises(InvalidTissueError):
            solve_lat(homogeneous_scenario(5, 5, 0.1), v0=0.0)


class TestCellSignals(unittest.TestCase):
    def setUp(self):
        self.template = generate_ap_template(normalize=True)

    def test_zero_delays_reproduce_the_template(self):
        tissue = TissueModel(1, 4, 0.1, 1.0, 0, [(0, 0.0)])
        field = synthesize_cell_signals(tissue, LATField.from_delays(np.zeros(4)), [self.template])

        self.assertEqual(field.n_samples, len(self.template))
        for c in range(4):
            np.testing.assert_array_equal(field.trace(c), self.template.samples)

    def test_integer_delays_shift_exactly(self):
        raw = generate_ap_template()
        delays = np.array([0.0, 5.0, 12.0])
        tissue = TissueModel(1, 3, 0.1, 1.0, 0, [(0, 0.0)])
        field = synthesize_cell_signals(tissue, LATField.from_delays(delays), [raw])

        self.assertEqual(field.n_samples, 432)
        traces = field.matrix()
        for c, d in enumerate(delays.astype(int)):
            expected = np.full(field.n_samples, raw.resting_potential)
            expected[d : d + len(raw)] = raw.samples
            np.testing.assert_array_equal(traces[c], expected)

    def test_fractional_delay_matches_windowed_sinc(self):
        raw = generate_ap_template()
        tissue = TissueModel(1, 1, 0.1, 1.0, 0, [(0, 0.0)])
        lat = LATField.from_delays(np.array([10.5]))
        field = synthesize_cell_signals(tissue, lat, [raw], duration=440.0, interpolation="sinc")
        trace = field.trace(0)

        deflection = raw.samples - raw.resting_potential
        weights = {}
        for j in range(-7, 9):
            x = j - 0.5
            weights[j] = np.sinc(x) * 0.5 * (1.0 + math.cos(math.pi * x / 8.0))
        total = sum(weights.values())
        expected = np.empty(440)
        for n in range(440):
            acc = 0.0
            for j, w in weights.items():
                m = n - 10 - j
                if 0 <= m < len(raw):
                    acc += w / total * deflection[m]
            expected[n] = raw.resting_potential + acc
        np.testing.assert_allclose(trace, expected, rtol=1e-9, atol=1e-9)

    def test_spectral_shift_keeps_dft_magnitudes(self):
        delays = np.array([10.0, 10.5, 10.25, 17.9])
        tissue = TissueModel(1, 4, 0.1, 1.0, 0, [(0, 0.0)])
        field = synthesize_cell_signals(
            tissue, LATField.from_delays(delays), [self.template], duration=440.0
        )
        traces = field.matrix()

        magnitudes = np.abs(np.fft.rfft(traces, axis=1))
        for row in magnitudes[1:]:
            np.testing.assert_allclose(row, magnitudes[0], rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(
            np.linalg.norm(traces, axis=1), np.ones(4), rtol=0.0, atol=1e-12
        )

    def test_unknown_interpolation(self):
        tissue = TissueModel(1, 1, 0.1, 1.0, 0, [(0, 0.0)])
        with self.assertRaises(InvalidTemplateError):
            synthesize_cell_signals(
                tissue, LATField.from_delays(np.zeros(1)), [self.template], interpolation="cubic"
            )

    def test_taps(self):
        taps = fractional_delay_taps(np.array([0.0, 0.25, 0.5]))

        self.assertEqual(taps.shape, (3, 16))
        np.testing.assert_allclose(taps.sum(axis=1), 1.0)
        np.testing.assert_allclose(taps[0], (np.arange(-7, 9) == 0).astype(float), atol=1e-15)

    def test_amplitudes_and_unreachable_cells(self):
        raw = generate_ap_template()
        tau = np.array([0.0, np.inf])
        tissue = TissueModel(1, 2, 0.1, 1.0, 0, [(0, 0.0)])
        field = synthesize_cell_signals(tissue, LATField(tau, [True, False], (1, 2)), [raw], 2.0)

        np.testing.assert_array_equal(field.trace(0)[: len(raw)], 2.0 * raw.samples)
        np.testing.assert_array_equal(field.trace(1), np.full(field.n_samples, -160.0))

    def test_insufficient_duration_names_the_cell(self):
        tissue = TissueModel(1, 3, 0.1, 1.0, 0, [(0, 0.0)])
        lat = LATField.from_delays(np.array([0.0, 30.0, 10.0]))
        with self.assertRaises(InsufficientDurationError) as ctx:
            synthesize_cell_signals(tissue, lat, [self.template], duration=300.0)
        self.assertEqual(ctx.exception.cell, 1)

    def test_chunks_cover_every_cell_in_order(self):
        tissue = homogeneous_scenario(6, 6, 0.1)
        field = synthesize_cell_signals(tissue, solve_lat(tissue), [self.template])
        stacked = np.vstack([block for _, block in field.chunks(5)])

        np.testing.assert_allclose(stacked, field.matrix(), rtol=0.0, atol=1e-12)
        np.testing.assert_allclose(field.matrix([7, 3]), field.matrix()[[7, 3]], atol=1e-12)


class TestSyntheticEcg(unittest.TestCase):
    def test_layout(self):
        ecg, r_times = synthesize_ecg(n_beats=5, rate=500.0, rr_ms=800.0)

        self.assertEqual(ecg.size, 2000)
        self.assertEqual(r_times, [400.0, 1200.0, 2000.0, 2800.0, 3600.0])
        self.assertAlmostEqual(ecg[200], 1.2, delta=0.05)

    def test_seeded_noise(self):
        a, _ = synthesize_ecg(n_beats=3, snr_db=20.0, jitter_ms=5.0, seed=4)
        b, _ = synthesize_ecg(n_beats=3, snr_db=20.0, jitter_ms=5.0, seed=4)
        c, _ = synthesize_ecg(n_beats=3, snr_db=20.0, jitter_ms=5.0, seed=5)

        np.testing.assert_array_equal(a, b)
        self.assertFalse(np.array_equal(a, c))


if __name__ == "__main__":
    unittest.main()
