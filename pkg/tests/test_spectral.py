import cmath
import math
import unittest

import numpy as np

from egmrank.errors import (
    InvalidBandError,
    InvalidRecordingError,
    InvalidSubsetError,
    InvalidWindowError,
)
from egmrank.leadfield import EgmRecording, ElectrodeArray
from egmrank.simulation import (
    generate_ap_template,
    homogeneous_scenario,
    solve_lat,
    synthesize_cell_signals,
    synthesize_ecg,
)
from egmrank.spectral import (
    BeatWindow,
    QRSDetector,
    SpectralMatrix,
    bandpass,
    cell_magnitude_matrix,
    detect_r_peaks,
    magnitude_matrix,
    segment_beats,
    whole_recording_beat,
    window_length,
)


def _recording(samples, rate=1000.0):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    array = ElectrodeArray([(float(m), 0.0) for m in range(samples.shape[0])])
    return EgmRecording(samples, rate, array)


class TestBandpass(unittest.TestCase):
    def setUp(self):
        self.t = np.arange(10000) / 1000.0
        self.middle = slice(3000, 7000)

    def test_passes_the_band(self):
        rec = bandpass(_recording(np.sin(2 * math.pi * 10.0 * self.t)))
        peak = np.max(np.abs(rec.samples[0, self.middle]))
        self.assertAlmostEqual(peak, 1.0, delta=0.05)

    def test_rejects_out_of_band(self):
        rec = bandpass(_recording(np.sin(2 * math.pi * 100.0 * self.t)))
        self.assertLess(np.max(np.abs(rec.samples[0, self.middle])), 0.01)

    def test_removes_dc(self):
        rec = bandpass(_recording(np.full(self.t.size, 5.0)))
        self.assertLess(np.max(np.abs(rec.samples)), 1e-3)

    def test_keeps_length_and_metadata(self):
        raw = _recording(np.random.default_rng(0).normal(size=(3, 2000)))
        rec = bandpass(raw, 1.0, 40.0, order=2)
        self.assertEqual(rec.samples.shape, raw.samples.shape)
        self.assertIs(rec.array, raw.array)

    def test_invalid_band(self):
        rec = _recording(np.zeros(1000))
        with self.assertRaises(InvalidBandError):
            bandpass(rec, 40.0, 30.0)
        with self.assertRaises(InvalidBandError):
            bandpass(rec, 1.0, 600.0)
        with self.assertRaises(InvalidBandError):
            bandpass(rec, 1.0, 30.0, order=0)


class TestRPeaks(unittest.TestCase):
    def _matched(self, detected, truth, tolerance):
        return sum(any(abs(d - r) <= tolerance for d in detected) for r in truth)

    def test_clean_ecg(self):
        signal, truth = synthesize_ecg(10)
        detected = detect_r_peaks(_recording(signal))

        self.assertEqual(len(detected), 10)
        self.assertEqual(self._matched(detected, truth, 10.0), 10)
        self.assertEqual(detected, sorted(detected))

    def test_noisy_ecg(self):
        signal, truth = synthesize_ecg(10, jitter_ms=20.0, snr_db=20.0, seed=4)
        detected = detect_r_peaks(_recording(signal))

        self.assertGreaterEqual(self._matched(detected, truth, 15.0), 9)
        self.assertTrue(all(b - a >= 200.0 for a, b in zip(detected, detected[1:])))

    def test_flat_signal(self):
        with self.assertLogs("egmrank.spectral", level="WARNING"):
            self.assertEqual(detect_r_peaks(_recording(np.zeros(5000))), [])

    def test_requirements(self):
        with self.assertRaises(InvalidRecordingError):
            QRSDetector(100.0)
        with self.assertRaises(InvalidRecordingError):
            QRSDetector(1000.0).detect(np.zeros(1500))
        with self.assertRaises(InvalidSubsetError):
            detect_r_peaks(_recording(np.zeros(5000)), channel=1)


class TestSegmentation(unittest.TestCase):
    def setUp(self):
        ramp = np.arange(2000, dtype=np.float64)
        self.rec = _recording(np.vstack([ramp, -ramp]))

    def test_window_length(self):
        self.assertEqual(window_length((320.0, 60.0), 1000.0), 260)
        self.assertEqual(window_length((320.0, 60.0), 500.0), 130)
        with self.assertRaises(InvalidWindowError):
            window_length((320.5, 60.0), 1000.0)
        with self.assertRaises(InvalidWindowError):
            window_length((60.0, 320.0), 1000.0)

    def test_cuts_before_the_r_peak(self):
        beats = segment_beats(self.rec, [1000.0], (320.0, 60.0))

        self.assertEqual(len(beats), 1)
        beat = beats[0]
        self.assertEqual(beat.width, 260)
        np.testing.assert_array_equal(beat.samples[0], np.arange(680, 940))
        np.testing.assert_array_equal(beat.samples[1], -np.arange(680, 940))
        self.assertEqual(beat.r_peak_ms, 1000.0)

    def test_skips_windows_outside_the_recording(self):
        with self.assertLogs("egmrank.spectral", level="WARNING"):
            beats = segment_beats(self.rec, [100.0, 1000.0, 2100.0])

        self.assertEqual([b.source_beat_index for b in beats], [1])
        self.assertEqual([s[0] for s in beats.skipped], [0, 2])
        report = beats.report()
        self.assertEqual(report["kept"], [1])
        self.assertEqual(report["skipped"][0]["beat"], 0)

    def test_uses_annotations(self):
        rec = self.rec.with_annotations([500.0, 1500.0])
        self.assertEqual(len(segment_beats(rec)), 2)
        self.assertEqual(len(segment_beats(self.rec)), 0)

    def test_whole_recording(self):
        beat = whole_recording_beat(_recording(np.ones((2, 300))))
        self.assertEqual((beat.n_channels, beat.width), (2, 300))
        self.assertEqual(beat.window_def, (300.0, 0.0))

    def test_window_size_is_checked(self):
        with self.assertRaises(InvalidWindowError):
            BeatWindow(np.zeros((1, 200)), (320.0, 60.0), 0, 1000.0)


class TestMagnitudeMatrix(unittest.TestCase):
    def _beat(self, samples):
        samples = np.atleast_2d(samples)
        return BeatWindow(samples, (float(samples.shape[1]), 0.0), 0, 1000.0)

    def test_cosine_bin(self):
        n = np.arange(260)
        matrix = magnitude_matrix(self._beat(np.cos(2 * math.pi * 10 * n / 260)))

        self.assertEqual(matrix.shape, (1, 130))
        self.assertAlmostEqual(matrix.values[0, 9], 130.0, places=9)
        others = np.delete(matrix.values[0], 9)
        self.assertLess(np.max(others), 1e-9)
        self.assertAlmostEqual(matrix.bin_frequencies[9], 10 * 1000.0 / 260)

    def test_dc_is_dropped_and_nyquist_kept(self):
        matrix = magnitude_matrix(self._beat(np.full(8, 3.0)))
        np.testing.assert_allclose(matrix.values, 0.0, atol=1e-12)

        alternating = magnitude_matrix(self._beat((-1.0) ** np.arange(8)))
        self.assertAlmostEqual(alternating.values[0, -1], 8.0)

    def test_matches_direct_dft(self):
        x = np.random.default_rng(1).normal(size=(3, 64))
        matrix = magnitude_matrix(self._beat(x))

        for m in range(3):
            for k in (1, 7, 32):
                coeff = sum(x[m, t] * cmath.exp(-2j * math.pi * k * t / 64) for t in range(64))
                self.assertAlmostEqual(matrix.values[m, k - 1], abs(coeff), places=9)

    def test_circular_shift_invariance(self):
        x = np.random.default_rng(2).normal(size=(4, 100))
        base = magnitude_matrix(self._beat(x)).values
        shifted = magnitude_matrix(self._beat(np.roll(x, 17, axis=1))).values
        np.testing.assert_allclose(shifted, base, atol=1e-9)

    def test_taper_and_channels(self):
        x = np.random.default_rng(3).normal(size=(4, 100))
        matrix = magnitude_matrix(self._beat(x), taper=True, channels=[2, 0])

        self.assertEqual(matrix.origin, [2, 0])
        self.assertEqual(matrix.shape, (2, 50))
        with self.assertRaises(InvalidSubsetError):
            magnitude_matrix(self._beat(x), channels=[1, 1])

    def test_odd_window(self):
        beat = BeatWindow(np.zeros((1, 261)), (321.0, 60.0), 0, 1000.0)
        with self.assertRaises(InvalidWindowError):
            magnitude_matrix(beat)

    def test_subset(self):
        matrix = SpectralMatrix(np.arange(12.0).reshape(3, 4), np.arange(1.0, 5.0))
        sub = matrix.subset([2, 0])

        np.testing.assert_array_equal(sub.values, [[8, 9, 10, 11], [0, 1, 2, 3]])
        self.assertEqual(sub.origin, [2, 0])
        with self.assertRaises(InvalidSubsetError):
            matrix.subset([])
        with self.assertRaises(InvalidSubsetError):
            matrix.subset([3])
        with self.assertRaises(InvalidRecordingError):
            SpectralMatrix(-np.ones((2, 2)), np.ones(2))

    def test_cell_matrix(self):
        tissue = homogeneous_scenario(12, 12, 0.1)
        template = generate_ap_template(normalize=True)
        field = synthesize_cell_signals(tissue, solve_lat(tissue), [template])
        traces = field.matrix()
        expected = np.abs(np.fft.rfft(traces, axis=1))[:, 1 : field.n_samples // 2 + 1]

        matrix = cell_magnitude_matrix(field)
        self.assertEqual(matrix.shape, (144, field.n_samples // 2))
        np.testing.assert_allclose(matrix.values, expected, atol=1e-9)

        subset = cell_magnitude_matrix(field, cells=[5, 100])
        np.testing.assert_allclose(subset.values, expected[[5, 100]], atol=1e-9)
        self.assertEqual(subset.origin, [5, 100])


if __name__ == "__main__":
    unittest.main()
