import logging
from typing import Sequence

import numpy as np
from scipy import signal as scipy_signal
from typing_extensions import Self

from ._util import _freeze, _ms_to_samples
from .base import SpectralObject
from .config import Settings
from .constants import _Defaults
from .errors import (
    FilterInstabilityError,
    InvalidBandError,
    InvalidRecordingError,
    InvalidSubsetError,
    InvalidWindowError,
)
from .leadfield import EgmRecording, ElectrodeArray
from .simulation import CellSignalField

_log = logging.getLogger(__name__)

__all__ = (
    "BeatWindow",
    "BeatList",
    "SpectralMatrix",
    "QRSDetector",
    "bandpass",
    "detect_r_peaks",
    "segment_beats",
    "window_length",
    "whole_recording_beat",
    "magnitude_matrix",
    "cell_magnitude_matrix",
)


class BeatWindow(SpectralObject):
    """
    .. versionadded :: 0.1.0

    One beat cut out of a recording.

    Parameters
    ----------
    samples : :class:`numpy.ndarray`
        ``M x W`` voltages, read-only.
    window_def : tuple[float, float]
        ``(start_before_R, end_before_R)`` in ms.
    source_beat_index : int
        Index of the R peak this window belongs to.
    rate : float
        Sample rate.
    array : :class:`ElectrodeArray` | None
        The electrodes behind the rows.
    r_peak_ms : float | None
        The R peak time in the source recording.
    """

    def __init__(
        self,
        samples: np.ndarray,
        window_def: tuple[float, float],
        source_beat_index: int,
        rate: float,
        array: ElectrodeArray | None = None,
        r_peak_ms: float | None = None,
    ):
        """
        Constructor method.
        """
        samples = np.array(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        expected = window_length(window_def, rate)
        if samples.shape[1] != expected:
            raise InvalidWindowError(
                f"window {window_def} at {rate} samples/s needs {expected} samples, "
                f"got {samples.shape[1]}"
            )

        self.samples = _freeze(samples)
        self.window_def = (float(window_def[0]), float(window_def[1]))
        self.source_beat_index = int(source_beat_index)
        self.rate = float(rate)
        self.array = array
        self.r_peak_ms = r_peak_ms

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def width(self) -> int:
        return self.samples.shape[1]

    @property
    def layout(self) -> tuple[int, int] | None:
        return self.array.layout if self.array is not None else None

    def __repr__(self) -> str:
        return (
            f"BeatWindow(beat={self.source_beat_index}, channels={self.n_channels}, "
            f"W={self.width}, window={self.window_def})"
        )


class BeatList(list):
    """
    .. versionadded :: 0.1.0

    The beats :func:`segment_beats` kept, plus the ones it skipped.

    Parameters
    ----------
    skipped : list[tuple[int, float, str]]
        ``(beat index, R time ms, reason)`` for every dropped R peak.
    """

    def __init__(self, beats: Sequence[BeatWindow] = (), skipped: Sequence[tuple] = ()):
        super().__init__(beats)
        self.skipped = list(skipped)

    def report(self) -> dict:
        return {
            "kept": [b.source_beat_index for b in self],
            "skipped": [{"beat": i, "r_ms": r, "reason": why} for i, r, why in self.skipped],
        }


class SpectralMatrix(SpectralObject):
    """
    .. versionadded :: 0.1.0

    The nonnegative magnitude matrix ``B = |D|``.

    Parameters
    ----------
    values : :class:`numpy.ndarray`
        ``M x N`` magnitudes, read-only.
    bin_frequencies : :class:`numpy.ndarray`
        The ``N`` bin frequencies in Hz.
    origin : list[int]
        Source channel (or cell) index of every row.
    """

    def __init__(
        self,
        values: np.ndarray,
        bin_frequencies: np.ndarray,
        origin: Sequence[int] | None = None,
    ):
        """
        Constructor method.
        """
        values = np.array(values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidRecordingError(f"a spectral matrix is 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise InvalidRecordingError("spectral magnitudes must be finite and nonnegative")
        bin_frequencies = np.array(bin_frequencies, dtype=np.float64)
        if bin_frequencies.shape != (values.shape[1],):
            raise InvalidRecordingError("one frequency per column is required")

        self.values = _freeze(values)
        self.bin_frequencies = _freeze(bin_frequencies)
        self.origin = list(range(values.shape[0])) if origin is None else [int(o) for o in origin]

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def subset(self, rows: Sequence[int]) -> Self:
        """
        The matrix restricted to some rows, in the given order.

        Raises
        ------
        :class:`InvalidSubsetError`
            For out-of-range or repeated indices.
        """
        rows = _check_subset(rows, self.values.shape[0])
        return self.__class__(
            self.values[rows], self.bin_frequencies, [self.origin[r] for r in rows]
        )

    def __repr__(self) -> str:
        return f"SpectralMatrix({self.values.shape[0]}x{self.values.shape[1]})"


def _check_subset(rows: Sequence[int], n: int) -> list[int]:
    rows = [int(r) for r in rows]
    if not rows:
        raise InvalidSubsetError("a channel subset must not be empty")
    bad = [r for r in rows if not 0 <= r < n]
    if bad:
        raise InvalidSubsetError(f"channel indices {bad} are outside 0..{n - 1}")
    if len(set(rows)) != len(rows):
        raise InvalidSubsetError(f"channel subset {rows} repeats indices")
    return rows


def window_length(window_def: tuple[float, float], rate: float) -> int:
    """
    Samples in a beat window, which must be a whole number.

    Raises
    ------
    :class:`InvalidWindowError`
        When the window is empty or does not span whole samples.
    """
    start, end = window_def
    if not start > end:
        raise InvalidWindowError(f"window start {start} ms must precede its end {end} ms")
    try:
        return _ms_to_samples(start - end, rate, exact=True)
    except ValueError as exc:
        raise InvalidWindowError(str(exc)) from None


def _design(lo: float, hi: float, order: int, rate: float) -> np.ndarray:
    if not 0 < lo < hi < rate / 2.0:
        raise InvalidBandError(f"band {lo}-{hi} Hz must satisfy 0 < lo < hi < {rate / 2.0}")
    if order < 1:
        raise InvalidBandError(f"filter order must be at least 1, got {order}")
    sos = scipy_signal.butter(order, [lo, hi], btype="bandpass", fs=rate, output="sos")
    _, poles, _ = scipy_signal.sos2zpk(sos)
    radius = float(np.max(np.abs(poles)))
    if radius >= 1.0:
        raise FilterInstabilityError(
            f"band {lo}-{hi} Hz of order {order} at {rate} samples/s has pole radius {radius}"
        )
    return sos


def bandpass(
    rec: EgmRecording, lo: float | None = None, hi: float | None = None, order: int | None = None
) -> EgmRecording:
    """
    .. versionadded :: 0.1.0

    Zero-phase Butterworth band-pass, applied forward and backward per channel.

    Parameters
    ----------
    rec : :class:`EgmRecording`
        The recording.
    lo, hi : float, optional
        Band edges in Hz, by default :attr:`Settings.BAND`.
    order : int, optional
        Butterworth order of each pass, by default :attr:`Settings.FILTER_ORDER`.

    Returns
    -------
    :class:`EgmRecording`
        The filtered recording, same length and metadata.

    Raises
    ------
    :class:`InvalidBandError`
        When the band is not inside ``(0, rate / 2)``.
    :class:`FilterInstabilityError`
        When the designed filter has a pole on or outside the unit circle.
    """
    lo = Settings.BAND[0] if lo is None else float(lo)
    hi = Settings.BAND[1] if hi is None else float(hi)
    order = Settings.FILTER_ORDER if order is None else int(order)
    sos = _design(lo, hi, order, rec.rate)

    _log.debug(f"Band-pass {lo}-{hi} Hz, order {order}, over {rec.n_channels} channels")
    return rec.with_samples(scipy_signal.sosfiltfilt(sos, rec.samples, axis=1))


class QRSDetector(SpectralObject):
    """
    .. versionadded :: 0.1.0

    Pan-Tompkins R peak detection.

    The ECG is band-passed to 5-15 Hz, differentiated, squared and integrated
    over a moving window. Peaks of the integrated signal are classified with
    adaptive signal and noise levels, a search-back recovers beats missed
    after long RR gaps, and every detection is moved to the largest raw
    deflection nearby.

    Parameters
    ----------
    rate : float
        Sample rate, at least 200 samples/s.
    band : tuple[float, float]
        QRS band in Hz.
    integration_ms : float
        Moving-window length.
    refractory_ms : float
        Shortest allowed RR interval.
    """

    def __init__(
        self,
        rate: float,
        band: tuple[float, float] = _Defaults.QRS_BAND,
        integration_ms: float = _Defaults.QRS_INTEGRATION_MS,
        refractory_ms: float = _Defaults.QRS_REFRACTORY_MS,
    ):
        """
        Constructor method.
        """
        if rate < 200:
            raise InvalidRecordingError(f"R peak detection needs >= 200 samples/s, got {rate}")
        self.rate = float(rate)
        self.band = band
        self.integration_ms = integration_ms
        self.refractory_ms = refractory_ms

    def bandpass_filter(self, ecg: np.ndarray) -> np.ndarray:
        sos = _design(self.band[0], self.band[1], 2, self.rate)
        return scipy_signal.sosfiltfilt(sos, ecg)

    def derivative_filter(self, ecg: np.ndarray) -> np.ndarray:
        # five-point derivative (-x[n-2] - 2x[n-1] + 2x[n+1] + x[n+2]) / 8
        kernel = np.array([1.0, 2.0, 0.0, -2.0, -1.0]) / 8.0
        return np.convolve(ecg, kernel, mode="same")

    def moving_window_integration(self, ecg: np.ndarray) -> np.ndarray:
        size = max(_ms_to_samples(self.integration_ms, self.rate), 1)
        return np.convolve(ecg, np.ones(size) / size, mode="same")

    def find_peaks(self, integrated: np.ndarray) -> list[int]:
        """
        Adaptive dual-threshold classification of integrated-signal peaks.
        """
        refractory = max(_ms_to_samples(self.refractory_ms, self.rate), 1)
        candidates, _ = scipy_signal.find_peaks(integrated, distance=refractory)
        if candidates.size == 0:
            return []

        learning = integrated[: _ms_to_samples(2000.0, self.rate)]
        spki = 0.25 * float(np.max(learning))
        npki = 0.5 * float(np.mean(learning))
        threshold1 = npki + 0.25 * (spki - npki)

        peaks: list[int] = []
        skipped: list[int] = []
        for idx in candidates.tolist():
            value = float(integrated[idx])
            if peaks and idx - peaks[-1] < refractory:
                npki = 0.125 * value + 0.875 * npki
            elif value > threshold1:
                if len(peaks) >= 2:
                    rr = float(np.mean(np.diff(peaks[-9:])))
                    if idx - peaks[-1] > 1.66 * rr:
                        threshold2 = 0.5 * threshold1
                        missed = [
                            s
                            for s in skipped
                            if peaks[-1] + refractory <= s <= idx - refractory
                            and integrated[s] > threshold2
                        ]
                        if missed:
                            best = max(missed, key=lambda s: integrated[s])
                            peaks.append(best)
                            spki = 0.25 * float(integrated[best]) + 0.75 * spki
                            _log.debug(f"Search-back recovered a beat at sample {best}")
                peaks.append(idx)
                spki = 0.125 * value + 0.875 * spki
            else:
                skipped.append(idx)
                npki = 0.125 * value + 0.875 * npki
            threshold1 = npki + 0.25 * (spki - npki)
        return peaks

    def refine_peaks(self, peaks: Sequence[int], ecg: np.ndarray) -> list[int]:
        """
        Moves each detection to the largest absolute raw deflection within
        half an integration window and enforces the refractory spacing.
        """
        half = _ms_to_samples(self.integration_ms / 2.0, self.rate)
        refractory = _ms_to_samples(self.refractory_ms, self.rate)
        refined: list[int] = []
        for peak in peaks:
            lo, hi = max(0, peak - half), min(ecg.size, peak + half + 1)
            best = lo + int(np.argmax(np.abs(ecg[lo:hi])))
            if refined and best - refined[-1] < refractory:
                if abs(ecg[best]) > abs(ecg[refined[-1]]):
                    refined[-1] = best
                continue
            refined.append(best)
        return refined

    def detect(self, ecg: np.ndarray) -> list[float]:
        """
        Runs every stage.

        Returns
        -------
        list[float]
            Sorted R peak times in ms.
        """
        ecg = np.asarray(ecg, dtype=np.float64)
        if ecg.size * 1000.0 / self.rate < 2000.0:
            raise InvalidRecordingError("R peak detection needs at least 2 s of ECG")

        integrated = self.moving_window_integration(
            self.derivative_filter(self.bandpass_filter(ecg)) ** 2
        )
        peaks = self.refine_peaks(sorted(self.find_peaks(integrated)), ecg)
        return [p * 1000.0 / self.rate for p in peaks]


def detect_r_peaks(ecg: EgmRecording, channel: int = 0) -> list[float]:
    """
    .. versionadded :: 0.1.0

    Pan-Tompkins R peaks of one recording channel.

    Parameters
    ----------
    ecg : :class:`EgmRecording`
        A recording holding the ECG.
    channel : int
        The ECG channel.

    Returns
    -------
    list[float]
        Sorted R peak times in ms, at least 200 ms apart. Empty, with a
        logged warning, when nothing is found.
    """
    if not 0 <= channel < ecg.n_channels:
        raise InvalidSubsetError(f"channel {channel} is outside 0..{ecg.n_channels - 1}")
    peaks = QRSDetector(ecg.rate).detect(ecg.samples[channel])
    if not peaks:
        _log.warning("detect_r_peaks: no R peaks found")
    else:
        _log.info(f"Detected {len(peaks)} R peaks")
    return peaks


def segment_beats(
    rec: EgmRecording,
    r_peaks: Sequence[float] | None = None,
    window: tuple[float, float] | None = None,
) -> BeatList:
    """
    .. versionadded :: 0.1.0

    Cuts ``[R - start, R - end)`` out of the recording for every R peak.

    Parameters
    ----------
    rec : :class:`EgmRecording`
        The recording.
    r_peaks : Sequence[float], optional
        R times in ms, by default the recording's beat annotations.
    window : tuple[float, float], optional
        ``(start_before_R, end_before_R)`` in ms, by default
        :attr:`Settings.WINDOW`.

    Returns
    -------
    :class:`BeatList`
        The usable beats. Peaks whose window leaves the recording are listed
        in ``skipped``.
    """
    window = Settings.WINDOW if window is None else window
    width = window_length(window, rec.rate)
    if r_peaks is None:
        r_peaks = rec.annotations or []

    beats, skipped = [], []
    for index, r in enumerate(r_peaks):
        start = int(round((r - window[0]) * rec.rate / 1000.0))
        stop = start + width
        if start < 0 or stop > rec.n_samples:
            reason = (
                "window starts before the recording"
                if start < 0
                else "window ends after the recording"
            )
            skipped.append((index, float(r), reason))
            _log.warning(f"Skipping beat {index} at {r} ms: {reason}")
            continue
        beats.append(
            BeatWindow(rec.samples[:, start:stop], window, index, rec.rate, rec.array, float(r))
        )

    _log.info(f"Segmented {len(beats)} beats, skipped {len(skipped)}")
    return BeatList(beats, skipped)


def whole_recording_beat(rec: EgmRecording) -> BeatWindow:
    """
    The whole recording as a single beat whose R peak sits at its end.
    """
    duration = rec.duration_ms
    return BeatWindow(rec.samples, (duration, 0.0), 0, rec.rate, rec.array, duration)


def _select_bins(width: int) -> np.ndarray:
    """
    One-sided bins kept in ``B``: 1 .. W/2, DC dropped, Nyquist kept.
    """
    return np.arange(1, width // 2 + 1)


def _magnitudes(samples: np.ndarray, taper: bool) -> np.ndarray:
    width = samples.shape[1]
    if width % 2:
        raise InvalidWindowError(f"window has {width} samples, an even count is required")
    if taper:
        samples = samples * scipy_signal.windows.hann(width, sym=False)
    return np.abs(np.fft.rfft(samples, axis=1)[:, _select_bins(width)])


def magnitude_matrix(
    beat: BeatWindow, taper: bool = False, channels: Sequence[int] | None = None
) -> SpectralMatrix:
    """
    .. versionadded :: 0.1.0

    Per-channel DFT magnitudes of a beat window.

    Parameters
    ----------
    beat : :class:`BeatWindow`
        The beat, with an even number of samples ``W``.
    taper : bool
        Apply a Hann taper before the DFT.
    channels : Sequence[int], optional
        Restrict to these channels.

    Returns
    -------
    :class:`SpectralMatrix`
        ``M x W/2`` magnitudes at ``k * rate / W`` Hz, ``k = 1 .. W/2``.
    """
    if channels is None:
        rows = list(range(beat.n_channels))
    else:
        rows = _check_subset(channels, beat.n_channels)
    values = _magnitudes(beat.samples[rows], taper)
    freqs = _select_bins(beat.width) * beat.rate / beat.width
    return SpectralMatrix(values, freqs, rows)


def cell_magnitude_matrix(
    field: CellSignalField, cells: Sequence[int] | None = None, taper: bool = False
) -> SpectralMatrix:
    """
    .. versionadded :: 0.1.0

    ``B`` built straight from cell traces, one row per cell.

    Parameters
    ----------
    field : :class:`CellSignalField`
        The cell traces. Their sample count must be even.
    cells : Sequence[int], optional
        Cells to include, by default all, rendered chunk by chunk.
    taper : bool
        Apply a Hann taper.

    Returns
    -------
    :class:`SpectralMatrix`
        ``len(cells) x n_samples/2`` magnitudes.
    """
    width = field.n_samples
    freqs = _select_bins(width) * field.rate / width
    if cells is None:
        blocks = [_magnitudes(block, taper) for _, block in field.chunks()]
        values = np.vstack(blocks) if blocks else np.zeros((0, width // 2))
        origin = range(field.n_cells)
    else:
        origin = [int(c) for c in cells]
        values = np.vstack(
            [
                _magnitudes(field.matrix(origin[i : i + Settings.CHUNK_SIZE]), taper)
                for i in range(0, len(origin), Settings.CHUNK_SIZE)
            ]
        )
    _log.debug(f"Cell-level B of {values.shape[0]} cells, {values.shape[1]} bins")
    return SpectralMatrix(values, freqs, list(origin))