import logging
from typing import Sequence

import numpy as np
from typing_extensions import Self

from ._util import _freeze
from .base import LeadfieldObject
from .config import Settings
from .constants import _Defaults
from .errors import InvalidArrayError, InvalidRecordingError, ShapeMismatchError
from .simulation import CellSignalField, TissueModel

_log = logging.getLogger(__name__)

__all__ = (
    "ElectrodeArray",
    "EgmRecording",
    "lead_weights",
    "synthesize_egm",
    "record",
    "add_noise",
    "repeat_beats",
)


class ElectrodeArray(LeadfieldObject):
    """
    .. versionadded :: 0.1.0

    Point electrodes on a plane parallel to the tissue.

    Parameters
    ----------
    positions : :class:`numpy.ndarray`
        ``M x 2`` electrode positions ``(x, y)`` in mm.
    height : float
        Distance ``z0`` from the tissue plane in mm.
    gain : float
        Electrode gain ``a``.
    layout : tuple[int, int] | None
        ``(rows, cols)`` when the positions form a row-major rectangular grid.
    """

    def __init__(
        self,
        positions: np.ndarray | Sequence[tuple[float, float]],
        height: float = _Defaults.Z0_MM,
        gain: float = _Defaults.GAIN,
        layout: tuple[int, int] | None = None,
    ):
        """
        Constructor method.
        """
        positions = np.array(positions, dtype=np.float64).reshape(-1, 2)
        if positions.shape[0] == 0:
            raise InvalidArrayError("an electrode array needs at least one electrode")
        if not np.all(np.isfinite(positions)):
            raise InvalidArrayError("electrode positions must be finite")
        if not height > 0:
            raise InvalidArrayError(f"electrode height must be positive, got {height}")
        if not gain > 0:
            raise InvalidArrayError(f"electrode gain must be positive, got {gain}")
        if np.unique(positions, axis=0).shape[0] != positions.shape[0]:
            raise InvalidArrayError("electrode positions must be distinct")
        if layout is not None:
            layout = (int(layout[0]), int(layout[1]))
            if layout[0] * layout[1] != positions.shape[0]:
                raise InvalidArrayError(
                    f"layout {layout[0]}x{layout[1]} does not match {positions.shape[0]} electrodes"
                )

        self.positions = _freeze(positions)
        self.height = float(height)
        self.gain = float(gain)
        self.layout = layout

    @property
    def n_channels(self) -> int:
        return self.positions.shape[0]

    @classmethod
    def rectangular(
        cls: Self,
        rows: int,
        cols: int,
        pitch: float,
        center: tuple[float, float] = (0.0, 0.0),
        height: float = _Defaults.Z0_MM,
        gain: float = _Defaults.GAIN,
    ) -> Self:
        """
        .. versionadded :: 0.1.0

        A row-major grid of electrodes centred on ``center``.

        Parameters
        ----------
        rows : int
            Electrode rows, along y.
        cols : int
            Electrode columns, along x.
        pitch : float
            Inter-electrode distance in mm.
        center : tuple[float, float]
            Grid centre ``(x, y)`` in mm.
        height : float
            Distance from the tissue plane.
        gain : float
            Electrode gain.

        Returns
        -------
        :class:`ElectrodeArray`
            The array, with ``layout`` set.
        """
        if rows <= 0 or cols <= 0 or not pitch > 0:
            raise InvalidArrayError(f"invalid grid {rows}x{cols} at pitch {pitch}")
        rr, cc = np.divmod(np.arange(rows * cols), cols)
        x = center[0] + (cc - (cols - 1) / 2.0) * pitch
        y = center[1] + (rr - (rows - 1) / 2.0) * pitch
        return cls(np.column_stack([x, y]), height, gain, layout=(rows, cols))

    @classmethod
    def preset(
        cls: Self,
        name: str,
        center: tuple[float, float] = (0.0, 0.0),
        height: float = _Defaults.Z0_MM,
        gain: float = _Defaults.GAIN,
    ) -> Self:
        """A built-in array (``"10x10"``, ``"32x32"`` or ``"8x24"``)."""
        rows, cols, pitch = _Defaults.array_preset(name)
        return cls.rectangular(rows, cols, pitch, center, height, gain)

    def to_dict(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "height": self.height,
            "gain": self.gain,
            "layout": list(self.layout) if self.layout else None,
        }

    @classmethod
    def _from_dict(cls: Self, raw: dict) -> Self:
        _log.debug("Creating an ElectrodeArray class from the given dictionary")
        layout = raw.get("layout")
        return cls(
            raw["positions"],
            raw.get("height", _Defaults.Z0_MM),
            raw.get("gain", _Defaults.GAIN),
            tuple(layout) if layout else None,
        )

    def __repr__(self) -> str:
        shape = f"{self.layout[0]}x{self.layout[1]}" if self.layout else f"{self.n_channels}"
        return f"ElectrodeArray({shape}, z0={self.height}, gain={self.gain})"


class EgmRecording(LeadfieldObject):
    """
    .. versionadded :: 0.1.0

    A multichannel electrogram.

    Parameters
    ----------
    samples : :class:`numpy.ndarray`
        ``M x T`` voltages, read-only.
    rate : float
        Sample rate in samples/s.
    array : :class:`ElectrodeArray`
        The recording electrodes, one per row of ``samples``.
    annotations : list[float] | None
        Beat markers in ms, strictly increasing.
    labels : dict[str, str] | None
        Free-form labels such as recording id, location and rhythm.
    """

    def __init__(
        self,
        samples: np.ndarray,
        rate: float,
        array: ElectrodeArray,
        annotations: Sequence[float] | None = None,
        labels: dict | None = None,
    ):
        """
        Constructor method.
        """
        samples = np.array(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2 or samples.shape[0] < 1 or samples.shape[1] < 1:
            raise InvalidRecordingError(
                f"samples must be a non-empty M x T matrix, got {samples.shape}"
            )
        if not rate > 0:
            raise InvalidRecordingError(f"sample rate must be positive, got {rate}")
        if not np.all(np.isfinite(samples)):
            raise InvalidRecordingError("recording samples must be finite")
        if array.n_channels != samples.shape[0]:
            raise ShapeMismatchError(
                (array.n_channels,), (samples.shape[0],), "electrodes and recording channels"
            )
        annotations = [float(t) for t in annotations] if annotations is not None else None
        if annotations is not None and any(b <= a for a, b in zip(annotations, annotations[1:])):
            raise InvalidRecordingError("beat annotations must be strictly increasing")

        self.samples = _freeze(samples)
        self.rate = float(rate)
        self.array = array
        self.annotations = annotations
        self.labels = dict(labels or {})

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_ms(self) -> float:
        return self.n_samples * 1000.0 / self.rate

    def with_samples(self, samples: np.ndarray) -> Self:
        """A recording with new samples and this recording's metadata."""
        return self.__class__(samples, self.rate, self.array, self.annotations, self.labels)

    def with_annotations(
        self, annotations: Sequence[float] | None, labels: dict | None = None
    ) -> Self:
        merged = dict(self.labels)
        merged.update(labels or {})
        return self.__class__(self.samples, self.rate, self.array, annotations, merged)

    def __repr__(self) -> str:
        return (
            f"EgmRecording(channels={self.n_channels}, samples={self.n_samples}, "
            f"rate={self.rate})"
        )


def lead_weights(array: ElectrodeArray, tissue: TissueModel) -> np.ndarray:
    """
    .. versionadded :: 0.1.0

    Inverse-distance gains from every cell to every electrode,
    ``a / sqrt((x_c - x_m)^2 + (y_c - y_m)^2 + z0^2)``.

    Parameters
    ----------
    array : :class:`ElectrodeArray`
        The electrodes.
    tissue : :class:`TissueModel`
        The tissue.

    Returns
    -------
    :class:`numpy.ndarray`
        ``M x N_c`` weights.
    """
    x, y = tissue.coordinates
    dx = x[None, :] - array.positions[:, 0:1]
    dy = y[None, :] - array.positions[:, 1:2]
    weights = array.gain / np.sqrt(dx**2 + dy**2 + array.height**2)
    _log.debug(f"Lead field of {weights.shape[0]} electrodes over {weights.shape[1]} cells")
    return weights


def synthesize_egm(
    weights: np.ndarray,
    cell_signals: CellSignalField | np.ndarray,
    array: ElectrodeArray,
    rate: float | None = None,
) -> EgmRecording:
    """
    .. versionadded :: 0.1.0

    Sums weighted cell traces into electrode signals.

    Parameters
    ----------
    weights : :class:`numpy.ndarray`
        ``M x N_c`` lead field.
    cell_signals : :class:`CellSignalField` | :class:`numpy.ndarray`
        The cell traces, either lazy or as an ``N_c x T`` matrix.
    array : :class:`ElectrodeArray`
        The electrodes behind ``weights``.
    rate : float, optional
        Sample rate for matrix input, by default :attr:`Settings.SAMPLE_RATE`.

    Returns
    -------
    :class:`EgmRecording`
        ``weights @ traces``.

    Raises
    ------
    :class:`ShapeMismatchError`
        When the weights and cell signals disagree on the number of cells.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if isinstance(cell_signals, CellSignalField):
        n_cells = cell_signals.n_cells
        rate = cell_signals.rate
    else:
        cell_signals = np.asarray(cell_signals, dtype=np.float64)
        n_cells = cell_signals.shape[0]
        rate = Settings.SAMPLE_RATE if rate is None else rate
    if weights.ndim != 2 or weights.shape[1] != n_cells:
        raise ShapeMismatchError(weights.shape, (n_cells,), "lead field and cell signals")

    if isinstance(cell_signals, CellSignalField):
        samples = np.zeros((weights.shape[0], cell_signals.n_samples))
        for cells, block in cell_signals.chunks():
            samples += weights[:, cells] @ block
    else:
        samples = weights @ cell_signals

    _log.info(f"Synthesized {samples.shape[0]} electrograms of {samples.shape[1]} samples")
    return EgmRecording(samples, rate, array)


def record(cell_signals: CellSignalField, array: ElectrodeArray) -> EgmRecording:
    """Forward-models ``array`` over the tissue behind ``cell_signals``."""
    return synthesize_egm(lead_weights(array, cell_signals.tissue), cell_signals, array)


def add_noise(rec: EgmRecording, std: float, seed: int = 0) -> EgmRecording:
    """
    .. versionadded :: 0.1.0

    Adds seeded white noise.

    Parameters
    ----------
    rec : :class:`EgmRecording`
        The clean recording.
    std : float
        Noise standard deviation, ``0`` returns ``rec`` unchanged.
    seed : int
        Generator seed.

    Returns
    -------
    :class:`EgmRecording`
        The noisy recording.
    """
    if std < 0:
        raise InvalidRecordingError(f"noise standard deviation must be >= 0, got {std}")
    if std == 0:
        return rec
    rng = np.random.default_rng(seed)
    return rec.with_samples(rec.samples + rng.normal(0.0, std, rec.samples.shape))


def repeat_beats(
    rec: EgmRecording, onsets_ms: Sequence[float], duration_ms: float
) -> EgmRecording:
    """
    .. versionadded :: 0.1.0

    Lays copies of a single-beat recording along a rhythm.

    Parameters
    ----------
    rec : :class:`EgmRecording`
        One simulated beat.
    onsets_ms : Sequence[float]
        Start of every copy, rounded to the nearest sample. Overlapping copies add up.
    duration_ms : float
        Length of the result. Copies running past the end are cut.

    Returns
    -------
    :class:`EgmRecording`
        The rhythm, without annotations.
    """
    n_total = int(round(duration_ms * rec.rate / 1000.0))
    if n_total < 1:
        raise InvalidRecordingError(f"duration must cover at least one sample, got {duration_ms}")
    samples = np.zeros((rec.n_channels, n_total))
    for onset in onsets_ms:
        start = int(round(onset * rec.rate / 1000.0))
        if start < 0:
            raise InvalidRecordingError(f"beat onset {onset} ms is before the recording start")
        stop = min(start + rec.n_samples, n_total)
        if stop > start:
            samples[:, start:stop] += rec.samples[:, : stop - start]
    _log.debug(f"Repeated a {rec.duration_ms} ms beat {len(onsets_ms)} times")
    return EgmRecording(samples, rec.rate, rec.array, labels=rec.labels)
