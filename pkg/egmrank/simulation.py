import heapq
import logging
import math
from typing import Iterator, Sequence

import numpy as np
from typing_extensions import Self

from ._util import _freeze, _ms_to_samples
from .base import SimulationObject
from .config import Settings
from .constants import _Defaults
from .errors import (
    EnvelopeError,
    InsufficientDurationError,
    InvalidTemplateError,
    InvalidTissueError,
    PatchOverlapError,
    ShapeMismatchError,
)

_log = logging.getLogger(__name__)

__all__ = (
    "APParams",
    "APTemplate",
    "TissueModel",
    "LATField",
    "CellSignalField",
    "generate_ap_template",
    "morphology_family",
    "uniform",
    "rect_mask",
    "line_mask",
    "rect_patch",
    "line_patch",
    "paint_patches",
    "homogeneous_scenario",
    "two_region_scenario",
    "colliding_scenario",
    "diagonal_block_scenario",
    "plane_wave_scenario",
    "solve_lat",
    "fractional_delay_taps",
    "synthesize_cell_signals",
    "synthesize_ecg",
)

# Upstroke threshold every unnormalized template must cross exactly once.
_UPSTROKE_MV = -40.0
_TAPS = np.arange(-7, 9)
_SNAP = 1e-9
_INTERPOLATIONS = ("spectral", "sinc")


class APParams(SimulationObject):
    """
    .. versionadded :: 0.1.0

    Parameters of the parametric action potential waveform.

    The waveform rises from rest to ``peak_mv`` along a raised cosine, decays
    exponentially from the spike towards the plateau level
    ``resting_potential + plateau_mv``, holds there until the plateau ends and
    then relaxes back to rest exponentially.

    Parameters
    ----------
    upstroke_ms : float
        Duration of the upstroke.
    peak_mv : float
        Voltage at the end of the upstroke.
    spike_ms : float
        Time constant of the decay from the peak towards the plateau level.
    plateau_mv : float
        Plateau level above rest.
    plateau_ms : float
        Time from the end of the upstroke until repolarization starts.
    repolarization_ms : float
        Repolarization time constant.
    resting_potential : float
        Resting membrane potential.
    """

    def __init__(
        self,
        upstroke_ms: float = 2.0,
        peak_mv: float = 20.0,
        spike_ms: float = 3.0,
        plateau_mv: float = 20.0,
        plateau_ms: float = 150.0,
        repolarization_ms: float = 50.0,
        resting_potential: float = -80.0,
    ):
        """
        Constructor method.
        """
        if upstroke_ms <= 0 or spike_ms <= 0 or repolarization_ms <= 0:
            raise InvalidTemplateError(
                "upstroke, spike and repolarization time constants must be positive"
            )
        if plateau_ms < 0 or plateau_mv < 0:
            raise InvalidTemplateError("plateau amplitude and duration must be nonnegative")
        if resting_potential >= _UPSTROKE_MV or peak_mv <= _UPSTROKE_MV:
            raise InvalidTemplateError(
                f"the waveform must cross {_UPSTROKE_MV} mV: rest {resting_potential} mV, "
                f"peak {peak_mv} mV"
            )
        if peak_mv < resting_potential + plateau_mv:
            raise InvalidTemplateError("peak must not be below the plateau level")

        self.upstroke_ms = float(upstroke_ms)
        self.peak_mv = float(peak_mv)
        self.spike_ms = float(spike_ms)
        self.plateau_mv = float(plateau_mv)
        self.plateau_ms = float(plateau_ms)
        self.repolarization_ms = float(repolarization_ms)
        self.resting_potential = float(resting_potential)

    @property
    def envelope_ms(self) -> float:
        """Shortest duration that lets the waveform return to rest."""
        return self.upstroke_ms + self.plateau_ms + 5.0 * self.repolarization_ms

    def replace(self, **changes) -> Self:
        """Returns a copy with some parameters changed."""
        values = self.to_dict()
        values.update(changes)
        return self.__class__(**values)

    def to_dict(self) -> dict:
        return {
            "upstroke_ms": self.upstroke_ms,
            "peak_mv": self.peak_mv,
            "spike_ms": self.spike_ms,
            "plateau_mv": self.plateau_mv,
            "plateau_ms": self.plateau_ms,
            "repolarization_ms": self.repolarization_ms,
            "resting_potential": self.resting_potential,
        }

    @classmethod
    def _from_dict(cls: Self, raw: dict) -> Self:
        """
        .. versionadded :: 0.1.0

        Builds parameters from a dictionary, missing keys take their defaults.

        Parameters
        ----------
        raw : dict
            The parameter values.

        Returns
        -------
        :class:`APParams`
            The parameters.
        """
        _log.debug("Creating an APParams class from the given dictionary")
        return cls(**raw)

    @classmethod
    def preset(cls: Self, name: str) -> Self:
        """
        .. versionadded :: 0.1.0

        One of the built-in morphologies, ``"AP1"`` or ``"AP2"``.
        """
        morphologies = _Defaults.MORPHOLOGIES
        try:
            raw = getattr(morphologies, name.upper())
        except AttributeError:
            raise InvalidTemplateError(f"Unknown morphology {name!r}") from None
        return cls(resting_potential=morphologies.RESTING_POTENTIAL, **raw)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, APParams) and self.to_dict() == other.to_dict()

    def __repr__(self) -> str:
        return f"APParams({', '.join(f'{k}={v}' for k, v in self.to_dict().items())})"


class APTemplate(SimulationObject):
    """
    .. versionadded :: 0.1.0

    A sampled action potential.

    Parameters
    ----------
    samples : :class:`numpy.ndarray`
        The waveform, read-only.
    rate : float
        Sample rate in samples/s.
    resting_potential : float
        The resting level. ``0`` for normalized templates.
    params : :class:`APParams` | None
        The parameters the waveform was generated from.
    normalized : bool
        Whether the deflection ``samples - resting_potential`` has unit l2 norm.
    """

    def __init__(
        self,
        samples: np.ndarray,
        rate: float,
        resting_potential: float,
        params: APParams | None = None,
        normalized: bool = False,
    ):
        """
        Constructor method.
        """
        samples = np.array(samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size < 2:
            raise InvalidTemplateError("a template needs a 1-D series of at least two samples")
        if not np.all(np.isfinite(samples)):
            raise InvalidTemplateError("template samples must be finite")
        if rate <= 0:
            raise InvalidTemplateError(f"sample rate must be positive, got {rate}")

        if normalized:
            norm = float(np.linalg.norm(samples - resting_potential))
            if abs(norm - 1.0) > 1e-9:
                raise InvalidTemplateError(f"normalized template has deflection norm {norm}")
        else:
            ends = (samples[0], samples[-1])
            if any(abs(v - resting_potential) > 1.0 for v in ends):
                raise InvalidTemplateError(
                    "first and last samples must lie within 1 mV of the resting potential"
                )
            crossings = _upcrossings(samples, _UPSTROKE_MV)
            if crossings.size != 1:
                raise InvalidTemplateError(
                    f"expected one upward crossing of {_UPSTROKE_MV} mV, found {crossings.size}"
                )

        self.samples = _freeze(samples)
        self.rate = float(rate)
        self.resting_potential = float(resting_potential)
        self.params = params
        self.normalized = normalized

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_ms(self) -> float:
        return self.samples.size * 1000.0 / self.rate

    @property
    def deflection(self) -> np.ndarray:
        """The waveform relative to rest."""
        return self.samples - self.resting_potential

    def normalize(self) -> Self:
        """
        .. versionadded :: 0.1.0

        Rescales the deflection to unit l2 norm around a zero resting level.

        Returns
        -------
        :class:`APTemplate`
            The normalized template. Normalizing twice is a no-op.
        """
        if self.normalized:
            return self
        deflection = self.deflection
        norm = np.linalg.norm(deflection)
        if norm == 0:
            raise InvalidTemplateError("cannot normalize a flat template")
        return self.__class__(
            deflection / norm, self.rate, 0.0, params=self.params, normalized=True
        )

    def crossing_time(self, threshold: float) -> float:
        """
        .. versionadded :: 0.1.0

        Time in ms of the first upward crossing of ``threshold``, linearly
        interpolated, or NaN when the waveform never crosses it.
        """
        crossings = _upcrossings(self.samples, threshold)
        if crossings.size == 0:
            return math.nan
        n = int(crossings[0])
        lo, hi = self.samples[n - 1], self.samples[n]
        frac = (threshold - lo) / (hi - lo)
        return (n - 1 + frac) * 1000.0 / self.rate

    def __repr__(self) -> str:
        return (
            f"APTemplate(n={self.samples.size}, rate={self.rate}, "
            f"rest={self.resting_potential}, normalized={self.normalized})"
        )


def _upcrossings(samples: np.ndarray, threshold: float) -> np.ndarray:
    """Indices n with samples[n-1] < threshold <= samples[n]."""
    below = samples[:-1] < threshold
    above = samples[1:] >= threshold
    return np.flatnonzero(below & above) + 1


def generate_ap_template(
    params: APParams | None = None,
    rate: float | None = None,
    duration: float | None = None,
    normalize: bool = False,
) -> APTemplate:
    """
    .. versionadded :: 0.1.0

    Samples the parametric action potential.

    Parameters
    ----------
    params : :class:`APParams`, optional
        Morphology parameters, by default the ``AP1`` preset.
    rate : float, optional
        Sample rate, by default :attr:`Settings.SAMPLE_RATE`.
    duration : float, optional
        Duration in ms, by default the built-in template duration.
    normalize : bool
        Return the normalized template.

    Returns
    -------
    :class:`APTemplate`
        The template.

    Raises
    ------
    :class:`EnvelopeError`
        When ``duration`` is shorter than upstroke + plateau + 5 repolarization
        time constants.
    """
    params = APParams.preset("AP1") if params is None else params
    rate = Settings.SAMPLE_RATE if rate is None else float(rate)
    duration = _Defaults.MORPHOLOGIES.DURATION_MS if duration is None else float(duration)

    if duration < params.envelope_ms:
        raise EnvelopeError(
            f"duration {duration} ms is shorter than the envelope upstroke + plateau + "
            f"5*repolarization = {params.upstroke_ms} + {params.plateau_ms} + "
            f"5*{params.repolarization_ms} = {params.envelope_ms} ms"
        )

    n = _ms_to_samples(duration, rate)
    t = np.arange(n) * 1000.0 / rate
    rest = params.resting_potential
    plateau_level = rest + params.plateau_mv
    plateau_end = params.upstroke_ms + params.plateau_ms
    at_plateau_end = plateau_level + (params.peak_mv - plateau_level) * math.exp(
        -params.plateau_ms / params.spike_ms
    )

    upstroke = rest + (params.peak_mv - rest) * 0.5 * (
        1.0 - np.cos(np.pi * np.clip(t / params.upstroke_ms, 0.0, 1.0))
    )
    spike = plateau_level + (params.peak_mv - plateau_level) * np.exp(
        -np.maximum(t - params.upstroke_ms, 0.0) / params.spike_ms
    )
    repolarization = rest + (at_plateau_end - rest) * np.exp(
        -np.maximum(t - plateau_end, 0.0) / params.repolarization_ms
    )
    samples = np.where(
        t < params.upstroke_ms, upstroke, np.where(t < plateau_end, spike, repolarization)
    )

    _log.debug(f"Generated a {duration} ms template at {rate} samples/s from {params!r}")
    template = APTemplate(samples, rate, rest, params=params)
    return template.normalize() if normalize else template


def morphology_family(
    reference: APParams | None = None,
    plateaus_ms: Sequence[float] = (130.0, 110.0, 90.0, 70.0, 50.0, 30.0, 10.0),
    rate: float | None = None,
    duration: float | None = None,
) -> list[APTemplate]:
    """
    .. versionadded :: 0.1.0

    Normalized templates whose plateau duration moves away from a reference.

    Parameters
    ----------
    reference : :class:`APParams`, optional
        The first member, by default ``AP1``.
    plateaus_ms : Sequence[float]
        Plateau durations of the remaining members, in order.
    rate : float, optional
        Sample rate.
    duration : float, optional
        Template duration, shared by every member.

    Returns
    -------
    list[:class:`APTemplate`]
        The reference followed by one template per plateau duration.
    """
    reference = APParams.preset("AP1") if reference is None else reference
    members = [reference] + [reference.replace(plateau_ms=p) for p in plateaus_ms]
    return [generate_ap_template(p, rate, duration, normalize=True) for p in members]


def uniform(rows: int, cols: int, value: float = _Defaults.CONDUCTIVITY) -> np.ndarray:
    """A conductivity field holding one value."""
    if value < 0:
        raise InvalidTissueError(f"conductivity must be nonnegative, got {value}")
    return np.full((rows, cols), float(value))


def rect_mask(shape: tuple[int, int], rows: tuple[int, int], cols: tuple[int, int]) -> np.ndarray:
    """
    Cells inside a rectangle, half-open row and column ranges like slices.
    """
    r0, r1 = rows
    c0, c1 = cols
    if not (0 <= r0 < r1 <= shape[0] and 0 <= c0 < c1 <= shape[1]):
        raise InvalidTissueError(f"rectangle rows {rows} cols {cols} is empty or outside {shape}")
    mask = np.zeros(shape, dtype=bool)
    mask[r0:r1, c0:c1] = True
    return mask


def line_mask(
    shape: tuple[int, int],
    start: tuple[float, float],
    end: tuple[float, float],
    width: float,
) -> np.ndarray:
    """
    .. versionadded :: 0.1.0

    Cells whose centre lies within ``width / 2`` of a segment.

    Parameters
    ----------
    shape : tuple[int, int]
        Grid rows and columns.
    start, end : tuple[float, float]
        Segment end points as (row, col) in cell units.
    width : float
        Line width in cells.

    Returns
    -------
    :class:`numpy.ndarray`
        Boolean mask.
    """
    if not width > 0:
        raise InvalidTissueError(f"line width must be positive, got {width}")
    rr, cc = np.mgrid[0 : shape[0], 0 : shape[1]]
    p0 = np.asarray(start, dtype=np.float64)
    direction = np.asarray(end, dtype=np.float64) - p0
    length2 = float(direction @ direction)
    if length2 == 0:
        u = np.zeros(shape)
    else:
        u = ((rr - p0[0]) * direction[0] + (cc - p0[1]) * direction[1]) / length2
        u = np.clip(u, 0.0, 1.0)
    dist = np.hypot(rr - (p0[0] + u * direction[0]), cc - (p0[1] + u * direction[1]))
    mask = dist <= width / 2.0
    if not mask.any():
        raise InvalidTissueError(f"line from {start} to {end} covers no cell")
    return mask


def rect_patch(
    field: np.ndarray, rows: tuple[int, int], cols: tuple[int, int], value: float
) -> np.ndarray:
    """Returns a copy of ``field`` with a rectangle set to ``value``."""
    return paint_patches(field, [("rect", rect_mask(field.shape, rows, cols), value)])


def line_patch(
    field: np.ndarray,
    start: tuple[float, float],
    end: tuple[float, float],
    width: float,
    value: float,
) -> np.ndarray:
    """Returns a copy of ``field`` with a line segment set to ``value``."""
    return paint_patches(field, [("line", line_mask(field.shape, start, end, width), value)])


def paint_patches(base: np.ndarray, patches: Sequence[tuple[str, np.ndarray, float]]) -> np.ndarray:
    """
    .. versionadded :: 0.1.0

    Paints named patches onto a copy of ``base``.

    Overlapping patches must agree on their value.

    Parameters
    ----------
    base : :class:`numpy.ndarray`
        The starting field.
    patches : Sequence[tuple[str, numpy.ndarray, float]]
        ``(name, mask, value)`` triples.

    Returns
    -------
    :class:`numpy.ndarray`
        The painted field.

    Raises
    ------
    :class:`InvalidTissueError`
        For a negative value.
    :class:`PatchOverlapError`
        When two overlapping patches disagree. It names both.
    """
    field = np.array(base, dtype=np.float64)
    owner = np.full(field.shape, -1, dtype=np.int64)
    for i, (name, mask, value) in enumerate(patches):
        if value < 0:
            raise InvalidTissueError(f"{name}: value must be nonnegative, got {value}")
        clash = mask & (owner >= 0) & (field != value)
        if clash.any():
            other = patches[int(owner[clash][0])][0]
            raise PatchOverlapError(
                f"{name} overlaps {other} with a different value ({value} vs "
                f"{field[clash][0]})",
                name,
                other,
            )
        field[mask] = value
        owner[mask] = i
    return field


class TissueModel(SimulationObject):
    """
    .. versionadded :: 0.1.0

    A 2-D grid of cells.

    Cells are numbered row-major. Cell ``(r, c)`` sits at
    ``x = c * spacing``, ``y = r * spacing``.

    Parameters
    ----------
    rows : int
        Grid rows.
    cols : int
        Grid columns.
    spacing : float
        Distance between neighbouring cells in mm.
    conductivity : :class:`numpy.ndarray`
        Nonnegative ``rows x cols`` field, read-only.
    morphology_id : :class:`numpy.ndarray`
        ``rows x cols`` indices into a template bank, read-only.
    stimuli : tuple[tuple[int, float], ...]
        ``(cell index, onset ms)`` pairs.
    n_morphologies : int
        Size of the template bank the model needs.
    """

    def __init__(
        self,
        rows: int,
        cols: int,
        spacing: float,
        conductivity: np.ndarray | float = _Defaults.CONDUCTIVITY,
        morphology_id: np.ndarray | int = 0,
        stimuli: Sequence[tuple[int, float]] = ((0, 0.0),),
        n_morphologies: int | None = None,
    ):
        """
        Constructor method.
        """
        if rows <= 0 or cols <= 0:
            raise InvalidTissueError(f"grid must have cells, got {rows}x{cols}")
        if not spacing > 0:
            raise InvalidTissueError(f"spacing must be positive, got {spacing}")

        conductivity = np.broadcast_to(np.asarray(conductivity, dtype=np.float64), (rows, cols))
        if not np.all(np.isfinite(conductivity)) or np.any(conductivity < 0):
            raise InvalidTissueError("conductivity must be finite and nonnegative everywhere")

        morphology_id = np.broadcast_to(np.asarray(morphology_id), (rows, cols))
        if not np.issubdtype(morphology_id.dtype, np.integer) or morphology_id.min() < 0:
            raise InvalidTissueError("morphology ids must be nonnegative integers")
        if n_morphologies is None:
            n_morphologies = int(morphology_id.max()) + 1
        if morphology_id.max() >= n_morphologies:
            raise InvalidTissueError(
                f"morphology id {int(morphology_id.max())} exceeds a bank of {n_morphologies}"
            )

        stimuli = tuple((int(cell), float(onset)) for cell, onset in stimuli)
        if not stimuli:
            raise InvalidTissueError("at least one stimulus is required")
        flat = conductivity.reshape(-1)
        for cell, onset in stimuli:
            if not 0 <= cell < rows * cols:
                raise InvalidTissueError(f"stimulus cell {cell} is outside the grid")
            if not (math.isfinite(onset) and onset >= 0):
                raise InvalidTissueError(f"stimulus onset must be finite and >= 0, got {onset}")
            if flat[cell] == 0:
                raise InvalidTissueError(f"stimulus cell {cell} has zero conductivity")

        self.rows = int(rows)
        self.cols = int(cols)
        self.spacing = float(spacing)
        self.conductivity = _freeze(np.array(conductivity))
        self.morphology_id = _freeze(np.array(morphology_id, dtype=np.int64))
        self.stimuli = stimuli
        self.n_morphologies = int(n_morphologies)

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell centres ``(x, y)`` in mm, row-major."""
        rr, cc = np.divmod(np.arange(self.n_cells), self.cols)
        return cc * self.spacing, rr * self.spacing

    def cell_index(self, row: int, col: int) -> int:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise InvalidTissueError(f"cell ({row}, {col}) is outside {self.rows}x{self.cols}")
        return row * self.cols + col

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "cols": self.cols,
            "spacing": self.spacing,
            "stimuli": [list(s) for s in self.stimuli],
            "n_morphologies": self.n_morphologies,
        }

    def __repr__(self) -> str:
        return (
            f"TissueModel({self.rows}x{self.cols}, spacing={self.spacing}, "
            f"stimuli={len(self.stimuli)}, morphologies={self.n_morphologies})"
        )


def homogeneous_scenario(
    rows: int = _Defaults.ROWS, cols: int = _Defaults.COLS, spacing: float = _Defaults.SPACING_MM
) -> TissueModel:
    """Uniform tissue, one morphology, stimulated from the top-left corner."""
    return TissueModel(rows, cols, spacing, uniform(rows, cols), 0, [(0, 0.0)])


def two_region_scenario(
    rows: int = _Defaults.ROWS, cols: int = _Defaults.COLS, spacing: float = _Defaults.SPACING_MM
) -> TissueModel:
    """
    One wavefront from the top-left corner over tissue whose central rectangle
    uses the second morphology.
    """
    region = rect_mask((rows, cols), (rows // 4, 3 * rows // 4), (cols // 4, 3 * cols // 4))
    return TissueModel(
        rows, cols, spacing, uniform(rows, cols), region.astype(np.int64), [(0, 0.0)], 2
    )


def colliding_scenario(
    rows: int = _Defaults.ROWS, cols: int = _Defaults.COLS, spacing: float = _Defaults.SPACING_MM
) -> TissueModel:
    """
    Two wavefronts from the top corners colliding on the centre axis, left
    half on the first morphology and right half on the second.
    """
    morphology = np.zeros((rows, cols), dtype=np.int64)
    morphology[:, cols // 2 :] = 1
    return TissueModel(
        rows, cols, spacing, uniform(rows, cols), morphology, [(0, 0.0), (cols - 1, 0.0)], 2
    )


def diagonal_block_scenario(
    rows: int = _Defaults.ROWS,
    cols: int = _Defaults.COLS,
    spacing: float = _Defaults.SPACING_MM,
    width_mm: float = 0.8,
    block_conductivity: float = _Defaults.BLOCK_CONDUCTIVITY,
) -> TissueModel:
    """
    .. versionadded :: 0.1.0

    Top-left stimulus facing a line of slow tissue along the anti-diagonal,
    from 10% to 90% of the grid.
    """
    mask = line_mask(
        (rows, cols),
        (0.1 * (rows - 1), 0.9 * (cols - 1)),
        (0.9 * (rows - 1), 0.1 * (cols - 1)),
        width_mm / spacing,
    )
    conductivity = paint_patches(uniform(rows, cols), [("block", mask, block_conductivity)])
    return TissueModel(rows, cols, spacing, conductivity, 0, [(0, 0.0)])


def plane_wave_scenario(
    rows: int = _Defaults.ROWS, cols: int = _Defaults.COLS, spacing: float = _Defaults.SPACING_MM
) -> TissueModel:
    """Uniform tissue stimulated along the whole top row."""
    return TissueModel(
        rows, cols, spacing, uniform(rows, cols), 0, [(c, 0.0) for c in range(cols)]
    )


class LATField(SimulationObject):
    """
    .. versionadded :: 0.1.0

    Activation times of every cell.

    Parameters
    ----------
    tau : :class:`numpy.ndarray`
        Per-cell activation time in ms, row-major. ``inf`` marks cells no
        source can reach.
    source_mask : :class:`numpy.ndarray`
        Per-cell flag, ``True`` on stimulus cells.
    shape : tuple[int, int]
        Grid rows and columns.
    order : :class:`numpy.ndarray`
        Cell indices in the order the solver accepted them.
    warnings : list[str]
        Conditions the solver reported. Empty when every cell was reached.
    """

    def __init__(
        self,
        tau: np.ndarray,
        source_mask: np.ndarray,
        shape: tuple[int, int],
        order: np.ndarray | None = None,
        warnings: list[str] | None = None,
    ):
        """
        Constructor method.
        """
        tau = np.array(tau, dtype=np.float64).reshape(-1)
        source_mask = np.array(source_mask, dtype=bool).reshape(-1)
        if tau.size != shape[0] * shape[1] or source_mask.size != tau.size:
            raise ShapeMismatchError((tau.size,), shape, "LAT field and grid")
        self.tau = _freeze(tau)
        self.source_mask = _freeze(source_mask)
        self.shape = (int(shape[0]), int(shape[1]))
        self.order = _freeze(np.asarray(order if order is not None else [], dtype=np.int64))
        self.warnings = list(warnings or [])

    @property
    def status(self) -> str:
        return "warning" if self.warnings else "ok"

    @property
    def reachable(self) -> np.ndarray:
        return np.isfinite(self.tau)

    def grid(self) -> np.ndarray:
        """The times as a ``rows x cols`` array."""
        return self.tau.reshape(self.shape)

    @classmethod
    def from_delays(cls: Self, tau: np.ndarray, shape: tuple[int, int] | None = None) -> Self:
        """
        .. versionadded :: 0.1.0

        Wraps arbitrary per-cell delays, for cell-level experiments where no
        wavefront is involved. Cells with the smallest delay act as sources.
        """
        tau = np.asarray(tau, dtype=np.float64).reshape(-1)
        shape = (1, tau.size) if shape is None else shape
        finite = np.isfinite(tau)
        sources = finite & (tau == tau[finite].min()) if finite.any() else finite
        return cls(tau, sources, shape)


def solve_lat(
    tissue: TissueModel, v0: float = _Defaults.V0, init_radius: int | None = None
) -> LATField:
    """
    .. versionadded :: 0.1.0

    First-arrival times by fast marching on the 4-connected grid.

    The local speed is ``v0 * sqrt(conductivity)``, zero-conductivity cells
    are never entered. Queue ties go to the lowest cell index.

    Parameters
    ----------
    tissue : :class:`TissueModel`
        The tissue.
    v0 : float
        Speed in mm/ms at unit conductivity.
    init_radius : int, optional
        Cells within this many cells of a stimulus whose surroundings share the
        stimulus conductivity get exact Euclidean arrival times. By default
        :attr:`Settings.FMM_INIT_RADIUS`.

    Returns
    -------
    :class:`LATField`
        The field. Its ``warnings`` list isolated cells, if any.
    """
    if not v0 > 0:
        raise InvalidTissueError(f"v0 must be positive, got {v0}")
    radius = Settings.FMM_INIT_RADIUS if init_radius is None else int(init_radius)

    rows, cols = tissue.shape
    conductivity = tissue.conductivity.reshape(-1)
    speed = v0 * np.sqrt(conductivity)
    with np.errstate(divide="ignore"):
        slowness_arr = np.where(speed > 0, tissue.spacing / speed, np.inf)

    tau_arr = np.full(tissue.n_cells, np.inf)
    source_mask = np.zeros(tissue.n_cells, dtype=bool)
    for cell, onset in tissue.stimuli:
        tau_arr[cell] = min(tau_arr[cell], onset)
        source_mask[cell] = True

    if radius > 0:
        for cell, onset in tissue.stimuli:
            r0, c0 = divmod(cell, cols)
            rs = slice(max(r0 - radius, 0), min(r0 + radius + 1, rows))
            cs = slice(max(c0 - radius, 0), min(c0 + radius + 1, cols))
            patch = tissue.conductivity[rs, cs]
            if not np.all(patch == conductivity[cell]):
                continue
            rr, cc = np.mgrid[rs, cs]
            dist = np.hypot(rr - r0, cc - c0)
            inside = dist <= radius
            idx = (rr * cols + cc)[inside]
            exact = onset + dist[inside] * slowness_arr[cell]
            tau_arr[idx] = np.minimum(tau_arr[idx], exact)

    # plain lists are much faster than numpy scalars inside the loop
    tau = tau_arr.tolist()
    slowness = slowness_arr.tolist()
    accepted = [False] * tissue.n_cells
    heap = [(t, i) for i, t in enumerate(tau) if t != math.inf]
    heapq.heapify(heap)
    order = []

    def _arrival(idx: int) -> float:
        r, c = divmod(idx, cols)
        a = min(
            tau[idx - cols] if r > 0 and accepted[idx - cols] else math.inf,
            tau[idx + cols] if r + 1 < rows and accepted[idx + cols] else math.inf,
        )
        b = min(
            tau[idx - 1] if c > 0 and accepted[idx - 1] else math.inf,
            tau[idx + 1] if c + 1 < cols and accepted[idx + 1] else math.inf,
        )
        h = slowness[idx]
        if abs(a - b) >= h:
            return min(a, b) + h
        return 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) ** 2))

    while heap:
        t, idx = heapq.heappop(heap)
        if accepted[idx] or t > tau[idx]:
            continue
        accepted[idx] = True
        order.append(idx)

        r, c = divmod(idx, cols)
        for nb, ok in (
            (idx - cols, r > 0),
            (idx - 1, c > 0),
            (idx + 1, c + 1 < cols),
            (idx + cols, r + 1 < rows),
        ):
            if not ok or accepted[nb] or slowness[nb] == math.inf:
                continue
            candidate = _arrival(nb)
            if candidate < tau[nb]:
                tau[nb] = candidate
                heapq.heappush(heap, (candidate, nb))

    tau_arr = np.array(tau)
    warnings = []
    reached = len(order)
    if reached == int(source_mask.sum()):
        warnings.append("no reachable cells beyond sources")
    isolated = int(np.count_nonzero(np.isinf(tau_arr) & (conductivity > 0)))
    if isolated:
        warnings.append(f"{isolated} conducting cells are unreachable from every source")
    for message in warnings:
        _log.warning(f"solve_lat: {message}")

    _log.info(f"Fast marching accepted {reached} of {tissue.n_cells} cells")
    return LATField(tau_arr, source_mask, tissue.shape, order=np.array(order), warnings=warnings)


def fractional_delay_taps(frac: np.ndarray) -> np.ndarray:
    """
    .. versionadded :: 0.1.0

    Hann-windowed sinc interpolation taps.

    Parameters
    ----------
    frac : :class:`numpy.ndarray`
        Fractional delays in samples, each in ``[0, 1)``.

    Returns
    -------
    :class:`numpy.ndarray`
        ``len(frac) x 16`` taps for offsets ``j = -7 .. 8``, each row summing
        to one. Tap ``j`` weighs input sample ``n - k - j`` when producing
        output sample ``n`` of a signal delayed by ``k + frac``.
    """
    x = _TAPS[None, :] - np.asarray(frac, dtype=np.float64).reshape(-1, 1)
    taps = np.sinc(x) * 0.5 * (1.0 + np.cos(np.pi * x / 8.0))
    return taps / taps.sum(axis=1, keepdims=True)


class CellSignalField(SimulationObject):
    """
    .. versionadded :: 0.1.0

    Per-cell traces ``a_c * s(t - tau_c)``, rendered on demand.

    Traces are materialized in chunks of cells so large grids never hold every
    trace in memory at once. Rendering is deterministic.

    Parameters
    ----------
    tissue : :class:`TissueModel`
        The tissue.
    lat : :class:`LATField`
        Activation times.
    templates : list[:class:`APTemplate`]
        Template bank indexed by the tissue's morphology ids.
    amplitudes : :class:`numpy.ndarray`
        Positive per-cell gains.
    n_samples : int
        Samples per trace.
    rate : float
        Sample rate.
    interpolation : str
        How sub-sample delays are applied. ``"spectral"`` multiplies the
        spectrum of the trace by a linear phase, which leaves every DFT
        magnitude over ``n_samples`` unchanged. ``"sinc"`` uses the 16-tap
        Hann-windowed sinc of :func:`fractional_delay_taps`.
    """

    def __init__(
        self,
        tissue: TissueModel,
        lat: LATField,
        templates: Sequence[APTemplate],
        amplitudes: np.ndarray,
        n_samples: int,
        rate: float,
        interpolation: str = "spectral",
    ):
        """
        Constructor method.
        """
        if interpolation not in _INTERPOLATIONS:
            raise InvalidTemplateError(
                f"interpolation must be one of {_INTERPOLATIONS}, got {interpolation!r}"
            )
        self.tissue = tissue
        self.lat = lat
        self.templates = tuple(templates)
        self.amplitudes = _freeze(np.array(amplitudes, dtype=np.float64))
        self.n_samples = int(n_samples)
        self.rate = float(rate)
        self.interpolation = interpolation

        length = max(len(t) for t in self.templates)
        self._rest = np.array([t.resting_potential for t in self.templates])
        self._samples = np.repeat(self._rest[:, None], length, axis=1)
        for i, t in enumerate(self.templates):
            self._samples[i, : len(t)] = t.samples
        self._deflection = self._samples - self._rest[:, None]
        # one-sided spectra of the deflections over the trace length
        self._spectra = np.fft.rfft(self._deflection, n=self.n_samples, axis=1)

    @property
    def n_cells(self) -> int:
        return self.tissue.n_cells

    @property
    def duration_ms(self) -> float:
        return self.n_samples * 1000.0 / self.rate

    def trace(self, cell: int) -> np.ndarray:
        """One cell's trace."""
        return self.matrix([cell])[0]

    def matrix(self, cells: Sequence[int] | np.ndarray | None = None) -> np.ndarray:
        """
        .. versionadded :: 0.1.0

        Traces of several cells.

        Parameters
        ----------
        cells : Sequence[int], optional
            Cell indices, by default every cell.

        Returns
        -------
        :class:`numpy.ndarray`
            ``len(cells) x n_samples`` matrix.
        """
        cells = np.arange(self.n_cells) if cells is None else np.asarray(cells, dtype=np.int64)
        return self._render(cells.reshape(-1))

    def chunks(self, size: int | None = None) -> Iterator[tuple[slice, np.ndarray]]:
        """
        Yields ``(cell slice, traces)`` over consecutive cell ranges, in order.
        """
        size = Settings.CHUNK_SIZE if size is None else int(size)
        for start in range(0, self.n_cells, size):
            stop = min(start + size, self.n_cells)
            yield slice(start, stop), self._render(np.arange(start, stop))

    def _render(self, cells: np.ndarray) -> np.ndarray:
        n_cells = cells.size
        length = self._samples.shape[1]
        out = np.empty((n_cells, self.n_samples))
        if n_cells == 0:
            return out

        tau = self.lat.tau[cells]
        amp = self.amplitudes[cells]
        mid = self.tissue.morphology_id.reshape(-1)[cells]
        rest = self._rest[mid]
        reachable = np.isfinite(tau)

        delay = np.where(reachable, tau, 0.0) * self.rate / 1000.0
        nearest = np.round(delay)
        integer = np.abs(delay - nearest) < _SNAP
        n = np.arange(self.n_samples)

        # whole-sample delays index the stored samples directly
        sel = np.flatnonzero(integer)
        if sel.size:
            src = n[None, :] - nearest[sel].astype(np.int64)[:, None]
            valid = (src >= 0) & (src < length)
            vals = self._samples[mid[sel][:, None], np.clip(src, 0, length - 1)]
            out[sel] = amp[sel, None] * np.where(valid, vals, rest[sel, None])

        sel = np.flatnonzero(~integer)
        if sel.size and self.interpolation == "spectral":
            d = delay[sel]
            bins = np.arange(self._spectra.shape[1])
            ramp = np.exp(-2j * np.pi * np.outer(d, bins) / self.n_samples)
            if self.n_samples % 2 == 0:
                # the Nyquist coefficient stays real, only its sign follows the delay
                ramp[:, -1] = np.where(np.cos(np.pi * d) < 0.0, -1.0, 1.0)
            acc = np.fft.irfft(self._spectra[mid[sel]] * ramp, n=self.n_samples, axis=1)
            out[sel] = amp[sel, None] * (rest[sel, None] + acc)
        elif sel.size:
            k = np.floor(delay[sel]).astype(np.int64)
            taps = fractional_delay_taps(delay[sel] - k)
            acc = np.zeros((sel.size, self.n_samples))
            rows = mid[sel][:, None]
            for jj, j in enumerate(_TAPS):
                src = n[None, :] - k[:, None] - j
                valid = (src >= 0) & (src < length)
                vals = self._deflection[rows, np.clip(src, 0, length - 1)]
                acc += taps[:, jj : jj + 1] * np.where(valid, vals, 0.0)
            out[sel] = amp[sel, None] * (rest[sel, None] + acc)

        silent = ~reachable
        if silent.any():
            out[silent] = (amp[silent] * rest[silent])[:, None]
        return out

    def __repr__(self) -> str:
        return f"CellSignalField(cells={self.n_cells}, samples={self.n_samples}, rate={self.rate})"


def synthesize_cell_signals(
    tissue: TissueModel,
    lat: LATField,
    templates: Sequence[APTemplate],
    amplitudes: np.ndarray | float | None = None,
    duration: float | None = None,
    interpolation: str = "spectral",
) -> CellSignalField:
    """
    .. versionadded :: 0.1.0

    Builds the per-cell signal field ``d_c(t) = a_c s_c(t - tau_c)``.

    Parameters
    ----------
    tissue : :class:`TissueModel`
        The tissue, its morphology ids index ``templates``.
    lat : :class:`LATField`
        Activation times for the tissue.
    templates : Sequence[:class:`APTemplate`]
        Template bank, all at one sample rate.
    amplitudes : :class:`numpy.ndarray` | float, optional
        Positive per-cell gains, by default ones.
    duration : float, optional
        Trace duration in ms. By default the latest activation plus its
        template, rounded up to an even number of ms.
    interpolation : str
        ``"spectral"`` (phase ramp, exact DFT magnitudes) or ``"sinc"``
        (16-tap windowed sinc) for sub-sample delays.

    Returns
    -------
    :class:`CellSignalField`
        The lazily rendered field.

    Raises
    ------
    :class:`InsufficientDurationError`
        When ``duration`` is shorter than the latest activation plus its
        template. The error names that cell.
    """
    templates = list(templates)
    if len(templates) < tissue.n_morphologies:
        raise InvalidTissueError(
            f"tissue needs {tissue.n_morphologies} templates, got {len(templates)}"
        )
    rates = {t.rate for t in templates}
    if len(rates) != 1:
        raise InvalidTemplateError(f"templates mix sample rates {sorted(rates)}")
    rate = rates.pop()
    if lat.tau.size != tissue.n_cells:
        raise ShapeMismatchError(lat.shape, tissue.shape, "LAT field and tissue")

    amplitudes = np.broadcast_to(
        np.asarray(1.0 if amplitudes is None else amplitudes, dtype=np.float64), (tissue.n_cells,)
    )
    if not np.all(amplitudes > 0):
        raise InvalidTissueError("every cell amplitude must be positive")

    finite = np.isfinite(lat.tau)
    template_ms = np.array([t.duration_ms for t in templates])
    ends = np.where(
        finite,
        np.where(finite, lat.tau, 0.0) + template_ms[tissue.morphology_id.reshape(-1)],
        -np.inf,
    )
    latest = int(np.argmax(ends)) if finite.any() else 0
    needed = float(ends[latest]) if finite.any() else float(template_ms.max())

    if duration is None:
        duration = 2 * math.ceil((needed - 1e-9) / 2.0)
    elif duration < needed - 1e-9:
        raise InsufficientDurationError(
            f"duration {duration} ms is shorter than cell {latest}'s activation at "
            f"{lat.tau[latest]} ms plus its {needed - lat.tau[latest]} ms template",
            cell=latest,
        )

    n_samples = _ms_to_samples(duration, rate)
    _log.debug(f"Cell signal field of {tissue.n_cells} cells over {duration} ms")
    return CellSignalField(tissue, lat, templates, amplitudes, n_samples, rate, interpolation)


def synthesize_ecg(
    n_beats: int = 10,
    rate: float | None = None,
    rr_ms: float = 1000.0,
    first_r_ms: float | None = None,
    jitter_ms: float = 0.0,
    snr_db: float | None = None,
    seed: int = 0,
) -> tuple[np.ndarray, list[float]]:
    """
    .. versionadded :: 0.1.0

    A seeded synthetic ECG built from Gaussian P, Q, R, S and T waves.

    Parameters
    ----------
    n_beats : int
        Number of beats.
    rate : float, optional
        Sample rate, by default :attr:`Settings.SAMPLE_RATE`.
    rr_ms : float
        Nominal RR interval.
    first_r_ms : float, optional
        Time of the first R peak, by default half an RR interval.
    jitter_ms : float
        Standard deviation of the per-beat R time jitter.
    snr_db : float, optional
        Adds white noise at this signal-to-noise ratio.
    seed : int
        Seed for jitter and noise.

    Returns
    -------
    tuple[numpy.ndarray, list[float]]
        The signal in mV and the true R peak times in ms.
    """
    rate = Settings.SAMPLE_RATE if rate is None else float(rate)
    first_r_ms = rr_ms / 2.0 if first_r_ms is None else first_r_ms
    rng = np.random.default_rng(seed)

    nominal = first_r_ms + rr_ms * np.arange(n_beats)
    r_times = nominal + (rng.normal(0.0, jitter_ms, n_beats) if jitter_ms > 0 else 0.0)
    duration = first_r_ms + (n_beats - 1) * rr_ms + (rr_ms - first_r_ms)
    t = np.arange(_ms_to_samples(duration, rate)) * 1000.0 / rate

    # (amplitude mV, offset from R ms, width ms)
    waves = (
        (0.15, -160.0, 25.0),
        (-0.15, -25.0, 8.0),
        (1.2, 0.0, 10.0),
        (-0.3, 25.0, 8.0),
        (0.3, 280.0, 40.0),
    )
    signal = np.zeros_like(t)
    for r in r_times:
        for amplitude, offset, width in waves:
            signal += amplitude * np.exp(-0.5 * ((t - r - offset) / width) ** 2)

    if snr_db is not None:
        noise_std = math.sqrt(np.mean(signal**2) / 10.0 ** (snr_db / 10.0))
        signal = signal + rng.normal(0.0, noise_std, signal.size)

    return signal, [float(r) for r in r_times]
