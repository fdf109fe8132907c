import logging
import math
from typing import Sequence

import numpy as np

from .base import WavefrontObject
from .constants import _Defaults
from .errors import InvalidTissueError, ShapeMismatchError
from .leadfield import ElectrodeArray, record
from .simulation import (
    APTemplate,
    LATField,
    TissueModel,
    generate_ap_template,
    solve_lat,
    synthesize_cell_signals,
    uniform,
)
from .spectral import cell_magnitude_matrix, magnitude_matrix, whole_recording_beat
from .svdcore import SingularProfile, svd_profile

_log = logging.getLogger(__name__)

__all__ = (
    "WavefrontExperiment",
    "plane_wave_lat",
    "plane_wave_profile",
    "gain_gradient_effect",
    "curvature_effect",
    "cell_level_profile",
    "two_morphology_profile",
)


class WavefrontExperiment(WavefrontObject):
    """
    .. versionadded :: 0.1.0

    Shared setup of the electrode-level experiments: a uniform tissue with an
    electrode array centred over it and one normalized template.

    Parameters
    ----------
    rows : int
        Tissue rows.
    cols : int
        Tissue columns.
    spacing : float
        Cell spacing in mm.
    array : :class:`ElectrodeArray`
        The electrodes, in tissue coordinates.
    template : :class:`APTemplate`
        The template every cell uses.
    v0 : float
        Conduction speed in mm/ms.
    """

    def __init__(
        self,
        rows: int,
        cols: int,
        spacing: float,
        array: ElectrodeArray | None = None,
        template: APTemplate | None = None,
        v0: float = _Defaults.V0,
    ):
        """
        Constructor method.
        """
        self.rows = rows
        self.cols = cols
        self.spacing = spacing
        if array is None:
            center = ((cols - 1) * spacing / 2.0, (rows - 1) * spacing / 2.0)
            array = ElectrodeArray.preset("10x10", center=center)
        self.array = array
        self.template = generate_ap_template(normalize=True) if template is None else template
        self.v0 = v0

    def tissue(self, stimuli: Sequence[tuple[int, float]] = ((0, 0.0),)) -> TissueModel:
        return TissueModel(
            self.rows, self.cols, self.spacing, uniform(self.rows, self.cols), 0, stimuli
        )

    def profile(
        self, tissue: TissueModel, lat: LATField, amplitudes: np.ndarray | None = None
    ) -> SingularProfile:
        """Whole-array profile of one simulated beat."""
        field = synthesize_cell_signals(tissue, lat, [self.template], amplitudes)
        beat = whole_recording_beat(record(field, self.array))
        return svd_profile(magnitude_matrix(beat))


def plane_wave_lat(
    tissue: TissueModel, v0: float, angle: float = 90.0, onset: float = 0.0
) -> LATField:
    """
    .. versionadded :: 0.1.0

    Exact activation times of a flat wavefront.

    Parameters
    ----------
    tissue : :class:`TissueModel`
        The tissue, only its geometry is used.
    v0 : float
        Front speed in mm/ms.
    angle : float
        Propagation direction in degrees from the +x axis, ``90`` travels
        down the rows.
    onset : float
        Time the front leaves the first cell.

    Returns
    -------
    :class:`LATField`
        ``tau = onset + (d - min d) / v0`` with ``d`` the distance along the
        propagation direction.
    """
    if not v0 > 0:
        raise InvalidTissueError(f"v0 must be positive, got {v0}")
    x, y = tissue.coordinates
    theta = math.radians(angle)
    d = x * math.cos(theta) + y * math.sin(theta)
    tau = onset + (d - d.min()) / v0
    return LATField(tau, np.isclose(tau, onset), tissue.shape)


def plane_wave_profile(
    experiment: WavefrontExperiment, angle: float = 90.0, amplitudes: np.ndarray | None = None
) -> SingularProfile:
    """Whole-array profile under an exact plane wave."""
    tissue = experiment.tissue()
    return experiment.profile(tissue, plane_wave_lat(tissue, experiment.v0, angle), amplitudes)


def gain_gradient_effect(
    experiment: WavefrontExperiment, alpha: float, angle: float = 90.0
) -> float:
    """
    .. versionadded :: 0.1.0

    Change of normalized sigma 2 when cell gains follow ``exp(alpha * x)``
    under a plane wave.

    Parameters
    ----------
    experiment : :class:`WavefrontExperiment`
        The setup.
    alpha : float
        Gain gradient in 1/mm along x.
    angle : float
        Propagation direction.

    Returns
    -------
    float
        ``sigma2(graded) - sigma2(uniform)``.
    """
    tissue = experiment.tissue()
    x, _ = tissue.coordinates
    x = x - x.mean()
    flat = plane_wave_profile(experiment, angle)
    graded = plane_wave_profile(experiment, angle, np.exp(alpha * x))
    _log.debug(f"Gain gradient {alpha}/mm moved sigma 2 from {flat.sigma2} to {graded.sigma2}")
    return graded.sigma2 - flat.sigma2


def curvature_effect(
    experiment: WavefrontExperiment, source: tuple[int, int] = (0, 0)
) -> tuple[float, float]:
    """
    .. versionadded :: 0.1.0

    Normalized sigma 2 of a plane wave and of a point-source (curved) wave
    over the same array.

    Returns
    -------
    tuple[float, float]
        ``(plane, curved)``.
    """
    plane = plane_wave_profile(experiment)
    tissue = experiment.tissue([(source[0] * experiment.cols + source[1], 0.0)])
    curved = experiment.profile(tissue, solve_lat(tissue, experiment.v0))
    return plane.sigma2, curved.sigma2


def cell_level_profile(
    templates: Sequence[APTemplate],
    morphology_ids: np.ndarray,
    delays: np.ndarray,
    amplitudes: np.ndarray | None = None,
) -> SingularProfile:
    """
    .. versionadded :: 0.1.0

    Profile of ``B`` built directly from cell traces, no electrodes involved.

    Parameters
    ----------
    templates : Sequence[:class:`APTemplate`]
        The template bank.
    morphology_ids : :class:`numpy.ndarray`
        Template index per cell.
    delays : :class:`numpy.ndarray`
        Activation delay per cell in ms.
    amplitudes : :class:`numpy.ndarray`, optional
        Positive gain per cell, by default ones.

    Returns
    -------
    :class:`SingularProfile`
        The cell-level profile.
    """
    morphology_ids = np.asarray(morphology_ids, dtype=np.int64).reshape(-1)
    delays = np.asarray(delays, dtype=np.float64).reshape(-1)
    if morphology_ids.size != delays.size:
        raise ShapeMismatchError(morphology_ids.shape, delays.shape, "morphology ids and delays")
    n = delays.size
    tissue = TissueModel(1, n, 1.0, 1.0, morphology_ids[None, :], [(0, 0.0)], len(templates))
    field = synthesize_cell_signals(tissue, LATField.from_delays(delays), templates, amplitudes)
    return svd_profile(cell_magnitude_matrix(field))


def two_morphology_profile(
    first: APTemplate,
    second: APTemplate,
    n_first: int,
    n_second: int,
    max_delay_ms: float = 50.0,
    seed: int = 0,
) -> SingularProfile:
    """
    .. versionadded :: 0.1.0

    Cell-level profile of two morphology groups with equal gains and random
    delays.

    Parameters
    ----------
    first, second : :class:`APTemplate`
        The two normalized templates.
    n_first, n_second : int
        Group sizes.
    max_delay_ms : float
        Delays are drawn uniformly from ``0 .. max_delay_ms``.
    seed : int
        Generator seed.

    Returns
    -------
    :class:`SingularProfile`
        The profile.
    """
    rng = np.random.default_rng(seed)
    n = n_first + n_second
    delays = rng.uniform(0.0, max_delay_ms, n)
    ids = np.r_[np.zeros(n_first, dtype=np.int64), np.ones(n_second, dtype=np.int64)]
    return cell_level_profile([first, second], ids, delays)

