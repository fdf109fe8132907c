from typing_extensions import Self

from .base import ConstantsObject
from .errors import InvalidArrayError


class _Morphologies(ConstantsObject):
    """
    .. versionadded :: 0.1.0

    Built-in action potential morphologies.

    Both share every parameter except the plateau duration, which is what
    separates their magnitude spectra.
    """

    def __init__(self):
        self.AP1: dict = {
            "upstroke_ms": 2.0,
            "peak_mv": 20.0,
            "spike_ms": 3.0,
            "plateau_mv": 20.0,
            "plateau_ms": 150.0,
            "repolarization_ms": 50.0,
        }
        self.AP2: dict = dict(self.AP1, plateau_ms=80.0)

        self.RESTING_POTENTIAL: float = -80.0
        self.DURATION_MS: float = 420.0


class _ArrayPresets(ConstantsObject):
    """
    .. versionadded :: 0.1.0

    Rectangular electrode array presets as (rows, cols, pitch in mm).
    """

    def __init__(self):
        self.GRID_10X10: tuple = (10, 10, 2.0)
        self.GRID_32X32: tuple = (32, 32, 0.5)
        self.CLINICAL_8X24: tuple = (8, 24, 2.0)


class _Defaults(ConstantsObject):
    """
    .. versionadded :: 0.1.0

    Simulation and clinical-recipe defaults

    Parameters
    ----------
    ROWS : int
        Tissue rows.
    COLS : int
        Tissue columns.
    SPACING_MM : float
        Distance between neighbouring cells.
    CONDUCTIVITY : float
        Healthy conductivity.
    BLOCK_CONDUCTIVITY : float
        Conductivity of blocking tissue.
    V0 : float
        Conduction speed in mm/ms at unit conductivity.
    Z0_MM : float
        Electrode height above the tissue plane.
    GAIN : float
        Electrode gain.
    N_BINS : int
        Frequency bins per beat for the default window.
    MORPHOLOGIES : :class:`_Morphologies`
        The built-in AP parameter sets.
    ARRAYS : :class:`_ArrayPresets`
        The built-in electrode arrays.
    """

    ROWS: int = 200
    COLS: int = 200
    SPACING_MM: float = 0.1
    CONDUCTIVITY: float = 1.0
    BLOCK_CONDUCTIVITY: float = 0.01
    V0: float = 0.5

    Z0_MM: float = 1.0
    GAIN: float = 1.0

    N_BINS: int = 130
    QRS_BAND: tuple = (5.0, 15.0)
    QRS_INTEGRATION_MS: float = 150.0
    QRS_REFRACTORY_MS: float = 200.0

    MORPHOLOGIES: _Morphologies = _Morphologies()
    ARRAYS: _ArrayPresets = _ArrayPresets()

    @classmethod
    def array_preset(cls: Self, name: str) -> tuple[int, int, float]:
        """Looks up an electrode array preset.

        Parameters
        ----------
        name : str
            ``"10x10"``, ``"32x32"`` or ``"8x24"``.

        Returns
        -------
        tuple[int, int, float]
            Rows, columns and pitch in mm.
        """
        presets = {
            "10x10": cls.ARRAYS.GRID_10X10,
            "32x32": cls.ARRAYS.GRID_32X32,
            "8x24": cls.ARRAYS.CLINICAL_8X24,
        }
        try:
            return presets[name.lower()]
        except KeyError:
            raise InvalidArrayError(
                f"Unknown array preset {name!r}, expected one of {sorted(presets)}"
            ) from None
