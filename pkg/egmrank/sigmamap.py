import logging
import math
from pathlib import Path
from typing import Sequence

import numpy as np

from ._util import _freeze
from .base import SigmaMapObject
from .config import Settings
from .errors import InvalidSubsetError, LayoutMismatchError
from .spectral import BeatWindow, magnitude_matrix
from .svdcore import SingularProfile, svd_profile

_log = logging.getLogger(__name__)

__all__ = (
    "Sigma2Map",
    "window_channels",
    "sigma2_map",
    "subset_profile",
    "render_pgm",
    "write_pgm",
)


class Sigma2Map(SigmaMapObject):
    """
    .. versionadded :: 0.1.0

    Normalized sigma 2 of every square electrode subset of a rectangular array.

    Pixel ``(r, c)`` covers channels in rows ``r .. r + window - 1`` and
    columns ``c .. c + window - 1`` of the layout.

    Parameters
    ----------
    values : :class:`numpy.ndarray`
        ``(rows - window + 1) x (cols - window + 1)`` values in ``[0, 1]``.
    window : int
        Side of the electrode subsets.
    layout : tuple[int, int]
        The array layout.
    profiles : list[:class:`SingularProfile`] | None
        Full profile of every pixel, row-major.
    beat_index : int | None
        The beat the map was computed on.
    """

    def __init__(
        self,
        values: np.ndarray,
        window: int,
        layout: tuple[int, int],
        profiles: Sequence[SingularProfile] | None = None,
        beat_index: int | None = None,
    ):
        """
        Constructor method.
        """
        values = np.array(values, dtype=np.float64)
        expected = (layout[0] - window + 1, layout[1] - window + 1)
        if values.shape != expected:
            raise LayoutMismatchError(
                f"a {window}x{window} map over {layout[0]}x{layout[1]} is {expected}, "
                f"got {values.shape}"
            )
        if np.any(values < 0) or np.any(values > 1) or not np.all(np.isfinite(values)):
            raise LayoutMismatchError("map values must lie in [0, 1]")

        self.values = _freeze(values)
        self.window = int(window)
        self.layout = (int(layout[0]), int(layout[1]))
        self.profiles = list(profiles) if profiles is not None else None
        self.beat_index = beat_index

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def pixel_profile(self, row: int, col: int) -> SingularProfile:
        """The full profile behind one pixel."""
        if self.profiles is None:
            raise LayoutMismatchError("this map was loaded without per-pixel profiles")
        return self.profiles[row * self.values.shape[1] + col]

    def __repr__(self) -> str:
        rows, cols = self.shape
        return f"Sigma2Map({rows}x{cols}, window={self.window}, max={self.values.max():.4g})"


def window_channels(layout: tuple[int, int], row: int, col: int, window: int) -> list[int]:
    """Row-major channels of the subset with top-left corner ``(row, col)``."""
    cols = layout[1]
    return [(row + i) * cols + col + j for i in range(window) for j in range(window)]


def sigma2_map(
    beat: BeatWindow,
    layout: tuple[int, int] | None = None,
    window: int | None = None,
    workers: int | None = None,
    taper: bool = False,
) -> Sigma2Map:
    """
    .. versionadded :: 0.1.0

    Slides a square window over the array with unit stride and keeps the
    normalized sigma 2 of every subset.

    Parameters
    ----------
    beat : :class:`BeatWindow`
        The beat, channels in row-major layout order.
    layout : tuple[int, int], optional
        ``(rows, cols)``, by default the beat's array layout.
    window : int, optional
        Subset side, by default :attr:`Settings.SIGMA2_WINDOW`.
    workers : int, optional
        Pixel-level worker threads.
    taper : bool
        Taper the beat before the DFT.

    Returns
    -------
    :class:`Sigma2Map`
        The map, with per-pixel profiles.

    Raises
    ------
    :class:`LayoutMismatchError`
        When the layout does not match the channels or is smaller than the window.
    """
    layout = beat.layout if layout is None else (int(layout[0]), int(layout[1]))
    window = Settings.SIGMA2_WINDOW if window is None else int(window)
    if layout is None:
        raise LayoutMismatchError("the beat carries no rectangular layout")
    if layout[0] * layout[1] != beat.n_channels:
        raise LayoutMismatchError(
            f"layout {layout[0]}x{layout[1]} does not match {beat.n_channels} channels"
        )
    if window < 1 or layout[0] < window or layout[1] < window:
        raise LayoutMismatchError(
            f"a {window}x{window} window does not fit {layout[0]}x{layout[1]}"
        )

    spectra = magnitude_matrix(beat, taper=taper)
    out_rows, out_cols = layout[0] - window + 1, layout[1] - window + 1
    pixels = [(r, c) for r in range(out_rows) for c in range(out_cols)]

    def _pixel(pixel: tuple[int, int]) -> SingularProfile:
        return svd_profile(spectra.subset(window_channels(layout, pixel[0], pixel[1], window)))

    profiles = Settings.parallel_map(_pixel, pixels, workers)
    values = np.array([p.sigma2 for p in profiles]).reshape(out_rows, out_cols)
    _log.info(f"Sigma 2 map of {len(pixels)} pixels, max {values.max():.4g}")
    return Sigma2Map(values, window, layout, profiles, beat.source_beat_index)


def subset_profile(
    beat: BeatWindow, channel_subset: Sequence[int], taper: bool = False
) -> SingularProfile:
    """
    .. versionadded :: 0.1.0

    Profile of ``B`` restricted to some channels.

    Raises
    ------
    :class:`InvalidSubsetError`
        For out-of-range or repeated channels.
    """
    if not len(channel_subset):
        raise InvalidSubsetError("a channel subset must not be empty")
    return svd_profile(magnitude_matrix(beat, taper=taper, channels=channel_subset))


def _gray(value: float, clamp: float) -> int:
    return int(math.floor(255.0 * min(value / clamp, 1.0) + 0.5))


def render_pgm(sigma_map: Sigma2Map, clamp: float | None = None) -> str:
    """
    .. versionadded :: 0.1.0

    ASCII ``P2`` graymap of the map, full scale at ``clamp``.

    Parameters
    ----------
    sigma_map : :class:`Sigma2Map`
        The map.
    clamp : float, optional
        Value drawn white, by default :attr:`Settings.SIGMA2_CLAMP`.

    Returns
    -------
    str
        The file contents.
    """
    clamp = Settings.SIGMA2_CLAMP if clamp is None else clamp
    rows, cols = sigma_map.shape
    lines = ["P2", f"{cols} {rows}", "255"]
    for row in sigma_map.values:
        lines.append(" ".join(str(_gray(v, clamp)) for v in row))
    return "\n".join(lines) + "\n"


def write_pgm(sigma_map: Sigma2Map, path: str | Path, clamp: float | None = None) -> None:
    Path(path).write_text(render_pgm(sigma_map, clamp), encoding="ascii")
    _log.info(f"Wrote {path}")
