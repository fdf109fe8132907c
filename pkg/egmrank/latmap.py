import logging
from typing import Sequence

import numpy as np
from typing_extensions import Self

from ._util import _freeze, _grid_edges, _samples_to_ms
from .base import LatMapObject
from .config import Settings
from .errors import DataError, LayoutMismatchError, ShapeMismatchError
from .sigmamap import Sigma2Map, window_channels
from .simulation import CellSignalField
from .spectral import BeatWindow

_log = logging.getLogger(__name__)

__all__ = (
    "ActivationMap",
    "BlockSet",
    "ComparisonReport",
    "cell_activation_map",
    "egm_activation_map",
    "detect_blocks",
    "compare_maps",
)

CELL_THRESHOLD = "cell-threshold"
STEEPEST_DESCENT = "steepest-descent"


class ActivationMap(LatMapObject):
    """
    .. versionadded :: 0.1.0

    Local activation times of the cells of a tissue or the channels of an array.

    Parameters
    ----------
    lat : :class:`numpy.ndarray`
        Activation time per site in ms, ``NaN`` where no activation was found.
    method : str
        ``"cell-threshold"`` or ``"steepest-descent"``.
    shape : tuple[int, int] | None
        Grid shape of the sites, row-major.
    scores : :class:`numpy.ndarray` | None
        Deflection strength per site, only for the steepest-descent method.
    """

    def __init__(
        self,
        lat: np.ndarray,
        method: str,
        shape: tuple[int, int] | None = None,
        scores: np.ndarray | None = None,
    ):
        """
        Constructor method.
        """
        lat = np.array(lat, dtype=np.float64).reshape(-1)
        if method not in (CELL_THRESHOLD, STEEPEST_DESCENT):
            raise DataError(f"unknown activation method {method!r}")
        if shape is not None:
            shape = (int(shape[0]), int(shape[1]))
            if shape[0] * shape[1] != lat.size:
                raise LayoutMismatchError(
                    f"layout {shape[0]}x{shape[1]} does not match {lat.size} activation times"
                )
        if np.any(np.isinf(lat)):
            raise DataError("activation times must be finite or NaN")

        self.lat = _freeze(lat)
        self.method = method
        self.shape = shape
        self.scores = _freeze(np.array(scores, dtype=np.float64)) if scores is not None else None

    def __len__(self) -> int:
        return self.lat.size

    @property
    def detected(self) -> np.ndarray:
        return ~np.isnan(self.lat)

    def grid(self) -> np.ndarray:
        """Activation times reshaped to the grid."""
        if self.shape is None:
            raise LayoutMismatchError("this activation map has no grid shape")
        return self.lat.reshape(self.shape)

    def shifted(self, offset: float) -> Self:
        return self.__class__(self.lat + offset, self.method, self.shape, self.scores)

    def __repr__(self) -> str:
        return (
            f"ActivationMap({self.method}, sites={len(self)}, "
            f"detected={int(self.detected.sum())})"
        )


def _first_upcrossings(traces: np.ndarray, threshold: float) -> np.ndarray:
    above = traces >= threshold
    crossing = ~above[:, :-1] & above[:, 1:]
    found = crossing.any(axis=1)
    n = np.argmax(crossing, axis=1) + 1
    rows = np.arange(traces.shape[0])
    before, after = traces[rows, n - 1], traces[rows, n]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (n - 1) + (threshold - before) / (after - before)
    return np.where(found, t, np.nan)


def cell_activation_map(
    cell_signals: CellSignalField | np.ndarray,
    threshold: float | None = None,
    rate: float | None = None,
) -> ActivationMap:
    """
    .. versionadded :: 0.1.0

    Activation time of every cell as the first upward crossing of a voltage
    threshold, interpolated linearly between samples.

    Parameters
    ----------
    cell_signals : :class:`CellSignalField` | :class:`numpy.ndarray`
        The cell traces, either lazy or as an ``N_c x T`` matrix.
    threshold : float, optional
        Crossing level in mV, by default :attr:`Settings.ACTIVATION_THRESHOLD_MV`.
    rate : float, optional
        Sample rate for matrix input, by default :attr:`Settings.SAMPLE_RATE`.

    Returns
    -------
    :class:`ActivationMap`
        ``NaN`` for cells that never cross, such as unreachable ones.
    """
    threshold = Settings.ACTIVATION_THRESHOLD_MV if threshold is None else float(threshold)
    if isinstance(cell_signals, CellSignalField):
        rate = cell_signals.rate
        shape = cell_signals.tissue.shape
        blocks = cell_signals.chunks()
    else:
        traces = np.asarray(cell_signals, dtype=np.float64)
        if traces.ndim == 1:
            traces = traces[None, :]
        rate = Settings.SAMPLE_RATE if rate is None else float(rate)
        shape = None
        blocks = [(slice(0, traces.shape[0]), traces)]

    parts, low, high = [], np.inf, -np.inf
    for _, block in blocks:
        parts.append(_first_upcrossings(block, threshold))
        low, high = min(low, block.min()), max(high, block.max())
    lat = _samples_to_ms(np.concatenate(parts), rate)

    if not low <= threshold <= high:
        _log.warning(
            f"Activation threshold {threshold} mV lies outside the signal range "
            f"[{low:.4g}, {high:.4g}]"
        )
    _log.debug(f"Detected activation in {int(np.sum(~np.isnan(lat)))} of {lat.size} cells")
    return ActivationMap(lat, CELL_THRESHOLD, shape)


def egm_activation_map(
    beat: BeatWindow,
    layout: tuple[int, int] | None = None,
    floor: float | None = None,
) -> ActivationMap:
    """
    .. versionadded :: 0.1.0

    Activation time of every channel as the steepest negative slope within the
    beat, refined to sub-sample resolution with a parabola through the
    neighbouring first differences.

    A fractionated channel reports only its strongest deflection.

    Parameters
    ----------
    beat : :class:`BeatWindow`
        The beat, channels in row-major layout order.
    layout : tuple[int, int], optional
        ``(rows, cols)``, by default the beat's array layout.
    floor : float, optional
        Minimal deflection score, by default :attr:`Settings.DEFLECTION_FLOOR`.

    Returns
    -------
    :class:`ActivationMap`
        Times in ms from the window start. Channels whose peak-to-peak is below
        ``floor`` times the largest one get ``NaN``.
    """
    layout = beat.layout if layout is None else (int(layout[0]), int(layout[1]))
    floor = Settings.DEFLECTION_FLOOR if floor is None else float(floor)
    if layout is not None and layout[0] * layout[1] != beat.n_channels:
        raise LayoutMismatchError(
            f"layout {layout[0]}x{layout[1]} does not match {beat.n_channels} channels"
        )

    samples = beat.samples
    slope = np.diff(samples, axis=1)
    k = np.argmin(slope, axis=1)
    rows = np.arange(beat.n_channels)
    inner = (k > 0) & (k < slope.shape[1] - 1)
    y0 = slope[rows, np.clip(k - 1, 0, None)]
    y1 = slope[rows, k]
    y2 = slope[rows, np.clip(k + 1, None, slope.shape[1] - 1)]
    curvature = y0 - 2.0 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        offset = np.where(inner & (curvature != 0), 0.5 * (y0 - y2) / curvature, 0.0)
    lat = _samples_to_ms(k + 0.5 + offset, beat.rate)

    ptp = np.ptp(samples, axis=1)
    peak = ptp.max()
    scores = ptp / peak if peak > 0 else np.zeros_like(ptp)
    lat = np.where((ptp > 0) & (scores >= floor), lat, np.nan)
    silent = int(np.isnan(lat).sum())
    if silent:
        _log.debug(f"{silent} channels fell below the deflection floor {floor}")
    return ActivationMap(lat, STEEPEST_DESCENT, layout, scores)


class BlockSet(LatMapObject):
    """
    .. versionadded :: 0.1.0

    Adjacent channel pairs whose activation times differ by at least a threshold.

    Parameters
    ----------
    edges : Sequence[tuple[int, int]]
        Flagged pairs, each joining 4-adjacent channels of ``layout``.
    threshold : float
        The threshold in ms.
    layout : tuple[int, int]
        The array layout.
    """

    def __init__(
        self,
        edges: Sequence[tuple[int, int]],
        threshold: float,
        layout: tuple[int, int],
    ):
        """
        Constructor method.
        """
        layout = (int(layout[0]), int(layout[1]))
        normalized = sorted({(min(a, b), max(a, b)) for a, b in edges})
        adjacent = set(_grid_edges(*layout))
        for edge in normalized:
            if edge not in adjacent:
                raise LayoutMismatchError(
                    f"channels {edge[0]} and {edge[1]} are not adjacent in "
                    f"{layout[0]}x{layout[1]}"
                )

        self.edges = normalized
        self.threshold = float(threshold)
        self.layout = layout

    def __len__(self) -> int:
        return len(self.edges)

    def __contains__(self, edge: tuple[int, int]) -> bool:
        return (min(edge), max(edge)) in set(self.edges)

    @property
    def channels(self) -> set[int]:
        return {c for edge in self.edges for c in edge}

    def components(self) -> list[list[tuple[int, int]]]:
        """
        .. versionadded :: 0.1.0

        Groups flagged edges into bands that share channels.

        Returns
        -------
        list[list[tuple[int, int]]]
            Connected bands, largest first, edges sorted inside each band.
        """
        parent = {c: c for c in self.channels}

        def _find(c: int) -> int:
            while parent[c] != c:
                parent[c] = parent[parent[c]]
                c = parent[c]
            return c

        for a, b in self.edges:
            ra, rb = _find(a), _find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)

        bands: dict[int, list[tuple[int, int]]] = {}
        for edge in self.edges:
            bands.setdefault(_find(edge[0]), []).append(edge)
        return sorted(bands.values(), key=lambda band: (-len(band), band[0]))

    def __repr__(self) -> str:
        return f"BlockSet(edges={len(self)}, threshold={self.threshold} ms)"


def detect_blocks(
    act_map: ActivationMap,
    layout: tuple[int, int] | None = None,
    threshold: float | None = None,
) -> BlockSet:
    """
    .. versionadded :: 0.1.0

    Flags conduction block between 4-adjacent channels.

    Parameters
    ----------
    act_map : :class:`ActivationMap`
        Channel activation times.
    layout : tuple[int, int], optional
        ``(rows, cols)``, by default the map's shape.
    threshold : float, optional
        Minimal LAT difference in ms, by default :attr:`Settings.BLOCK_THRESHOLD_MS`.

    Returns
    -------
    :class:`BlockSet`
        Every pair with ``|dLAT| >= threshold``. Pairs with an undetected end are
        skipped.
    """
    layout = act_map.shape if layout is None else (int(layout[0]), int(layout[1]))
    threshold = Settings.BLOCK_THRESHOLD_MS if threshold is None else float(threshold)
    if layout is None:
        raise LayoutMismatchError("block detection needs a rectangular layout")
    if layout[0] * layout[1] != len(act_map):
        raise LayoutMismatchError(
            f"layout {layout[0]}x{layout[1]} does not match {len(act_map)} activation times"
        )

    lat = act_map.lat
    flagged = []
    for a, b in _grid_edges(*layout):
        delta = abs(lat[a] - lat[b])
        if not np.isnan(delta) and delta >= threshold:
            flagged.append((a, b))
    _log.info(f"Flagged {len(flagged)} block edges at {threshold} ms")
    return BlockSet(flagged, threshold, layout)


class ComparisonReport(LatMapObject):
    """
    .. versionadded :: 0.1.0

    Agreement between a block set and a sigma 2 map of the same beat.

    A pixel covers a block edge when both channels of the edge lie in its
    electrode subset.

    Parameters
    ----------
    elevated : list[tuple[int, int]]
        Pixels above the sigma 2 threshold.
    elevated_with_block : list[tuple[int, int]]
        Elevated pixels that cover at least one block edge.
    blocks_without_elevation : list[tuple[int, int]]
        Block edges no elevated pixel covers.
    threshold : float
        The sigma 2 threshold.
    """

    def __init__(
        self,
        elevated: Sequence[tuple[int, int]],
        elevated_with_block: Sequence[tuple[int, int]],
        blocks_without_elevation: Sequence[tuple[int, int]],
        threshold: float,
        n_block_edges: int,
    ):
        """
        Constructor method.
        """
        self.elevated = list(elevated)
        self.elevated_with_block = list(elevated_with_block)
        self.blocks_without_elevation = list(blocks_without_elevation)
        self.threshold = threshold
        self.n_block_edges = n_block_edges

    @property
    def elevated_without_block(self) -> list[tuple[int, int]]:
        covered = set(self.elevated_with_block)
        return [p for p in self.elevated if p not in covered]

    @property
    def block_fraction(self) -> float:
        """Share of elevated pixels that cover a block edge, ``0`` when none are elevated."""
        if not self.elevated:
            return 0.0
        return len(self.elevated_with_block) / len(self.elevated)

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "elevated_pixels": len(self.elevated),
            "block_edges": self.n_block_edges,
            "block_fraction": self.block_fraction,
            "elevated_without_block": [list(p) for p in self.elevated_without_block],
            "blocks_without_elevation": [list(e) for e in self.blocks_without_elevation],
        }

    def __repr__(self) -> str:
        return (
            f"ComparisonReport(elevated={len(self.elevated)}, blocks={self.n_block_edges}, "
            f"fraction={self.block_fraction:.3g})"
        )


def compare_maps(
    act_map: ActivationMap,
    blocks: BlockSet,
    sigma_map: Sigma2Map,
    threshold: float = 0.05,
) -> ComparisonReport:
    """
    .. versionadded :: 0.1.0

    Lines a block set up against a sigma 2 map.

    Parameters
    ----------
    act_map : :class:`ActivationMap`
        The channel activation map behind ``blocks``.
    blocks : :class:`BlockSet`
        Flagged edges.
    sigma_map : :class:`Sigma2Map`
        The sigma 2 map of the same beat.
    threshold : float
        Normalized sigma 2 above which a pixel counts as elevated.

    Returns
    -------
    :class:`ComparisonReport`
        The report.

    Raises
    ------
    :class:`ShapeMismatchError`
        When the three inputs disagree on the layout.
    """
    if blocks.layout != sigma_map.layout or (
        act_map.shape is not None and act_map.shape != sigma_map.layout
    ):
        raise ShapeMismatchError(blocks.layout, sigma_map.layout, "block set and sigma 2 map")

    rows, cols = sigma_map.shape
    elevated, with_block, covered = [], [], set()
    for r in range(rows):
        for c in range(cols):
            channels = set(window_channels(sigma_map.layout, r, c, sigma_map.window))
            inside = [e for e in blocks.edges if e[0] in channels and e[1] in channels]
            if sigma_map.values[r, c] > threshold:
                elevated.append((r, c))
                covered.update(inside)
                if inside:
                    with_block.append((r, c))

    missed = [e for e in blocks.edges if e not in covered]
    report = ComparisonReport(elevated, with_block, missed, threshold, len(blocks))
    _log.info(f"Compared maps: {report!r}")
    return report
