import csv
import logging
import math
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.stats import norm, rankdata
from typing_extensions import Self

from ._util import _frmt_float
from .base import StatsObject
from .errors import CSVParseError, InsufficientGroupError, LabelError
from .svdcore import SingularProfile

_log = logging.getLogger(__name__)

__all__ = (
    "RHYTHMS",
    "BeatFeature",
    "BeatFeatureTable",
    "BoxPlot",
    "LocationComparison",
    "aggregate",
    "rank_sum_test",
    "boxplot_summary",
    "location_comparison",
)

RHYTHMS = ("SR", "AF")
GROUP_KEYS = ("recording", "location", "rhythm")
_EXACT_LIMIT = 20
_MIN_GROUP = 3
_CSV_HEADER = ["recording", "location", "rhythm", "beat", "sigma2", "profile"]


class BeatFeature(NamedTuple):
    """One beat of one recording."""

    recording: str
    location: str
    rhythm: str
    beat: int
    sigma2: float
    profile: tuple[float, ...]


class BoxPlot(NamedTuple):
    """
    Five-number summary. ``low`` and ``high`` are the whisker ends, the
    extreme values inside ``1.5 * IQR`` of the quartiles.
    """

    low: float
    q25: float
    median: float
    q75: float
    high: float
    outliers: tuple[float, ...]


class LocationComparison(NamedTuple):
    location: str
    n_sr: int
    n_af: int
    u: float
    p: float


def _check_labels(recording: str, location: str, rhythm: str) -> None:
    if not recording or not location:
        raise LabelError("every beat needs a recording id and a location")
    if rhythm not in RHYTHMS:
        raise LabelError(f"rhythm must be one of {', '.join(RHYTHMS)}, got {rhythm!r}")


class BeatFeatureTable(StatsObject):
    """
    .. versionadded :: 0.1.0

    Normalized sigma 2 of every analysed beat with its labels.

    Parameters
    ----------
    rows : Iterable[:class:`BeatFeature`]
        The beats.
    """

    def __init__(self, rows: Iterable[BeatFeature] = ()):
        """
        Constructor method.
        """
        self.rows: list[BeatFeature] = []
        for row in rows:
            _check_labels(row.recording, row.location, row.rhythm)
            if not 0.0 <= row.sigma2 <= 1.0:
                raise LabelError(f"sigma 2 must lie in [0, 1], got {row.sigma2}")
            self.rows.append(row)

    def __len__(self) -> int:
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def groups(self, keys: Sequence[str] = ("location", "rhythm")) -> dict[tuple, list[float]]:
        """
        .. versionadded :: 0.1.0

        Sigma 2 values grouped by label.

        Parameters
        ----------
        keys : Sequence[str]
            Any of ``"recording"``, ``"location"`` and ``"rhythm"``.

        Returns
        -------
        dict[tuple, list[float]]
            Group key to values, keys sorted.
        """
        for key in keys:
            if key not in GROUP_KEYS:
                raise LabelError(f"cannot group by {key!r}")
        grouped: dict[tuple, list[float]] = {}
        for row in self.rows:
            grouped.setdefault(tuple(getattr(row, k) for k in keys), []).append(row.sigma2)
        return dict(sorted(grouped.items()))

    def group_means(self, keys: Sequence[str] = ("location", "rhythm")) -> dict[tuple, float]:
        return {k: float(np.mean(v)) for k, v in self.groups(keys).items()}

    def suggested_thresholds(self) -> dict[str, float]:
        """Midpoint of the SR and AF means of every location that has both."""
        means = self.group_means(("location", "rhythm"))
        locations = sorted({loc for loc, _ in means})
        return {
            loc: (means[(loc, "SR")] + means[(loc, "AF")]) / 2.0
            for loc in locations
            if (loc, "SR") in means and (loc, "AF") in means
        }

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(_CSV_HEADER)
            for row in self.rows:
                writer.writerow(
                    [
                        row.recording,
                        row.location,
                        row.rhythm,
                        row.beat,
                        _frmt_float(row.sigma2),
                        " ".join(_frmt_float(v) for v in row.profile),
                    ]
                )
        _log.info(f"Wrote {len(self)} beat features to {path}")

    @classmethod
    def from_csv(cls: Self, path: str | Path) -> Self:
        """
        .. versionadded :: 0.1.0

        Reads a table written by :meth:`to_csv`.

        Raises
        ------
        :class:`CSVParseError`
            With the offending line number.
        """
        rows = []
        with open(path, newline="", encoding="utf-8") as file:
            reader = csv.reader(file)
            header = next(reader, None)
            if header != _CSV_HEADER:
                raise CSVParseError(1, f"expected header {','.join(_CSV_HEADER)}", str(path))
            for record in reader:
                line = reader.line_num
                if len(record) != len(_CSV_HEADER):
                    raise CSVParseError(line, f"expected {len(_CSV_HEADER)} fields", str(path))
                try:
                    profile = tuple(float(v) for v in record[5].split())
                    feature = BeatFeature(
                        record[0], record[1], record[2], int(record[3]), float(record[4]), profile
                    )
                    _check_labels(feature.recording, feature.location, feature.rhythm)
                except (ValueError, LabelError) as exc:
                    raise CSVParseError(line, str(exc), str(path)) from exc
                rows.append(feature)
        _log.debug(f"Read {len(rows)} beat features from {path}")
        return cls(rows)

    def __repr__(self) -> str:
        return f"BeatFeatureTable(rows={len(self)}, groups={len(self.groups())})"


def aggregate(profiles: Iterable[tuple[dict, SingularProfile]]) -> BeatFeatureTable:
    """
    .. versionadded :: 0.1.0

    Collects labelled beat profiles into a table.

    Parameters
    ----------
    profiles : Iterable[tuple[dict, :class:`SingularProfile`]]
        ``(labels, profile)`` pairs. Labels need ``recording``, ``location``
        and ``rhythm``, and may carry ``beat``. Beats without an index are
        numbered in order within their recording.

    Returns
    -------
    :class:`BeatFeatureTable`
        One row per beat, empty for empty input.

    Raises
    ------
    :class:`LabelError`
        For missing labels or an unknown rhythm.
    """
    counters: dict[str, int] = {}
    rows = []
    for labels, profile in profiles:
        try:
            recording, location, rhythm = (str(labels[k]) for k in GROUP_KEYS)
        except KeyError as exc:
            raise LabelError(f"beat is missing the {exc.args[0]!r} label") from exc
        _check_labels(recording, location, rhythm)
        beat = int(labels.get("beat", counters.get(recording, 0)))
        counters[recording] = beat + 1
        rows.append(
            BeatFeature(
                recording,
                location,
                rhythm,
                beat,
                profile.sigma2,
                tuple(float(v) for v in profile.normalized),
            )
        )
    _log.info(f"Aggregated {len(rows)} beats")
    return BeatFeatureTable(rows)


def _exact_tails(doubled: np.ndarray, n_a: int, observed: int) -> tuple[float, float]:
    """``P(S <= observed)`` and ``P(S >= observed)`` for the doubled rank sum of ``n_a`` draws."""
    total = int(doubled.sum())
    # counts[k][s]: subsets of size k with doubled rank sum s
    counts = np.zeros((n_a + 1, total + 1), dtype=np.float64)
    counts[0, 0] = 1.0
    for r in doubled.astype(np.int64):
        for k in range(min(n_a, doubled.size), 0, -1):
            counts[k, r:] += counts[k - 1, : total + 1 - r]
    dist = counts[n_a]
    n_total = dist.sum()
    return float(dist[: observed + 1].sum() / n_total), float(dist[observed:].sum() / n_total)


def rank_sum_test(group_a: Sequence[float], group_b: Sequence[float]) -> tuple[float, float]:
    """
    .. versionadded :: 0.1.0

    Two-sided Mann-Whitney rank-sum test.

    Parameters
    ----------
    group_a, group_b : Sequence[float]
        The samples, at least three values each.

    Returns
    -------
    tuple[float, float]
        ``(U, p)`` with ``U`` counted for ``group_a``. The null distribution is
        enumerated exactly up to 20 values in total, above that a normal
        approximation with tie and continuity corrections is used.

    Raises
    ------
    :class:`InsufficientGroupError`
        When a group holds fewer than three values.
    """
    a = np.asarray(group_a, dtype=np.float64).reshape(-1)
    b = np.asarray(group_b, dtype=np.float64).reshape(-1)
    if a.size < _MIN_GROUP or b.size < _MIN_GROUP:
        raise InsufficientGroupError(
            f"rank-sum test needs {_MIN_GROUP} values per group, got {a.size} and {b.size}"
        )
    n_a, n_b = a.size, b.size
    n = n_a + n_b
    combined = np.concatenate([a, b])
    ranks = rankdata(combined)
    rank_sum = float(ranks[:n_a].sum())
    u = rank_sum - n_a * (n_a + 1) / 2.0

    if np.all(combined == combined[0]):
        return u, 1.0

    if n <= _EXACT_LIMIT:
        doubled = np.rint(2.0 * ranks).astype(np.int64)
        low, high = _exact_tails(doubled, n_a, int(round(2.0 * rank_sum)))
        p = min(1.0, 2.0 * min(low, high))
        _log.debug(f"Exact rank-sum test, U={u}, p={p}")
        return u, p

    _, ties = np.unique(combined, return_counts=True)
    tie_term = float(np.sum(ties.astype(np.float64) ** 3 - ties)) / (n * (n - 1))
    sd = math.sqrt(n_a * n_b / 12.0 * ((n + 1) - tie_term))
    z = max(abs(u - n_a * n_b / 2.0) - 0.5, 0.0) / sd
    p = min(1.0, 2.0 * float(norm.sf(z)))
    _log.debug(f"Normal rank-sum test, U={u}, z={z:.4g}, p={p}")
    return u, p


def boxplot_summary(values: Sequence[float]) -> BoxPlot:
    """
    .. versionadded :: 0.1.0

    Box plot numbers of a sample.

    Quartiles interpolate linearly at position ``(n + 1) p`` of the sorted
    sample. Values further than ``1.5 * IQR`` from the box are outliers.

    Parameters
    ----------
    values : Sequence[float]
        At least one value.

    Returns
    -------
    :class:`BoxPlot`
        The summary, outliers sorted.
    """
    data = np.sort(np.asarray(values, dtype=np.float64).reshape(-1))
    if data.size == 0:
        raise InsufficientGroupError("a box plot needs at least one value")
    q25, median, q75 = np.quantile(data, [0.25, 0.5, 0.75], method="weibull")
    reach = 1.5 * (q75 - q25)
    inside = (data >= q25 - reach) & (data <= q75 + reach)
    return BoxPlot(
        float(data[inside].min()),
        float(q25),
        float(median),
        float(q75),
        float(data[inside].max()),
        tuple(float(v) for v in data[~inside]),
    )


def location_comparison(table: BeatFeatureTable) -> list[LocationComparison]:
    """
    .. versionadded :: 0.1.0

    SR against AF rank-sum test at every location.

    Locations with fewer than three beats of either rhythm are skipped with a
    warning.
    """
    grouped = table.groups(("location", "rhythm"))
    results = []
    for location in sorted({loc for loc, _ in grouped}):
        sr = grouped.get((location, "SR"), [])
        af = grouped.get((location, "AF"), [])
        if len(sr) < _MIN_GROUP or len(af) < _MIN_GROUP:
            _log.warning(f"Skipping location {location!r}: {len(sr)} SR and {len(af)} AF beats")
            continue
        u, p = rank_sum_test(sr, af)
        results.append(LocationComparison(location, len(sr), len(af), u, p))
    return results
