import configparser
import csv
import json
import logging
import struct
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np
from typing_extensions import Self

from ._util import _frmt_float, _parse_pair
from .base import DataIOObject
from .config import Settings
from .constants import _Defaults
from .errors import (
    AnnotationError,
    CSVParseError,
    DataError,
    MagicMismatchError,
    ManifestError,
    NonFiniteSampleError,
    PatchOverlapError,
    ScenarioError,
    TrailingBytesError,
    TruncatedFileError,
    UnsupportedVersionError,
)
from .latmap import ActivationMap, BlockSet
from .leadfield import EgmRecording, ElectrodeArray, add_noise, record
from .sigmamap import Sigma2Map
from .simulation import (
    APParams,
    APTemplate,
    CellSignalField,
    LATField,
    TissueModel,
    generate_ap_template,
    line_mask,
    paint_patches,
    rect_mask,
    solve_lat,
    synthesize_cell_signals,
    uniform,
)
from .stats import BoxPlot
from .svdcore import SingularProfile

_log = logging.getLogger(__name__)

__all__ = (
    "MAGIC",
    "FORMAT_VERSION",
    "read_recording",
    "write_recording",
    "read_csv_recording",
    "write_csv_recording",
    "read_annotations",
    "write_annotations",
    "Scenario",
    "parse_scenario",
    "write_activation_map",
    "write_block_set",
    "write_sigma2_map",
    "read_sigma2_map",
    "write_profiles",
    "write_boxplots",
    "write_rows",
    "write_manifest",
    "read_manifest",
)

MAGIC = b"EGMR"
FORMAT_VERSION = 1
# magic, version, channels, samples, rate, layout rows, layout cols
_HEADER = struct.Struct("<4sHIQdHH")
_F64 = np.dtype("<f8")

ANNOTATION_KEYS = ("recording", "location", "rhythm", "window")
MANIFEST_KEYS = ("command", "version", "parameters", "settings", "outputs")


def write_recording(rec: EgmRecording, path: str | Path) -> None:
    """
    .. versionadded :: 0.1.0

    Writes a recording in the binary ``EGMR`` format.

    The header is followed by the electrode positions, ``z0`` and gain, then
    the samples channel after channel, all little-endian float64.

    Parameters
    ----------
    rec : :class:`EgmRecording`
        The recording. Annotations and labels go to a separate annotation file.
    path : str | Path
        Target file.
    """
    rows, cols = rec.array.layout or (0, 0)
    header = _HEADER.pack(
        MAGIC, FORMAT_VERSION, rec.n_channels, rec.n_samples, rec.rate, rows, cols
    )
    with open(path, "wb") as file:
        file.write(header)
        file.write(rec.array.positions.astype(_F64).tobytes())
        file.write(np.array([rec.array.height, rec.array.gain], dtype=_F64).tobytes())
        file.write(np.ascontiguousarray(rec.samples, dtype=_F64).tobytes())
    _log.info(f"Wrote {rec!r} to {path}")


def read_recording(path: str | Path) -> EgmRecording:
    """
    .. versionadded :: 0.1.0

    Reads a binary ``EGMR`` recording.

    Parameters
    ----------
    path : str | Path
        Source file.

    Returns
    -------
    :class:`EgmRecording`
        The recording, bit-identical to what was written.

    Raises
    ------
    :class:`MagicMismatchError`
        When the file does not start with ``EGMR``.
    :class:`UnsupportedVersionError`
        For any version other than 1.
    :class:`TruncatedFileError`
        When the payload is shorter than the header declares.
    :class:`TrailingBytesError`
        When bytes follow the declared payload.
    :class:`NonFiniteSampleError`
        When a sample is NaN or infinite.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise TruncatedFileError(_HEADER.size, len(data), str(path))
    magic, version, n_channels, n_samples, rate, rows, cols = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise MagicMismatchError(f"{path}: expected magic {MAGIC!r}, got {magic!r}")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported format version {version}")

    n_meta = 2 * n_channels + 2
    expected = _HEADER.size + 8 * (n_meta + n_channels * n_samples)
    if len(data) < expected:
        raise TruncatedFileError(expected, len(data), str(path))
    if len(data) > expected:
        raise TrailingBytesError(expected, len(data), str(path))

    meta = np.frombuffer(data, _F64, n_meta, _HEADER.size)
    samples = np.frombuffer(data, _F64, n_channels * n_samples, _HEADER.size + 8 * n_meta)
    if not np.all(np.isfinite(samples)):
        bad = int(np.flatnonzero(~np.isfinite(samples))[0])
        raise NonFiniteSampleError(
            f"{path}: non-finite sample at channel {bad // n_samples}, index {bad % n_samples}"
        )

    layout = (rows, cols) if rows and cols else None
    array = ElectrodeArray(meta[: 2 * n_channels].reshape(-1, 2), meta[-2], meta[-1], layout)
    _log.debug(f"Read {n_channels} channels of {n_samples} samples from {path}")
    return EgmRecording(samples.reshape(n_channels, n_samples), rate, array)


def write_csv_recording(rec: EgmRecording, path: str | Path, header: bool = True) -> None:
    """Writes one column per channel, values with 17 significant digits."""
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        if header:
            writer.writerow([f"ch{m}" for m in range(rec.n_channels)])
        for column in rec.samples.T:
            writer.writerow([_frmt_float(v) for v in column])
    _log.info(f"Wrote {rec!r} to {path}")


def read_csv_recording(
    path: str | Path,
    rate: float,
    layout: tuple[int, int] | None = None,
    pitch: float = 2.0,
    lsb_to_mv: float = 1.0,
    array: ElectrodeArray | None = None,
) -> EgmRecording:
    """
    .. versionadded :: 0.1.0

    Reads a numeric CSV export, one column per channel.

    A first row that does not parse as numbers is taken as a header.

    Parameters
    ----------
    path : str | Path
        Source file.
    rate : float
        Sample rate.
    layout : tuple[int, int], optional
        ``(rows, cols)`` of a rectangular array, by default one row.
    pitch : float
        Inter-electrode distance used to place the electrodes.
    lsb_to_mv : float
        Scale applied to every value, for integer exports.
    array : :class:`ElectrodeArray`, optional
        The electrodes, overriding ``layout`` and ``pitch``.

    Returns
    -------
    :class:`EgmRecording`
        The recording.

    Raises
    ------
    :class:`CSVParseError`
        For ragged rows or non-numeric cells, with the line number.
    """
    rows: list[list[float]] = []
    width = None
    with open(path, newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        for cells in reader:
            line = reader.line_num
            if not cells or all(not cell.strip() for cell in cells):
                continue
            try:
                values = [float(cell) for cell in cells]
            except ValueError:
                if line == 1:
                    width = len(cells)
                    continue
                bad = next(cell for cell in cells if not _is_number(cell))
                raise CSVParseError(line, f"non-numeric value {bad!r}", str(path)) from None
            if width is None:
                width = len(values)
            if len(values) != width:
                raise CSVParseError(
                    line, f"expected {width} columns, got {len(values)}", str(path)
                )
            rows.append(values)
    if not rows:
        raise CSVParseError(1, "no samples", str(path))

    samples = np.array(rows, dtype=np.float64).T * lsb_to_mv
    if array is None:
        rows_, cols_ = layout if layout is not None else (1, samples.shape[0])
        array = ElectrodeArray.rectangular(rows_, cols_, pitch)
    _log.debug(f"Read {samples.shape[0]} channels of {samples.shape[1]} samples from {path}")
    return EgmRecording(samples, rate, array)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_annotations(path: str | Path) -> tuple[list[float], dict[str, str]]:
    """
    .. versionadded :: 0.1.0

    Reads an annotation file of ``beat,<time_ms>`` and ``label,<key>=<value>``
    lines. Lines starting with ``#`` are comments.

    Returns
    -------
    tuple[list[float], dict[str, str]]
        Beat times and labels.

    Raises
    ------
    :class:`AnnotationError`
        For malformed lines, unknown keys, unknown rhythms or beats out of order.
    """
    beats: list[float] = []
    labels: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        kind, _, value = line.partition(",")
        if kind == "beat":
            try:
                t = float(value)
            except ValueError:
                raise AnnotationError(line_no, f"invalid beat time {value!r}") from None
            if beats and t <= beats[-1]:
                raise AnnotationError(line_no, "beat times must be strictly increasing")
            beats.append(t)
        elif kind == "label":
            key, sep, val = value.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or not val:
                raise AnnotationError(line_no, f"expected key=value, got {value!r}")
            if key not in ANNOTATION_KEYS:
                raise AnnotationError(line_no, f"unknown label {key!r}")
            if key == "rhythm" and val not in ("SR", "AF"):
                raise AnnotationError(line_no, f"rhythm must be SR or AF, got {val!r}")
            if key == "window":
                try:
                    _parse_pair(val)
                except ValueError as exc:
                    raise AnnotationError(line_no, str(exc)) from None
            labels[key] = val
        else:
            raise AnnotationError(line_no, f"unknown line kind {kind!r}")
    _log.debug(f"Read {len(beats)} beats and {len(labels)} labels from {path}")
    return beats, labels


def write_annotations(
    path: str | Path, beats: Sequence[float], labels: Mapping[str, str] | None = None
) -> None:
    lines = [f"label,{k}={v}" for k, v in sorted((labels or {}).items())]
    lines += [f"beat,{_frmt_float(t)}" for t in beats]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


class _Section:
    """Reads typed values from one scenario section and remembers effective values."""

    def __init__(self, name: str, raw: Mapping[str, Any]):
        self.name = name
        self.raw = {str(k): str(v) for k, v in raw.items()}
        self.effective: dict[str, str] = {}

    def get(self, key: str, conv: Callable[[str], Any], default: Any = None) -> Any:
        if key not in self.raw:
            if default is None:
                raise ScenarioError(self.name, key, "missing required key")
            self.effective[key] = default if isinstance(default, str) else str(default)
            return conv(self.effective[key])
        text = self.raw[key].strip()
        try:
            value = conv(text)
        except (ValueError, TypeError) as exc:
            raise ScenarioError(self.name, key, f"invalid value {text!r}: {exc}") from None
        self.effective[key] = text
        return value

    def has(self, key: str) -> bool:
        return key in self.raw

    def finish(self) -> dict[str, str]:
        unknown = sorted(set(self.raw) - set(self.effective))
        if unknown:
            raise ScenarioError(self.name, unknown[0], "unknown key")
        return self.effective


def _positive(conv: Callable[[str], Any]) -> Callable[[str], Any]:
    def _check(text: str) -> Any:
        value = conv(text)
        if not value > 0:
            raise ValueError("must be positive")
        return value

    return _check


def _nonnegative(text: str) -> float:
    value = float(text)
    if not value >= 0:
        raise ValueError("must be nonnegative")
    return value


def _int_range(text: str) -> tuple[int, int]:
    lo, hi = _parse_pair(text)
    if lo != int(lo) or hi != int(hi):
        raise ValueError("expected whole cell indices")
    return int(lo), int(hi)


def _point(text: str) -> tuple[float, float]:
    return _parse_pair(text, ",")


def _boolean(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


class Scenario(DataIOObject):
    """
    .. versionadded :: 0.1.0

    A validated simulation scenario.

    Parameters
    ----------
    tissue : :class:`TissueModel`
        The tissue.
    array : :class:`ElectrodeArray`
        The electrodes.
    templates : list[:class:`APTemplate`]
        Template bank indexed by the tissue's morphology ids.
    run : dict
        Run parameters: ``rate``, ``v0``, ``duration`` (``None`` for automatic),
        ``noise_std``, ``seed``, ``band`` and ``window``.
    sections : dict
        Every effective value, defaults included, by section.
    """

    def __init__(
        self,
        tissue: TissueModel,
        array: ElectrodeArray,
        templates: Sequence[APTemplate],
        run: dict,
        sections: dict,
    ):
        """
        Constructor method.
        """
        self.tissue = tissue
        self.array = array
        self.templates = list(templates)
        self.run = run
        self.sections = sections

    def to_dict(self) -> dict:
        return {name: dict(values) for name, values in self.sections.items()}

    @classmethod
    def _from_dict(cls: Self, raw: Mapping[str, Mapping[str, Any]]) -> Self:
        """
        .. versionadded :: 0.1.0

        Validates a scenario given as sections of key/value pairs.

        Sections are ``[tissue]``, ``[conductivity.<name>]``,
        ``[morphology.<name>]``, ``[stimuli]``, ``[array]`` and ``[run]``.

        Raises
        ------
        :class:`ScenarioError`
            Naming the section and key at fault.
        """
        _log.debug("Creating a Scenario class from the given dictionary")
        for name in raw:
            head = name.split(".", 1)[0]
            if name not in ("tissue", "stimuli", "array", "run") and not (
                head in ("conductivity", "morphology") and "." in name
            ):
                raise ScenarioError(name, None, "unknown section")
        for required in ("tissue", "stimuli", "array"):
            if required not in raw:
                raise ScenarioError(required, None, "missing section")

        sections: dict[str, dict[str, str]] = {}
        tissue_sec = _Section("tissue", raw["tissue"])
        rows = tissue_sec.get("rows", _positive(int), _Defaults.ROWS)
        cols = tissue_sec.get("cols", _positive(int), _Defaults.COLS)
        spacing = tissue_sec.get("spacing", _positive(float), _Defaults.SPACING_MM)
        base = tissue_sec.get("conductivity", _nonnegative, _Defaults.CONDUCTIVITY)
        sections["tissue"] = tissue_sec.finish()
        shape = (rows, cols)

        patches = []
        for name in (n for n in raw if n.startswith("conductivity.")):
            sec = _Section(name, raw[name])
            kind = sec.get("shape", str)
            value = sec.get("value", _nonnegative)
            try:
                if kind == "rect":
                    mask = rect_mask(
                        shape, sec.get("rows", _int_range), sec.get("cols", _int_range)
                    )
                elif kind == "line":
                    start, end = sec.get("start", _point), sec.get("end", _point)
                    width = sec.get("width", float)
                    if not width > 0:
                        raise ScenarioError(
                            name, "width", f"line width must be positive, got {width}"
                        )
                    mask = line_mask(shape, start, end, width / spacing)
                elif kind == "uniform":
                    mask = np.ones(shape, dtype=bool)
                else:
                    raise ScenarioError(name, "shape", f"unknown shape {kind!r}")
            except DataError as exc:
                if isinstance(exc, ScenarioError):
                    raise
                raise ScenarioError(name, None, str(exc)) from None
            patches.append((name, mask, value))
            sections[name] = sec.finish()
        try:
            conductivity = paint_patches(uniform(rows, cols, base), patches)
        except PatchOverlapError as exc:
            raise ScenarioError(
                exc.patch, "value", f"overlaps [{exc.other}] with a different value"
            ) from None
        except DataError as exc:
            raise ScenarioError("conductivity", None, str(exc)) from None

        run_sec = _Section("run", raw.get("run", {}))
        rate = run_sec.get("rate", _positive(float), Settings.SAMPLE_RATE)
        template_ms = run_sec.get(
            "template_ms", _positive(float), _Defaults.MORPHOLOGIES.DURATION_MS
        )

        templates, regions = [], []
        morph_names = [n for n in raw if n.startswith("morphology.")] or ["morphology.default"]
        for index, name in enumerate(morph_names):
            sec = _Section(name, raw.get(name, {}))
            preset = sec.get("preset", str, "AP1")
            try:
                params = APParams.preset(preset)
                overrides = {
                    key: sec.get(key, float) for key in params.to_dict() if sec.has(key)
                }
                params = params.replace(**overrides)
                if sec.has("rows") or sec.has("cols"):
                    region = rect_mask(
                        shape,
                        sec.get("rows", _int_range, f"0:{rows}"),
                        sec.get("cols", _int_range, f"0:{cols}"),
                    )
                    regions.append((name, region, float(index)))
                templates.append(generate_ap_template(params, rate, template_ms))
            except DataError as exc:
                if isinstance(exc, ScenarioError):
                    raise
                raise ScenarioError(name, None, str(exc)) from None
            sections[name] = sec.finish()
        try:
            morphology = paint_patches(np.zeros(shape), regions).astype(np.int64)
        except DataError as exc:
            raise ScenarioError("morphology", None, str(exc)) from None

        stim_sec = _Section("stimuli", raw["stimuli"])
        stimuli = []
        for key in sorted(stim_sec.raw):
            stimuli.extend(stim_sec.get(key, lambda text: _stimulus_cells(text, shape)))
        if not stimuli:
            raise ScenarioError("stimuli", None, "at least one stimulus is required")
        sections["stimuli"] = stim_sec.finish()

        try:
            tissue = TissueModel(
                rows, cols, spacing, conductivity, morphology, stimuli, len(templates)
            )
        except DataError as exc:
            raise ScenarioError("stimuli", None, str(exc)) from None

        array_sec = _Section("array", raw["array"])
        center_default = f"{(cols - 1) * spacing / 2.0},{(rows - 1) * spacing / 2.0}"
        center = array_sec.get("center", _point, center_default)
        height = array_sec.get("height", _positive(float), _Defaults.Z0_MM)
        gain = array_sec.get("gain", _positive(float), _Defaults.GAIN)
        try:
            if array_sec.has("preset"):
                array = ElectrodeArray.preset(array_sec.get("preset", str), center, height, gain)
            else:
                array = ElectrodeArray.rectangular(
                    array_sec.get("rows", _positive(int)),
                    array_sec.get("cols", _positive(int)),
                    array_sec.get("pitch", _positive(float)),
                    center,
                    height,
                    gain,
                )
        except DataError as exc:
            if isinstance(exc, ScenarioError):
                raise
            raise ScenarioError("array", "preset", str(exc)) from None
        sections["array"] = array_sec.finish()

        duration = None
        if run_sec.has("duration"):
            duration = run_sec.get("duration", _positive(float))
        run = {
            "rate": rate,
            "template_ms": template_ms,
            "v0": run_sec.get("v0", _positive(float), _Defaults.V0),
            "duration": duration,
            "noise_std": run_sec.get("noise_std", _nonnegative, 0.0),
            "seed": run_sec.get("seed", int, 0),
            "band": run_sec.get("band", _parse_pair, "{}:{}".format(*Settings.BAND)),
            "window": run_sec.get("window", _parse_pair, "{}:{}".format(*Settings.WINDOW)),
        }
        sections["run"] = run_sec.finish()
        _log.info(f"Parsed scenario {tissue!r} with {array!r}")
        return cls(tissue, array, templates, run, sections)

    def simulate(self) -> tuple[LATField, CellSignalField, EgmRecording]:
        """Runs the forward model: activation times, cell traces and electrograms."""
        lat = solve_lat(self.tissue, self.run["v0"])
        field = synthesize_cell_signals(
            self.tissue, lat, self.templates, duration=self.run["duration"]
        )
        rec = add_noise(record(field, self.array), self.run["noise_std"], self.run["seed"])
        return lat, field, rec

    def __repr__(self) -> str:
        return f"Scenario({self.tissue!r}, {self.array!r})"


def _stimulus_cells(text: str, shape: tuple[int, int]) -> list[tuple[int, float]]:
    """``row,col[,onset]`` with ``*`` standing for a whole row or column."""
    parts = [p.strip() for p in text.split(",")]
    if len(parts) not in (2, 3):
        raise ValueError("expected row,col or row,col,onset")
    onset = float(parts[2]) if len(parts) == 3 else 0.0
    rows = range(shape[0]) if parts[0] == "*" else [int(parts[0])]
    cols = range(shape[1]) if parts[1] == "*" else [int(parts[1])]
    cells = []
    for r in rows:
        for c in cols:
            if not (0 <= r < shape[0] and 0 <= c < shape[1]):
                raise ValueError(f"cell ({r}, {c}) is outside {shape[0]}x{shape[1]}")
            cells.append((r * shape[1] + c, onset))
    return cells


def parse_scenario(path: str | Path) -> Scenario:
    """
    .. versionadded :: 0.1.0

    Reads an INI scenario file.

    Parameters
    ----------
    path : str | Path
        The file.

    Returns
    -------
    :class:`Scenario`
        The validated scenario with defaults applied.

    Raises
    ------
    :class:`ScenarioError`
        For syntax errors, missing or unknown sections and keys, and invalid values.
    """
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as file:
            parser.read_file(file)
    except configparser.Error as exc:
        raise ScenarioError("file", None, f"{path}: {exc}") from None
    return Scenario._from_dict({name: dict(parser[name]) for name in parser.sections()})


def write_rows(path: str | Path, header: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_frmt_float(v) if isinstance(v, float) else v for v in row])
    _log.info(f"Wrote {path}")


def write_activation_map(act_map: ActivationMap, path: str | Path) -> None:
    """Writes ``channel,row,col,lat_ms,score``, ``nan`` where nothing was detected."""
    cols = act_map.shape[1] if act_map.shape else len(act_map)
    scores = act_map.scores if act_map.scores is not None else np.full(len(act_map), np.nan)
    write_rows(
        path,
        ["channel", "row", "col", "lat_ms", "score"],
        (
            (m, m // cols, m % cols, float(act_map.lat[m]), float(scores[m]))
            for m in range(len(act_map))
        ),
    )


def write_block_set(blocks: BlockSet, path: str | Path) -> None:
    """Writes one flagged edge per line with the index of its band."""
    cols = blocks.layout[1]
    rows = []
    for band, edges in enumerate(blocks.components()):
        for a, b in edges:
            rows.append((a, b, a // cols, a % cols, b // cols, b % cols, band))
    rows.sort()
    write_rows(path, ["a", "b", "row_a", "col_a", "row_b", "col_b", "band"], rows)


def write_sigma2_map(sigma_map: Sigma2Map, path: str | Path) -> None:
    """
    Writes the map as a comma-separated grid after a
    ``# window=<w> layout=<rows>x<cols>`` line.
    """
    rows, cols = sigma_map.layout
    with open(path, "w", newline="", encoding="utf-8") as file:
        file.write(f"# window={sigma_map.window} layout={rows}x{cols}\n")
        writer = csv.writer(file, lineterminator="\n")
        for row in sigma_map.values:
            writer.writerow([_frmt_float(v) for v in row])
    _log.info(f"Wrote {path}")


def read_sigma2_map(path: str | Path) -> Sigma2Map:
    """
    .. versionadded :: 0.1.0

    Reads a map written by :func:`write_sigma2_map`.

    Raises
    ------
    :class:`CSVParseError`
        For a missing header line or malformed values.
    """
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# "):
        raise CSVParseError(1, "expected a '# window=<w> layout=<rows>x<cols>' line", str(path))
    try:
        fields = dict(item.split("=", 1) for item in lines[0][2:].split())
        window = int(fields["window"])
        rows, cols = (int(v) for v in fields["layout"].split("x"))
    except (KeyError, ValueError) as exc:
        raise CSVParseError(1, f"malformed header: {exc}", str(path)) from None
    values = []
    for line_no, line in enumerate(lines[1:], start=2):
        try:
            values.append([float(v) for v in line.split(",")])
        except ValueError as exc:
            raise CSVParseError(line_no, str(exc), str(path)) from None
    if len({len(v) for v in values}) > 1:
        raise CSVParseError(len(lines), "ragged map rows", str(path))
    return Sigma2Map(np.array(values), window, (rows, cols))


def write_profiles(
    profiles: Sequence[SingularProfile], path: str | Path, beat_ids: Sequence[int] | None = None
) -> None:
    """Writes ``beat,rank,s1..sK`` with the normalized values of every beat."""
    width = max((len(p) for p in profiles), default=0)
    beat_ids = range(len(profiles)) if beat_ids is None else beat_ids
    rows = []
    for beat, profile in zip(beat_ids, profiles):
        values = [float(v) for v in profile.normalized] + [""] * (width - len(profile))
        rows.append([beat, profile.rank_estimate] + values)
    write_rows(path, ["beat", "rank"] + [f"s{k + 1}" for k in range(width)], rows)


def write_boxplots(
    summaries: Mapping[tuple, BoxPlot], path: str | Path, keys: Sequence[str]
) -> None:
    rows = []
    for group, box in summaries.items():
        outliers = " ".join(_frmt_float(v) for v in box.outliers)
        rows.append(list(group) + [box.low, box.q25, box.median, box.q75, box.high, outliers])
    write_rows(path, list(keys) + ["low", "q25", "median", "q75", "high", "outliers"], rows)


def write_manifest(
    path: str | Path,
    command: str,
    parameters: Mapping[str, Any],
    outputs: Sequence[str],
    version: str = "",
) -> dict:
    """
    .. versionadded :: 0.1.0

    Writes the run manifest: the command, every effective parameter and the
    settings snapshot. No timestamps, so reruns compare byte for byte.

    Returns
    -------
    dict
        The manifest as written.
    """
    manifest = {
        "command": command,
        "version": version,
        "parameters": dict(parameters),
        "settings": Settings.snapshot(),
        "outputs": sorted(outputs),
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    _log.info(f"Wrote manifest {path}")
    return manifest


def read_manifest(path: str | Path) -> dict:
    """
    Reads a run manifest.

    Raises
    ------
    :class:`ManifestError`
        For invalid JSON or missing keys.
    """
    try:
        manifest = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: {exc}") from None
    if not isinstance(manifest, dict):
        raise ManifestError(f"{path}: a manifest is a JSON object")
    missing = [k for k in MANIFEST_KEYS if k not in manifest]
    if missing:
        raise ManifestError(f"{path}: missing {', '.join(missing)}")
    return manifest
