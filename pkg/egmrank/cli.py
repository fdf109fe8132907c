"""
Command line interface.

Every command writes its artifacts plus a ``manifest.json`` holding every
effective parameter, so ``egmrank rerun --manifest`` can replay it.

Exit codes: 0 success, 1 usage error, 2 data or file system error, 3 numerical
failure.
"""

import logging
import sys
from pathlib import Path
from typing import Callable

import click
import coloredlogs
import numpy as np

from . import __version__
from ._util import _parse_pair
from .config import Settings
from .dataio import (
    Scenario,
    parse_scenario,
    read_annotations,
    read_csv_recording,
    read_manifest,
    read_recording,
    read_sigma2_map,
    write_activation_map,
    write_annotations,
    write_block_set,
    write_boxplots,
    write_manifest,
    write_profiles,
    write_recording,
    write_rows,
    write_sigma2_map,
)
from .errors import DataError, InvalidWindowError, ManifestError, NumericalError
from .latmap import cell_activation_map, compare_maps, detect_blocks, egm_activation_map
from .leadfield import EgmRecording, ElectrodeArray, repeat_beats
from .sigmamap import sigma2_map, write_pgm
from .simulation import synthesize_ecg
from .spectral import (
    BeatWindow,
    bandpass,
    detect_r_peaks,
    magnitude_matrix,
    segment_beats,
    whole_recording_beat,
)
from .stats import (
    BeatFeatureTable,
    aggregate,
    boxplot_summary,
    location_comparison,
)
from .svdcore import SingularProfile, svd_profile

_log = logging.getLogger(__name__)

MANIFEST = "manifest.json"


class _PairType(click.ParamType):
    name = "lo:hi"

    def convert(self, value, param, ctx):
        if isinstance(value, (tuple, list)):
            return tuple(float(v) for v in value)
        try:
            return _parse_pair(value)
        except ValueError as exc:
            self.fail(str(exc), param, ctx)


class _LayoutType(click.ParamType):
    name = "RxC"

    def convert(self, value, param, ctx):
        if isinstance(value, (tuple, list)):
            return tuple(int(v) for v in value)
        try:
            rows, cols = (int(v) for v in value.lower().split("x"))
        except ValueError:
            self.fail(f"expected a layout like 10x10, got {value!r}", param, ctx)
        return rows, cols


PAIR = _PairType()
LAYOUT = _LayoutType()


def _load_recording(params: dict) -> EgmRecording:
    path = Path(params["input"])
    if path.suffix.lower() == ".csv":
        if params.get("rate") is None:
            raise DataError("CSV recordings need --rate")
        rec = read_csv_recording(
            path, params["rate"], params.get("layout"), params["pitch"], params["lsb_to_mv"]
        )
    else:
        rec = read_recording(path)
    if params.get("annotations"):
        beats, labels = read_annotations(params["annotations"])
        rec = rec.with_annotations(beats or None, labels)
    if params.get("ecg"):
        ecg = read_recording(params["ecg"])
        rec = rec.with_annotations(detect_r_peaks(ecg, params.get("ecg_channel", 0)))
    return rec


def _beats(rec: EgmRecording, params: dict) -> list[BeatWindow]:
    if params["filter"]:
        lo, hi = params["band"] or Settings.BAND
        rec = bandpass(rec, lo, hi, params["order"])
    if not rec.annotations:
        return [whole_recording_beat(rec)]
    window = params["window"]
    if window is None and "window" in rec.labels:
        window = _parse_pair(rec.labels["window"])
    return list(segment_beats(rec, window=window))


def _beat_profile(beat: BeatWindow, taper: bool) -> SingularProfile:
    return svd_profile(magnitude_matrix(beat, taper=taper))


def _simulate(params: dict, out: Path) -> list[str]:
    if params.get("scenario") is not None:
        scenario = Scenario._from_dict(params["scenario"])
    else:
        scenario = parse_scenario(params["config"])
        params["scenario"] = scenario.to_dict()

    _, field, rec = scenario.simulate()
    outputs = ["recording.egmr", "cell_lat.csv"]
    write_activation_map(cell_activation_map(field), out / "cell_lat.csv")

    if params["ecg"]:
        window = scenario.run["window"]
        ecg, r_times = synthesize_ecg(
            params["beats"],
            rec.rate,
            params["rr_ms"],
            jitter_ms=params["jitter_ms"],
            snr_db=params["snr_db"],
            seed=params["seed"],
        )
        duration = ecg.size * 1000.0 / rec.rate
        rec = repeat_beats(rec, [r - window[0] for r in r_times], duration)
        lead = ElectrodeArray([(0.0, 0.0)], scenario.array.height)
        write_recording(EgmRecording(ecg, rec.rate, lead), out / "ecg.egmr")
        write_annotations(
            out / "recording.ann", r_times, {"window": "{}:{}".format(*window)}
        )
        outputs += ["ecg.egmr", "recording.ann"]

    write_recording(rec, out / "recording.egmr")
    return outputs


def _analyze(params: dict, out: Path) -> list[str]:
    rec = _load_recording(params)
    beats = _beats(rec, params)
    profiles = Settings.parallel_map(
        lambda beat: _beat_profile(beat, params["taper"]), beats, params["workers"]
    )
    write_profiles(profiles, out / "profiles.csv", [b.source_beat_index for b in beats])
    outputs = ["profiles.csv"]

    labels = dict(rec.labels)
    labels.setdefault("recording", Path(params["input"]).stem)
    if "location" in labels and "rhythm" in labels:
        table = aggregate(
            (dict(labels, beat=b.source_beat_index), p) for b, p in zip(beats, profiles)
        )
        table.to_csv(out / "features.csv")
        outputs.append("features.csv")
    else:
        _log.warning("No location and rhythm labels, skipping the feature table")
    _log.info(f"Analyzed {len(beats)} beats")
    return outputs


def _map(params: dict, out: Path) -> list[str]:
    rec = _load_recording(params)
    beats = {b.source_beat_index: b for b in _beats(rec, params)}
    if params["beat"] not in beats:
        raise InvalidWindowError(f"beat {params['beat']} is not available, have {sorted(beats)}")
    beat = beats[params["beat"]]

    sigma_map = sigma2_map(
        beat, window=params["window_size"], workers=params["workers"], taper=params["taper"]
    )
    write_sigma2_map(sigma_map, out / "sigma2_map.csv")
    write_pgm(sigma_map, out / "sigma2_map.pgm", params["clamp"])
    outputs = ["sigma2_map.csv", "sigma2_map.pgm"]

    if params["compare"]:
        act_map = egm_activation_map(beat)
        blocks = detect_blocks(act_map, threshold=params["block_ms"])
        report = compare_maps(act_map, blocks, sigma_map)
        write_activation_map(act_map, out / "activation_map.csv")
        write_block_set(blocks, out / "blocks.csv")
        summary = report.to_dict()
        write_rows(
            out / "comparison.csv",
            ["key", "value"],
            [(k, v) for k, v in summary.items() if not isinstance(v, list)],
        )
        outputs += ["activation_map.csv", "blocks.csv", "comparison.csv"]
    return outputs


def _stats(params: dict, out: Path) -> list[str]:
    table = BeatFeatureTable.from_csv(params["input"])
    keys = params["group_by"]
    groups = table.groups(keys)
    write_rows(
        out / "summary.csv",
        list(keys) + ["n", "mean"],
        [list(k) + [len(v), float(np.mean(v))] for k, v in groups.items()],
    )
    write_boxplots({k: boxplot_summary(v) for k, v in groups.items()}, out / "boxplots.csv", keys)
    write_rows(
        out / "rank_sum.csv",
        ["location", "n_sr", "n_af", "u", "p"],
        [tuple(c) for c in location_comparison(table)],
    )
    write_rows(
        out / "thresholds.csv",
        ["location", "threshold"],
        sorted(table.suggested_thresholds().items()),
    )
    return ["summary.csv", "boxplots.csv", "rank_sum.csv", "thresholds.csv"]


def _render(params: dict, out: Path) -> list[str]:
    write_pgm(read_sigma2_map(params["map"]), out / params["name"], params["clamp"])
    return [params["name"]]


COMMANDS: dict[str, Callable[[dict, Path], list[str]]] = {
    "simulate": _simulate,
    "analyze": _analyze,
    "map": _map,
    "stats": _stats,
    "render": _render,
}


def _manifest_name(command: str, params: dict) -> str:
    return f"{params['name']}.{MANIFEST}" if command == "render" else MANIFEST


def execute(command: str, params: dict, out: str | Path) -> dict:
    """
    Runs one command into ``out`` and writes its manifest.

    Returns
    -------
    dict
        The manifest.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    outputs = COMMANDS[command](params, out)
    name = _manifest_name(command, params)
    return write_manifest(out / name, command, params, outputs + [name], __version__)


def _abs(path: str | None) -> str | None:
    return str(Path(path).resolve()) if path else None


input_options = [
    click.option("--annotations", type=click.Path(exists=True, dir_okay=False)),
    click.option("--ecg", type=click.Path(exists=True, dir_okay=False), help="ECG recording."),
    click.option("--ecg-channel", default=0, show_default=True),
    click.option("--rate", type=float, help="Sample rate of CSV input."),
    click.option("--layout", type=LAYOUT, help="Array layout of CSV input."),
    click.option("--pitch", default=2.0, show_default=True, help="Electrode pitch of CSV input."),
    click.option("--lsb-to-mv", default=1.0, show_default=True),
    click.option("--band", type=PAIR, help="Band-pass edges in Hz."),
    click.option("--order", default=Settings.FILTER_ORDER, show_default=True),
    click.option("--filter/--no-filter", "filter_", default=True, show_default=True),
    click.option("--window", type=PAIR, help="Beat window, ms before R."),
    click.option("--taper", is_flag=True, help="Hann taper before the DFT."),
    click.option("--workers", type=int, default=None),
]


def _with_input_options(func):
    for option in reversed(input_options):
        func = option(func)
    return func


def _input_params(input_, **kw) -> dict:
    return {
        "input": _abs(input_),
        "annotations": _abs(kw["annotations"]),
        "ecg": _abs(kw["ecg"]),
        "ecg_channel": kw["ecg_channel"],
        "rate": kw["rate"],
        "layout": list(kw["layout"]) if kw["layout"] else None,
        "pitch": kw["pitch"],
        "lsb_to_mv": kw["lsb_to_mv"],
        "band": list(kw["band"]) if kw["band"] else None,
        "order": kw["order"],
        "filter": kw["filter_"],
        "window": list(kw["window"]) if kw["window"] else None,
        "taper": kw["taper"],
        "workers": kw["workers"],
    }


@click.group()
@click.version_option(__version__, prog_name="egmrank")
@click.option("-v", "--verbose", count=True, help="-v for info, -vv for debug output.")
def cli(verbose: int) -> None:
    """Singular value analysis of multichannel electrograms."""
    level = {0: "WARNING", 1: "INFO"}.get(verbose, "DEBUG")
    coloredlogs.install(
        level=level,
        logger=logging.getLogger("egmrank"),
        fmt="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


@cli.command()
@click.option("--config", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--ecg", is_flag=True, help="Repeat the beat along a synthetic ECG rhythm.")
@click.option("--beats", default=10, show_default=True)
@click.option("--rr-ms", default=1000.0, show_default=True)
@click.option("--jitter-ms", default=0.0, show_default=True)
@click.option("--snr-db", type=float, default=None)
@click.option("--seed", default=0, show_default=True)
def simulate(config, out, ecg, beats, rr_ms, jitter_ms, snr_db, seed) -> None:
    """Run a scenario through the forward model."""
    params = {
        "config": _abs(config),
        "scenario": None,
        "ecg": ecg,
        "beats": beats,
        "rr_ms": rr_ms,
        "jitter_ms": jitter_ms,
        "snr_db": snr_db,
        "seed": seed,
    }
    execute("simulate", params, out)


@cli.command()
@click.option("--in", "input_", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@_with_input_options
def analyze(input_, out, **kw) -> None:
    """Singular value profile of every beat."""
    execute("analyze", _input_params(input_, **kw), out)


@cli.command(name="map")
@click.option("--in", "input_", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--beat", default=0, show_default=True)
@click.option("--compare", is_flag=True, help="Add activation map and block detection.")
@click.option("--window-size", default=Settings.SIGMA2_WINDOW, show_default=True)
@click.option("--clamp", default=Settings.SIGMA2_CLAMP, show_default=True)
@click.option("--block-ms", default=Settings.BLOCK_THRESHOLD_MS, show_default=True)
@_with_input_options
def map_(input_, out, beat, compare, window_size, clamp, block_ms, **kw) -> None:
    """Sigma 2 map of one beat."""
    params = _input_params(input_, **kw)
    params.update(
        beat=beat, compare=compare, window_size=window_size, clamp=clamp, block_ms=block_ms
    )
    execute("map", params, out)


@cli.command()
@click.option("--in", "input_", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--group-by", default="location,rhythm", show_default=True)
def stats(input_, out, group_by) -> None:
    """Group summaries and SR against AF tests of a feature table."""
    keys = [k.strip() for k in group_by.split(",") if k.strip()]
    execute("stats", {"input": _abs(input_), "group_by": keys}, out)


@cli.command()
@click.option("--map", "map_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--clamp", default=Settings.SIGMA2_CLAMP, show_default=True)
def render(map_path, out, clamp) -> None:
    """Render a sigma 2 map CSV as a PGM image."""
    out = Path(out)
    params = {"map": _abs(map_path), "name": out.name, "clamp": clamp}
    execute("render", params, out.parent)


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def rerun(manifest, out) -> None:
    """Replay a run from its manifest into a new directory."""
    raw = read_manifest(manifest)
    if raw["command"] not in COMMANDS:
        raise ManifestError(f"{manifest}: unknown command {raw['command']!r}")
    settings = raw["settings"]
    if not isinstance(settings, dict):
        raise ManifestError(f"{manifest}: settings must be a JSON object")
    unknown = sorted(set(settings) - set(Settings.snapshot()))
    if unknown:
        raise ManifestError(f"{manifest}: unknown settings {', '.join(unknown)}")
    # the run sees the recorded settings, the caller's come back afterwards
    with Settings.applied(settings):
        execute(raw["command"], dict(raw["parameters"]), out)


def main(argv: list[str] | None = None) -> int:
    """Runs the CLI and maps failures to exit codes."""
    try:
        cli.main(args=argv, prog_name="egmrank", standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except (click.ClickException, click.exceptions.Abort) as exc:
        if isinstance(exc, click.ClickException):
            exc.show()
        return 1
    except (DataError, OSError) as exc:
        _log.error(f"{type(exc).__name__}: {exc}")
        click.echo(f"Error: {exc}", err=True)
        return 2
    except NumericalError as exc:
        _log.error(f"{type(exc).__name__}: {exc}")
        click.echo(f"Error: {exc}", err=True)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
