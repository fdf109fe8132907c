import json
import os
import tempfile
import unittest
from pathlib import Path
from unittest import mock

from egmrank.cli import main
from egmrank.config import Settings
from egmrank.errors import ConvergenceError
from egmrank.stats import BeatFeature, BeatFeatureTable

DATA = "./tests/data"


class _CliCase(unittest.TestCase):
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def run_cli(self, *argv):
        return main([str(a) for a in argv])

    def assertSameArtifacts(self, first: Path, second: Path):
        manifest = json.loads((first / "manifest.json").read_text(encoding="utf-8"))
        for name in manifest["outputs"]:
            self.assertEqual(
                (first / name).read_bytes(), (second / name).read_bytes(), f"{name} differs"
            )


class TestPipeline(_CliCase):
    def test_simulate_analyze_map_and_rerun(self):
        sim, ana, mp = self.root / "sim", self.root / "ana", self.root / "map"

        config = f"{DATA}/desk_homogeneous.cfg"
        self.assertEqual(self.run_cli("simulate", "--config", config, "--out", sim), 0)
        self.assertTrue((sim / "recording.egmr").is_file())
        self.assertTrue((sim / "cell_lat.csv").is_file())

        self.assertEqual(self.run_cli("analyze", "--in", sim / "recording.egmr", "--out", ana), 0)
        profiles = (ana / "profiles.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(len(profiles), 2)
        self.assertTrue(profiles[0].startswith("beat,rank,s1,"))

        code = self.run_cli("map", "--in", sim / "recording.egmr", "--out", mp, "--compare")
        self.assertEqual(code, 0)
        grid = (mp / "sigma2_map.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(grid[0], "# window=3 layout=2x2")
        self.assertEqual(len(grid), 3)
        self.assertTrue((mp / "blocks.csv").is_file())

        for out in (sim, ana, mp):
            again = self.root / f"{out.name}-again"
            self.assertEqual(
                self.run_cli("rerun", "--manifest", out / "manifest.json", "--out", again), 0
            )
            self.assertSameArtifacts(out, again)

    def test_rerun_uses_the_recorded_settings(self):
        sim, plain, tight = self.root / "sim", self.root / "plain", self.root / "tight"
        self.run_cli("simulate", "--config", f"{DATA}/desk_homogeneous.cfg", "--out", sim)
        recording = sim / "recording.egmr"

        self.assertEqual(self.run_cli("analyze", "--in", recording, "--out", plain), 0)
        with mock.patch.object(Settings, "RANK_TOL", 1e-9):
            self.assertEqual(self.run_cli("analyze", "--in", recording, "--out", tight), 0)
        manifest = json.loads((tight / "manifest.json").read_text(encoding="utf-8"))
        self.assertEqual(manifest["settings"]["RANK_TOL"], 1e-9)
        self.assertNotEqual(
            (plain / "profiles.csv").read_bytes(), (tight / "profiles.csv").read_bytes()
        )

        again = self.root / "tight-again"
        default_tol = Settings.RANK_TOL
        code = self.run_cli("rerun", "--manifest", tight / "manifest.json", "--out", again)
        self.assertEqual(code, 0)
        self.assertSameArtifacts(tight, again)
        self.assertEqual(Settings.RANK_TOL, default_tol)

    def test_rerun_rejects_unknown_settings(self):
        manifest = self.root / "run.json"
        manifest.write_text(
            json.dumps(
                {
                    "command": "stats",
                    "version": "",
                    "parameters": {},
                    "settings": {"NO_SUCH_SETTING": 1},
                    "outputs": [],
                }
            ),
            encoding="utf-8",
        )
        code = self.run_cli("rerun", "--manifest", manifest, "--out", self.root / "out")
        self.assertEqual(code, 2)

    def test_ecg_rhythm(self):
        sim, ana = self.root / "sim", self.root / "ana"
        code = self.run_cli(
            "simulate", "--config", f"{DATA}/desk_homogeneous.cfg", "--out", sim,
            "--ecg", "--beats", 3,
        )
        self.assertEqual(code, 0)
        manifest = json.loads((sim / "manifest.json").read_text(encoding="utf-8"))
        self.assertIn("recording.ann", manifest["outputs"])
        self.assertIn("tissue", manifest["parameters"]["scenario"])

        code = self.run_cli(
            "analyze", "--in", sim / "recording.egmr", "--out", ana,
            "--annotations", sim / "recording.ann",
        )
        self.assertEqual(code, 0)
        profiles = (ana / "profiles.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual([line.split(",")[0] for line in profiles[1:]], ["0", "1", "2"])


class TestStatsAndRender(_CliCase):
    def test_stats(self):
        groups = (("sr", "SR", (0.01, 0.02, 0.03)), ("af", "AF", (0.2, 0.3, 0.4)))
        rows = [
            BeatFeature(recording, "BB", rhythm, i, v, (1.0, v))
            for recording, rhythm, values in groups
            for i, v in enumerate(values)
        ]
        BeatFeatureTable(rows).to_csv(self.root / "features.csv")

        out = self.root / "stats"
        self.assertEqual(self.run_cli("stats", "--in", self.root / "features.csv", "--out", out), 0)
        rank_sum = (out / "rank_sum.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(rank_sum[0], "location,n_sr,n_af,u,p")
        self.assertTrue(rank_sum[1].startswith("BB,3,3,0,"))
        thresholds = (out / "thresholds.csv").read_text(encoding="utf-8").splitlines()
        self.assertEqual(thresholds[1].split(",")[0], "BB")

    def test_render(self):
        path = self.root / "map.csv"
        path.write_text("# window=1 layout=2x2\n0,0.125\n0.25,1\n", encoding="utf-8")
        out = self.root / "img" / "map.pgm"

        self.assertEqual(self.run_cli("render", "--map", path, "--out", out), 0)
        self.assertEqual(out.read_text(encoding="ascii"), "P2\n2 2\n255\n0 128\n255 255\n")
        self.assertTrue((out.parent / "map.pgm.manifest.json").is_file())


class TestExitCodes(_CliCase):
    def test_usage_errors(self):
        self.assertEqual(self.run_cli("analyze"), 1)
        self.assertEqual(self.run_cli("bogus"), 1)
        self.assertEqual(self.run_cli("map", "--in", "missing.egmr", "--out", self.root), 1)

    def test_data_errors(self):
        config = self.root / "broken.cfg"
        config.write_text("[tissue]\nrows = 10\ncols = 10\n", encoding="utf-8")
        self.assertEqual(self.run_cli("simulate", "--config", config, "--out", self.root), 2)

        manifest = self.root / "bad.json"
        manifest.write_text('{"command": "map"}', encoding="utf-8")
        self.assertEqual(self.run_cli("rerun", "--manifest", manifest, "--out", self.root), 2)

        csv_path = os.path.join(DATA, "sample_recording.csv")
        self.assertEqual(self.run_cli("analyze", "--in", csv_path, "--out", self.root), 2)

    def test_file_system_errors(self):
        path = self.root / "map.csv"
        path.write_text("# window=1 layout=2x2\n0,0.125\n0.25,1\n", encoding="utf-8")
        blocker = self.root / "not-a-dir"
        blocker.write_text("", encoding="utf-8")

        code = self.run_cli("render", "--map", path, "--out", blocker / "map.pgm")
        self.assertEqual(code, 2)

    def test_numerical_failure(self):
        sim = self.root / "sim"
        self.run_cli("simulate", "--config", f"{DATA}/desk_homogeneous.cfg", "--out", sim)

        with mock.patch("egmrank.cli._beat_profile", side_effect=ConvergenceError("no sweep")):
            code = self.run_cli("analyze", "--in", sim / "recording.egmr", "--out", self.root)
        self.assertEqual(code, 3)


if __name__ == "__main__":
    unittest.main()
