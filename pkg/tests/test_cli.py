import json
import math
import os
import subprocess
import sys

import numpy as np
import pytest

import rwreg
from rwreg.cli import cli_main

from conftest import FIXTURE_PGM, FIXTURE_SPEC


def run_cli(capsys, *argv):
    code = cli_main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestReproduce:
    def test_figure_1_json(self, capsys):
        code, out, _ = run_cli(capsys, "reproduce", "--figure", "1", "--json")
        assert code == 0
        payload = json.loads(out)
        assert payload["figure"] == 1
        assert payload["quantities"]["uniform_entropy_bits"] == 2.0
        assert payload["quantities"]["peaked_entropy_bits"] == pytest.approx(
            1.3568, abs=1e-3
        )
        assert payload["all_passed"] is True
        assert all(payload["passed"].values())

    @pytest.mark.parametrize("figure", [1, 2, 5])
    def test_all_figures_pass(self, capsys, figure):
        code, out, _ = run_cli(capsys, "reproduce", "--figure", str(figure), "--json")
        assert code == 0
        assert json.loads(out)["all_passed"] is True

    def test_plain_text_output(self, capsys):
        code, out, _ = run_cli(capsys, "reproduce", "--figure", "5")
        assert code == 0
        assert "mode-vs-most-likely-label" in out
        assert "PASS" in out

    def test_unknown_figure_is_usage_error(self, capsys):
        code, _, err = run_cli(capsys, "reproduce", "--figure", "3")
        assert code == 1
        assert "--figure" in err


class TestUsageErrors:
    def test_register_missing_fixed(self, capsys):
        code, _, err = run_cli(capsys, "register", "--moving", "m.pgm", "--out", "o.pird")
        assert code == 1
        assert "--fixed" in err

    def test_no_subcommand(self, capsys):
        code, _, _ = run_cli(capsys)
        assert code == 1

    def test_help_exits_zero(self, capsys):
        code, out, _ = run_cli(capsys, "--help")
        assert code == 0
        assert "register" in out

    def test_missing_input_file_is_data_error(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys,
            "register",
            "--fixed", str(tmp_path / "absent.pgm"),
            "--moving", str(tmp_path / "absent.pgm"),
            "--out", str(tmp_path / "o.pird"),
        )
        assert code == 2
        assert "absent.pgm" in err

    def test_corrupt_pird_is_data_error(self, capsys, tmp_path):
        bad = tmp_path / "bad.pird"
        bad.write_bytes(b"JUNKJUNKJUNKJUNK")
        moving = tmp_path / "m.pgm"
        rwreg.write_pgm(rwreg.ScalarImage(np.zeros((2, 2))), str(moving))
        code, _, err = run_cli(
            capsys,
            "analyze",
            "--dist", str(bad),
            "--moving", str(moving),
            "--out-prefix", str(tmp_path / "out"),
        )
        assert code == 2
        assert "bad.pird" in err


@pytest.fixture(scope="module")
def small_pair(tmp_path_factory):
    """A 24x24 fixed/moving pair with a gentle one-voxel-amplitude warp."""
    root = tmp_path_factory.mktemp("pair")
    fixed = rwreg.two_region_image(24, radius=6)
    spec = rwreg.BumpSpec(((6.0, 12.0),), ((1.0, 0.0),), (4.0,))
    moving = rwreg.warp_image(fixed, rwreg.make_bump_deformation(fixed.dims, spec))
    fixed_path = str(root / "fixed.pgm")
    moving_path = str(root / "moving.pgm")
    rwreg.write_pgm(fixed, fixed_path)
    rwreg.write_pgm(moving, moving_path)
    return fixed_path, moving_path


class TestRegisterAnalyze:
    def test_full_pipeline(self, capsys, tmp_path, small_pair):
        fixed_path, moving_path = small_pair
        dist_path = str(tmp_path / "out.pird")
        code, out, _ = run_cli(
            capsys,
            "register",
            "--fixed", fixed_path,
            "--moving", moving_path,
            "--radius", "1",
            "--deterministic",
            "--out", dist_path,
        )
        assert code == 0
        echo = json.loads(out)
        assert echo["params"]["radius"] == 1
        assert echo["K"] == 9

        prefix = str(tmp_path / "analysis")
        code, out, _ = run_cli(
            capsys,
            "analyze",
            "--dist", dist_path,
            "--moving", moving_path,
            "--bin-width", "0",
            "--out-prefix", prefix,
        )
        assert code == 0
        stats = json.loads(out)
        with open(prefix + "_stats.json", encoding="ascii") as handle:
            assert json.load(handle) == stats
        for suffix in (
            "mode.pgm",
            "mli.pgm",
            "disagreement.pgm",
            "transform_entropy.ppm",
            "label_entropy.ppm",
            "label_std.ppm",
            "label_iqr.ppm",
            "stats.json",
        ):
            assert os.path.exists(f"{prefix}_{suffix}"), suffix
        assert stats["count_disagreement"] >= 0
        assert stats["maps"]["transform_entropy"]["max"] <= math.log2(9) + 1e-9

    def test_analyze_stats_match_in_process(self, capsys, tmp_path, small_pair):
        fixed_path, moving_path = small_pair
        dist_path = str(tmp_path / "d.pird")
        run_cli(
            capsys,
            "register",
            "--fixed", fixed_path,
            "--moving", moving_path,
            "--radius", "1",
            "--out", dist_path,
        )
        prefix = str(tmp_path / "a")
        code, out, _ = run_cli(
            capsys,
            "analyze",
            "--dist", dist_path,
            "--moving", moving_path,
            "--out-prefix", prefix,
        )
        assert code == 0
        stats = json.loads(out)

        fixed = rwreg.read_pgm(fixed_path)
        moving = rwreg.read_pgm(moving_path)
        field, dset = rwreg.register(fixed, moving, rwreg.RegistrationParams(radius=1))
        maps = rwreg.compute_uncertainty_maps(field, moving, dset, 0.0)
        # the only drift allowed is float32 storage: <= 1e-6 relative
        for name, grid in (
            ("transform_entropy", maps.transform_entropy),
            ("label_entropy", maps.label_entropy),
            ("label_variance", maps.label_variance),
            ("label_std", maps.label_std),
            ("label_iqr", maps.label_iqr),
        ):
            assert stats["maps"][name]["mean"] == pytest.approx(
                float(grid.mean()), rel=1e-6, abs=1e-12
            ), name
        assert stats["count_disagreement"] == int(maps.disagreement.sum())


class TestSynthCommand:
    def test_committed_fixture_report(self, capsys, tmp_path):
        report_path = str(tmp_path / "report.json")
        code, out, _ = run_cli(
            capsys,
            "synth",
            "--image", FIXTURE_PGM,
            "--spec", FIXTURE_SPEC,
            "--deterministic",
            "--out-report", report_path,
        )
        assert code == 0
        assert "disagreement" in out
        with open(report_path, encoding="ascii") as handle:
            report = rwreg.ExperimentReport.from_dict(json.load(handle))
        synth = report.synth
        assert synth.count_disagreement > 0
        assert synth.count_mode_beats_mli > 0
        assert synth.count_mli_beats_mode > 0
        assert synth.mode_label_error.mean_abs < synth.identity_error.mean_abs

    def test_random_spec_with_seed_override(self, capsys, tmp_path):
        img_path = str(tmp_path / "img.pgm")
        rwreg.write_pgm(rwreg.two_region_image(24, radius=6), img_path)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(
            json.dumps({"random": {"count": 2, "max_amplitude": 1.0}})
        )
        report_path = str(tmp_path / "r.json")
        code, _, _ = run_cli(
            capsys,
            "synth",
            "--image", img_path,
            "--spec", str(spec_path),
            "--seed", "9",
            "--out-report", report_path,
        )
        assert code == 0
        with open(report_path, encoding="ascii") as handle:
            report = json.load(handle)
        assert report["synth"]["bump_spec"]["seed"] == 9
        assert len(report["synth"]["bump_spec"]["centers"]) == 2

    def test_amplitude_above_radius_is_data_error(self, capsys, tmp_path):
        img_path = str(tmp_path / "img.pgm")
        rwreg.write_pgm(rwreg.two_region_image(16, radius=4), img_path)
        spec_path = tmp_path / "spec.json"
        spec_path.write_text(
            json.dumps(
                {"centers": [[8, 8]], "amplitudes": [[4, 0]], "widths": [3.0], "seed": 0}
            )
        )
        code, _, err = run_cli(
            capsys,
            "synth",
            "--image", img_path,
            "--spec", str(spec_path),
            "--radius", "2",
            "--out-report", str(tmp_path / "r.json"),
        )
        assert code == 2
        assert "radius" in err


class TestCompare:
    def test_csv_table(self, capsys, tmp_path):
        a = rwreg.ScalarImage(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = rwreg.ScalarImage(np.array([[1.0, 5.0], [3.0, 4.0]]))
        a_path, b_path = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
        rwreg.write_pgm(a, a_path)
        rwreg.write_pgm(b, b_path)
        out_path = str(tmp_path / "table.csv")
        code, out, _ = run_cli(capsys, "compare", "--gt", a_path, "--est", b_path, "--out", out_path)
        assert code == 0
        with open(out_path, encoding="ascii") as handle:
            lines = handle.read().strip().splitlines()
        assert lines[0] == "i,j,gt,est,abs_err"
        assert len(lines) == 5
        assert lines[2] == "0,1,2.0,5.0,3.0"
        assert "mean abs error 0.75" in out

    def test_dim_mismatch(self, capsys, tmp_path):
        a_path, b_path = str(tmp_path / "a.pgm"), str(tmp_path / "b.pgm")
        rwreg.write_pgm(rwreg.ScalarImage(np.zeros((2, 2))), a_path)
        rwreg.write_pgm(rwreg.ScalarImage(np.zeros((3, 2))), b_path)
        code, _, err = run_cli(
            capsys, "compare", "--gt", a_path, "--est", b_path, "--out", str(tmp_path / "t.csv")
        )
        assert code == 2
        assert "--gt" in err


class TestModuleEntryPoint:
    def test_python_dash_m_invocation(self):
        result = subprocess.run(
            [sys.executable, "-m", "rwreg", "reproduce", "--figure", "1", "--json"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 0
        assert json.loads(result.stdout)["all_passed"] is True
