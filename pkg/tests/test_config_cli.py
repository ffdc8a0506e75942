import csv
import json
import os

import numpy as np
import pytest

from spdcsim import cli, config
from spdcsim.errors import ConfigError


@pytest.fixture
def raw():
    return json.loads(config.bundled_text("paper.json"))


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data), encoding="utf-8")
    return str(p)


def error_paths(data):
    with pytest.raises(ConfigError) as exc:
        config.from_dict(data)
    return {path for path, _ in exc.value.errors}


def test_bundled_config_loads(ref):
    assert ref.crystal.cut_angle == 29.67
    assert ref.pump.center_wavelength == 775.0
    assert [f.length for f in ref.fibers] == [4202.0, 4217.0]
    assert [d.jitter_fwhm for d in ref.detectors] == [156.0, 300.0]
    assert ref.tagger_resolution == 156.0


def test_unknown_key_rejected(raw):
    raw["crystal"]["colour"] = "clear"
    raw["extra"] = 1
    paths = error_paths(raw)
    assert "crystal" in paths and "<root>" in paths


def test_missing_key_rejected(raw):
    del raw["geometry"]["pump_waist"]
    assert "geometry" in error_paths(raw)


def test_component_invariants_reported_with_paths(raw):
    raw["detectors"][1]["efficiency"] = 1.5
    raw["fibers"][0]["numerical_aperture"] = 0.3
    raw["crystal"]["length"] = -1
    paths = error_paths(raw)
    assert {"detectors.1.efficiency", "crystal.length"} <= paths


def test_multimode_fiber_rejected(raw):
    raw["fibers"][0]["numerical_aperture"] = 0.3
    assert "fibers.0" in error_paths(raw)


def test_cross_field_checks(raw):
    raw["analysis"]["bin_width"] = 100.0
    raw["detectors"][0]["gated"] = True
    raw["detectors"][0]["gate_width"] = 10.0
    paths = error_paths(raw)
    assert {"analysis.bin_width", "detectors.0.gated"} <= paths


def test_canonical_dump_is_idempotent(ref):
    text = ref.dumps()
    again = config.loads(text).dumps()
    assert again == text
    assert text.endswith("\n")
    assert list(json.loads(text)) == sorted(json.loads(text))


def test_invalid_json():
    with pytest.raises(ConfigError):
        config.loads("{not json")


def cli_run(tmp_path, *argv):
    return cli.run([argv[0], *argv[1:], "--out", str(tmp_path)])


def test_degeneracy_command(tmp_path, capsys):
    assert cli_run(tmp_path, "degeneracy", "paper.json") == 0
    out = json.loads((tmp_path / "degeneracy.json").read_text())
    assert abs(out["degeneracy_angle_deg"] - 29.67) <= 0.5
    assert "29.7" in capsys.readouterr().out


def test_manifest(tmp_path, ref):
    assert cli_run(tmp_path, "resolution", "paper.json", "--seed", "7") == 0
    m = json.loads((tmp_path / "resolution.manifest.json").read_text())
    assert m["seed"] == 7 and m["command"] == "resolution"
    assert m["config"]["seed"] == 7
    assert m["config_sha256"] == config.from_dict(m["config"]).sha256()
    assert set(m["versions"]) >= {"spdcsim", "numpy", "scipy", "python"}
    assert m["outputs"] == ["resolution.json"]
    res = json.loads((tmp_path / "resolution.json").read_text())
    assert abs(res["resolution_nm"] - 4.1) <= 0.35 * 4.1


def test_exit_codes(tmp_path, raw):
    assert cli.run(["no-such-command", "paper.json"]) == cli.EXIT_USAGE
    assert cli.run([]) == cli.EXIT_USAGE
    assert cli_run(tmp_path, "degeneracy", "paper.json", "--grid", "ax3") == cli.EXIT_USAGE
    assert cli_run(tmp_path, "degeneracy", str(tmp_path / "missing.json")) == cli.EXIT_IO
    bad = dict(raw, unknown=1)
    assert cli_run(tmp_path, "degeneracy", write(tmp_path, bad)) == cli.EXIT_VALIDATION
    for f in raw["fibers"]:
        f["length"] = 0.0
    assert cli_run(tmp_path, "resolution", write(tmp_path, raw)) == cli.EXIT_SOLVER
    assert len({cli.EXIT_USAGE, cli.EXIT_VALIDATION, cli.EXIT_SOLVER, cli.EXIT_IO}) == 4


def test_validation_diagnostics_name_fields(tmp_path, raw, capsys):
    raw["detectors"][1]["efficiency"] = 2
    assert cli_run(tmp_path, "degeneracy", write(tmp_path, raw)) == cli.EXIT_VALIDATION
    assert "detectors.1.efficiency" in capsys.readouterr().err


def test_malformed_input_is_io_error(tmp_path):
    (tmp_path / "timetags.csv").write_text("channel,time_ps\ntrigger,abc\n")
    assert cli_run(tmp_path, "histogram", "paper.json") == cli.EXIT_IO


def test_format_json(tmp_path):
    assert cli_run(tmp_path, "tuning-curve", "paper.json", "--format", "json") == 0
    rows = json.loads((tmp_path / "tuning_curve.json").read_text())
    assert len(rows) > 150
    assert set(rows[0]) == {"theta_deg", "lambda_o_nm", "lambda_e_nm", "residual_mismatch"}


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "a.txt"
    cli.atomic_write(str(target), "one\n")
    cli.atomic_write(str(target), "two\n")
    assert target.read_text() == "two\n"
    assert os.listdir(tmp_path) == ["a.txt"]
    with pytest.raises(OSError):
        cli.atomic_write(str(tmp_path / "nodir" / "b.txt"), "x")


def read_histogram(path):
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    return np.array([float(r["bin_start_ps"]) for r in rows]), np.array([int(r["count"]) for r in rows])


def test_polarizer_then_histogram_single_peak(tmp_path, raw):
    raw["acquisition"]["duration"] = 50.0
    path = write(tmp_path, raw)
    assert cli_run(tmp_path, "simulate", path, "--polarizer", "e", "--lambda-o", "1538") == 0
    assert cli_run(tmp_path, "histogram", path, "--lambda-o", "1538") == 0
    starts, counts = read_histogram(tmp_path / "histogram.csv")
    centers = starts + 78.0
    e_peak = np.abs(centers - 71760) < 1000
    o_peak = np.abs(centers - 75100) < 1000
    assert counts[e_peak].sum() > 20 * max(counts[o_peak].sum(), 1)


def test_calibrate_and_reconstruct(tmp_path, raw):
    raw["acquisition"]["duration"] = 50.0
    path = write(tmp_path, raw)
    for cmd in ("simulate", "histogram", "calibrate", "reconstruct"):
        assert cli_run(tmp_path, cmd, path, "--polarizer", "e") == 0
    with open(tmp_path / "reconstructed.csv") as fh:
        rows = list(csv.DictReader(fh))
    lam = np.array([float(r["lambda_s_nm"]) for r in rows])
    dens = np.array([float(r["density"]) for r in rows])
    lam_i = np.array([float(r["lambda_i_nm"]) for r in rows])
    assert np.allclose(1 / lam + 1 / lam_i, 1 / 775.0)
    mean = np.sum(lam * dens) / np.sum(dens)
    assert abs(mean - 1550.0) < 5.3
