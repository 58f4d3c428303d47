import csv
import hashlib
import subprocess
import sys

import pytest
import yaml

from mirrortrap.cli import main

LABEL_COLUMNS = {
    "quantity", "unit", "value", "target", "tolerance", "status", "criterion", "drive", "axis",
    "electrode", "edge", "scenario", "mode", "pattern", "pad", "component", "run", "escaped",
    "flagged", "within_range",
}
UNIT_SUFFIXES = ("_mm", "_um", "_V", "_kHz", "_eV", "_us", "_rel", "_per_V", "_per_um", "_per_mm2", "_V_per_V")


@pytest.fixture
def cfg(tmp_path, cache_dir, basis):
    # basis fixture first so the shared cache already holds the reference solve
    p = tmp_path / "c.yaml"
    p.write_text(f"output_dir: {tmp_path / 'runs'}\nsolver:\n  cache_dir: {cache_dir}\n")
    return p


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _last_dir(tmp_path, command):
    return sorted((tmp_path / "runs").glob(f"{command}-*"))[-1]


def _check_headers(path):
    for f in path.glob("*.csv"):
        with f.open() as fh:
            header = next(csv.reader(fh))
        for col in header:
            assert col in LABEL_COLUMNS or col.endswith(UNIT_SUFFIXES), (f.name, col)


@pytest.mark.parametrize("command", ["solve", "saddle", "secular", "optics", "dc", "align"])
def test_fast_subcommands_succeed_and_label_units(capsys, tmp_path, cfg, command):
    code, out, err = _run(capsys, command, "--config", str(cfg))
    assert code == 0, err
    d = _last_dir(tmp_path, command)
    assert (d / "manifest.yaml").exists()
    assert list(d.glob("*.csv"))
    _check_headers(d)


def test_manifest_records_config_and_file_hashes(capsys, tmp_path, cfg):
    _run(capsys, "saddle", "--config", str(cfg))
    d = _last_dir(tmp_path, "saddle")
    m = yaml.safe_load((d / "manifest.yaml").read_text())
    assert m["command"] == "saddle" and m["exit_status"] == 0 and m["version"]
    assert len(m["config_sha256"]) == 64
    for name, digest in m["files"].items():
        assert hashlib.sha256((d / name).read_bytes()).hexdigest() == digest


def test_repeated_runs_are_byte_identical(capsys, tmp_path, cfg):
    for _ in range(2):
        assert _run(capsys, "secular", "--config", str(cfg))[0] == 0
        assert _run(capsys, "dc", "--config", str(cfg))[0] == 0
    for command in ("secular", "dc"):
        a, b = sorted((tmp_path / "runs").glob(f"{command}-*"))
        assert a.name.endswith("-001") and b.name.endswith("-002")
        for f in a.glob("*.csv"):
            assert f.read_bytes() == (b / f.name).read_bytes()


def test_out_flag_overrides_config(capsys, tmp_path, cfg):
    code, _, _ = _run(capsys, "optics", "--config", str(cfg), "--out", str(tmp_path / "else"))
    assert code == 0
    assert (tmp_path / "else" / "optics-001" / "optics.csv").exists()


def test_config_error_exit_code_and_location(capsys, tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("rf:\n  frequency_mhz: fast\n")
    code, _, err = _run(capsys, "saddle", "--config", str(p))
    assert code == 2
    assert err.startswith(f"{p}:2:18:")


def test_strict_ranges(capsys, tmp_path, cache_dir):
    p = tmp_path / "c.yaml"
    p.write_text(f"output_dir: {tmp_path}\nsolver:\n  cache_dir: {cache_dir}\nrf:\n  voltages_v: {{V2: 950.0, V3: 541.0, V4: 712.75}}\n")
    code, _, err = _run(capsys, "optics", "--config", str(p), "--strict-ranges")
    assert code == 2 and "V2=950 V outside" in err
    assert _run(capsys, "optics", "--config", str(p))[0] == 0


def test_layout_error_exit_code(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(f"output_dir: {tmp_path}\nsolver:\n  resolution: custom\n  edge_size_mm: 0.05\n  max_mode: 0\n")
    code, _, err = _run(capsys, "solve", "--config", str(p), "--no-cache")
    assert code == 2 and "narrowest gap" in err


def test_solver_error_exit_code(capsys, tmp_path, cache_dir, basis):
    p = tmp_path / "c.yaml"
    p.write_text(f"output_dir: {tmp_path}\nsolver:\n  cache_dir: {cache_dir}\n"
                 "rf:\n  voltages_v: {V2: 0.0, V3: 0.0, V4: 712.75}\n")
    code, _, err = _run(capsys, "saddle", "--config", str(p))
    assert code == 3 and "no null" in err


def test_infeasible_alignment_exit_code(capsys, tmp_path, cache_dir):
    p = tmp_path / "c.yaml"
    p.write_text(f"output_dir: {tmp_path / 'runs'}\nsolver:\n  cache_dir: {cache_dir}\nalignment:\n  scenarios:\n"
                 "    - name: far\n      deviations_um: {2_down: 100.0}\n      extrapolate: true\n")
    code, _, err = _run(capsys, "align", "--config", str(p))
    assert code == 1 and "outside" in err
    rows = list(csv.DictReader((_last_dir(tmp_path, "align") / "alignment.csv").open()))
    assert rows[0]["within_range"] == "false"


def test_console_script_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "mirrortrap.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.startswith("mirrortrap ")
    r = subprocess.run([sys.executable, "-m", "mirrortrap.cli", "bogus"], capture_output=True, text=True)
    assert r.returncode == 2


def test_optics_with_unit_factors(capsys, tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(f"output_dir: {tmp_path / 'runs'}\noptics:\n  reflectivity: 1\n  fiber_coupling: 1\n"
                 "  transmission: 1\n  p_omega: 1\n")
    assert _run(capsys, "optics", "--config", str(p))[0] == 0
    rows = {r["quantity"]: r for r in csv.DictReader((_last_dir(tmp_path, "optics") / "optics.csv").open())}
    assert float(rows["total_efficiency"]["value"]) == 1.0


def test_default_align_scenario_gives_least_norm_voltages(capsys, tmp_path, cfg):
    assert _run(capsys, "align", "--config", str(cfg))[0] == 0
    (row,) = csv.DictReader((_last_dir(tmp_path, "align") / "alignment.csv").open())
    assert row["scenario"] == "edge_2_down_plus_1um"
    got = [float(row[k]) for k in ("dV2_V", "dV3_V", "dV4_V")]
    assert got == pytest.approx([1.08242, -0.69959, -0.71151], abs=1e-5)


def test_paper_check_exit_status_follows_table(capsys, tmp_path, cfg, monkeypatch):
    from mirrortrap import paper_check

    fast = {k: paper_check.CRITERIA[k] for k in (1, 7, 10)}
    monkeypatch.setattr(paper_check, "CRITERIA", fast)
    code, out, _ = _run(capsys, "paper-check", "--config", str(cfg))
    assert code == 0
    assert "z_saddle" in out and "efficiency_product" in out and "INFO" in out
    d = _last_dir(tmp_path, "paper-check")
    assert (d / "paper_check.csv").exists()

    def broken(s):
        return [paper_check.Check(99, "forced", "1", 1.0, 0.0, "== 0", False)]

    monkeypatch.setattr(paper_check, "CRITERIA", {**fast, 99: broken})
    code, _, err = _run(capsys, "paper-check", "--config", str(cfg))
    assert code == 1 and "forced" in err
