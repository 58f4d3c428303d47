import pytest

from mirrortrap.config import ConfigError, default_config_text, load_config


def _errors(text):
    with pytest.raises(ConfigError) as info:
        load_config(text=text)
    return info.value.lines()


def test_defaults_round_trip_through_text():
    a = load_config()
    b = load_config(text=default_config_text())
    assert a.source == "<defaults>" and b.source == "<string>"
    assert a.digest() == b.digest()
    assert a.plain() == b.plain()


def test_defaults_describe_the_reference_design():
    c = load_config()
    assert c.drive().voltages() == {"V2": 819.2, "V3": 541.0, "V4": 712.75}
    assert c.drive(reference=True).voltages()["V4"] == 708.0
    assert c.layout().focus == 2.1
    assert c.ion().mass_amu == 171.0
    assert c.clearance_mm() == 2.1
    assert [r["name"] for r in c.trajectory_runs()] == ["null_at_rest", "radial_100um", "axial_50um"]


def test_unknown_key_points_at_line_and_column():
    (line,) = _errors("layout:\n  focal_lenght_mm: 2.1\n")
    assert line.startswith("<string>:2:3: unknown key 'layout.focal_lenght_mm'")


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("rf:\n  frequency_mhz: fast\n", "2:18: rf.frequency_mhz: expected number"),
        ("rf:\n  frequency_mhz: true\n", "expected number, got a boolean"),
        ("ion:\n  mass_amu: 1\n  mass_amu: 2\n", "3:3: duplicate key 'ion.mass_amu'"),
        ("layout:\n  focal_length_mm: -1\n", "layout.focal_length_mm must be positive"),
        ("layout:\n  edges_mm: {3_up: 2.5}\n", "overlap: 3_up=2.5 above 4_down=2.3"),
        ("rf: [1,\n", "YAML syntax error"),
        ("solver:\n  resolution: huge\n", "solver.resolution 'huge' is not one of"),
        ("trajectory:\n  runs:\n    - start_offset_um: [0,0,0]\n", "trajectory.runs[0]: missing 'name'"),
        ("alignment:\n  scenarios:\n    - name: a\n      deviations_um: {9_up: 1}\n", "deviations_um: bad entry"),
    ],
)
def test_invalid_configs(text, fragment):
    lines = _errors(text)
    assert any(fragment in ln for ln in lines), lines


def test_all_problems_reported_together():
    lines = _errors("ion:\n  mass_amu: heavy\nrf:\n  frequency_mhz: x\nbogus: 1\n")
    assert len(lines) >= 3


def test_file_source_and_units_in_key_names(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("rf:\n  frequency_mhz: 25\n")
    c = load_config(p)
    assert c.source == str(p)
    assert c.drive().frequency_mhz == 25.0
    p.write_text("rf:\n  frequency: 25\n")
    with pytest.raises(ConfigError) as info:
        load_config(p)
    assert info.value.lines()[0].startswith(f"{p}:2:3:")


def test_resolution_override_and_custom():
    c = load_config(text="solver:\n  resolution: custom\n  edge_size_mm: 0.002\n  max_mode: 2\n")
    r = c.resolution()
    assert r.edge_size == 0.002 and r.max_mode == 2
    assert load_config(resolution_override="coarse").resolution().max_size > r.max_size
    with pytest.raises(ConfigError):
        load_config(resolution_override="huge")


def test_digest_tracks_content():
    assert load_config(text="rf:\n  frequency_mhz: 21\n").digest() != load_config().digest()
