import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirrortrap.constants import EDGE_RANGES_MM
from mirrortrap.geometry import (
    EDGE_NAMES,
    LayoutError,
    ParaboloidSpec,
    default_layout,
    quadrant_of,
    surface_point,
    validate_layout,
    voltage_vector,
)

SPEC = ParaboloidSpec()


def test_surface_point_at_twice_focal_radius_is_focal_height():
    assert surface_point(SPEC, 2 * SPEC.focal_length) == SPEC.focal_length


@given(st.floats(0, SPEC.rim_radius), st.floats(0, SPEC.rim_radius))
def test_surface_point_monotone(r1, r2):
    lo, hi = sorted((r1, r2))
    assert surface_point(SPEC, lo) <= surface_point(SPEC, hi)


def test_surface_point_rejects_outside_aperture():
    with pytest.raises(LayoutError):
        surface_point(SPEC, SPEC.rim_radius + 0.1)
    with pytest.raises(LayoutError):
        surface_point(SPEC, -0.1)


def test_depth_consistency_enforced():
    assert math.isclose(SPEC.rim_z, 29.53125)
    with pytest.raises(LayoutError):
        ParaboloidSpec(depth=20.0)


def test_default_layout_is_valid_and_focus_mid_gap():
    lay = default_layout()
    assert validate_layout(lay) == []
    mid = 0.5 * (lay.edges["3_up"] + lay.edges["4_down"])
    assert abs(mid - lay.focus) < 1e-9


@given(st.floats(0, SPEC.rim_z), st.floats(0, 360, exclude_max=True))
def test_every_height_maps_to_one_electrode_or_gap(z, az):
    lay = default_layout()
    name = lay.electrode_at(z, az)
    if name == "gap":
        assert any(z0 <= z < z1 or z0 < z <= z1 for z0, z1, kind, _ in lay.breakpoints() if kind == "gap")
    else:
        sid = int(name[0])
        seg = lay.segment(sid)
        assert seg.z_lower <= z <= seg.z_upper


def test_segment_intervals_closed_below_open_above():
    lay = default_layout()
    e = lay.edges
    assert lay.electrode_at(e["3_down"]) == "3"
    assert lay.electrode_at(e["3_up"]) == "gap"
    assert lay.electrode_at(e["1_up"], 10.0) == "gap"
    assert lay.electrode_at(0.0, 10.0) == "1a"
    assert lay.electrode_at(SPEC.rim_z, 100.0) == "5b"


def test_quadrant_boundaries_go_to_lower_letter():
    assert quadrant_of(0.0) == "a"
    assert quadrant_of(90.0) == "a"
    assert quadrant_of(180.0) == "b"
    assert quadrant_of(270.0) == "c"
    assert quadrant_of(45.0) == "a"
    assert quadrant_of(315.0) == "d"


@pytest.mark.parametrize("edge", EDGE_NAMES)
def test_edge_perturbations_within_ranges_never_overlap(edge):
    lay = default_layout()
    lo, hi = EDGE_RANGES_MM[edge]
    for z in np.linspace(lo, hi, 7):
        assert validate_layout(lay.with_edge(edge, float(z)), focus_tol=None) == []


def test_overlap_reported():
    lay = default_layout().with_edge("3_up", 2.5)
    assert any("overlap" in p for p in validate_layout(lay, focus_tol=None))


def test_voltage_vector_segment_keys_fan_out_to_pads():
    v = voltage_vector({"V1": 0.35, "V3": 541.0, "5c": 2.0})
    assert v.tolist() == [0.35] * 4 + [0.0, 541.0, 0.0] + [0.0, 0.0, 2.0, 0.0]
    with pytest.raises(KeyError):
        voltage_vector({"V9": 1.0})
