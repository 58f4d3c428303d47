import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirrortrap.geometry import ParaboloidSpec
from mirrortrap.optics import (
    CLEARANCE_PRESETS,
    BeamSpec,
    beam_clearance,
    deflection_angle,
    efficiency_chain,
    entanglement_rate,
    optics_report,
    solid_angle_fraction,
    theta_max,
)

unit = st.floats(0, 1)


def test_quoted_geometry_numbers():
    assert deflection_angle(75.0) == 150.0
    # (1 - cos 150 deg) / 2
    assert solid_angle_fraction(150.0) == pytest.approx(0.9330127, abs=1e-7)
    assert theta_max(ParaboloidSpec()) == pytest.approx(150.137, abs=1e-3)


def test_beam_numbers():
    beam = BeamSpec(369.0, 50.0)
    z_r, diam, ok = beam_clearance(beam, 2.1, 256.0)
    assert z_r == pytest.approx(math.pi * 50.0**2 / 369.0, rel=1e-12)  # um^2/nm is mm
    assert z_r == pytest.approx(21.2845, abs=1e-4)
    assert diam == pytest.approx(100.486, abs=1e-3)
    assert ok
    assert not beam_clearance(beam, 2.1, 100.0)[2]


def test_efficiency_product_and_rate():
    total = efficiency_chain(solid_angle_fraction(150.0), 0.90, 0.90, 0.95)
    assert total == pytest.approx(0.717953, abs=1e-6)
    assert entanglement_rate(183.0, total, 0.10) == pytest.approx(9432.7, abs=0.5)


def test_solid_angle_endpoints():
    assert solid_angle_fraction(0.0) == 0.0
    assert solid_angle_fraction(180.0) == 1.0
    with pytest.raises(ValueError):
        solid_angle_fraction(181.0)


@given(st.floats(0, 180), st.floats(0, 180))
def test_solid_angle_monotone(a, b):
    lo, hi = sorted((a, b))
    assert solid_angle_fraction(lo) <= solid_angle_fraction(hi)


@given(st.floats(0.5, 40.0), st.floats(0.5, 40.0))
def test_theta_max_monotone_in_rim_over_focal_length(d1, d2):
    lo, hi = sorted((d1, d2))
    assert theta_max(ParaboloidSpec.truncated(lo)) <= theta_max(ParaboloidSpec.truncated(hi))


@given(st.floats(1.0, 2000.0), st.floats(1.0, 500.0))
def test_waist_grows_by_root_two_at_rayleigh_length(wl, w0):
    beam = BeamSpec(wl, w0)
    assert beam.radius_um(beam.rayleigh_mm) == pytest.approx(w0 * math.sqrt(2.0), rel=1e-12)


@given(st.floats(0, 100), st.floats(0, 100))
def test_beam_diameter_monotone_in_distance(a, b):
    lo, hi = sorted((a, b))
    beam = BeamSpec()
    assert beam_clearance(beam, lo)[1] <= beam_clearance(beam, hi)[1]


@given(unit, unit, unit, unit)
def test_efficiency_chain_symmetric(a, b, c, d):
    ref = efficiency_chain(a, b, c, d)
    assert efficiency_chain(d, c, b, a) == pytest.approx(ref, abs=1e-15)
    assert efficiency_chain(b, a, d, c) == pytest.approx(ref, abs=1e-15)


@given(unit, unit, unit, unit, st.floats(0, 1))
def test_efficiency_chain_homogeneous_in_each_factor(a, b, c, d, s):
    ref = efficiency_chain(a, b, c, d)
    assert efficiency_chain(s * a, b, c, d) == pytest.approx(s * ref, abs=1e-15)
    assert efficiency_chain(a, b, c, s * d) == pytest.approx(s * ref, abs=1e-15)


def test_efficiency_factors_range_checked():
    with pytest.raises(ValueError):
        efficiency_chain(0.9, 1.1, 0.9, 0.9)


@given(st.floats(0.01, 1.0))
def test_rate_is_quadratic_in_efficiency(eta):
    assert entanglement_rate(183.0, 2 * eta, 0.1) == pytest.approx(4 * entanglement_rate(183.0, eta, 0.1))


def test_report_rows_and_presets():
    rep = optics_report(p_omega=0.9330)
    units = {q: u for q, u, _ in rep.rows()}
    assert units["rayleigh_length"] == "mm" and units["gap_beam_diameter"] == "um"
    assert rep.total == pytest.approx(0.7179, abs=5e-4)
    far = optics_report(clearance_mm=CLEARANCE_PRESETS["radial_wall"])
    assert far.gap_diameter_um > rep.gap_diameter_um
    with pytest.raises(ValueError):
        BeamSpec(waist_um=0.0)
