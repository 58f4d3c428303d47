import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mirrortrap.constants import VOLTAGE_SLOPES_UM_PER_V
from mirrortrap.geometry import EDGE_NAMES
from mirrortrap.pseudo import RangeError
from mirrortrap.saddle import (
    NullNotFound,
    SensitivityModel,
    find_rf_null,
    predict_saddle,
    predict_shift,
    voltage_sensitivity,
)

MODEL = SensitivityModel()
KEYS = ("V2", "V3", "V4")
deltas = st.fixed_dictionaries(
    {"v": st.lists(st.floats(-50, 50), min_size=3, max_size=3),
     "e": st.lists(st.floats(-0.05, 0.05), min_size=8, max_size=8)}
)


def _apply(d1, d2, a, b):
    v = {k: MODEL.reference_voltages[k] + a * x + b * y for k, x, y in zip(KEYS, d1["v"], d2["v"])}
    e = {k: MODEL.reference_edges[k] + a * x + b * y for k, x, y in zip(EDGE_NAMES, d1["e"], d2["e"])}
    return v, e


@given(deltas, deltas, st.floats(-2, 2), st.floats(-2, 2))
def test_prediction_is_exactly_linear(d1, d2, a, b):
    y0 = MODEL.z0
    p = lambda v, e: predict_saddle(MODEL, v, e, strict=False) - y0  # noqa: E731
    both = p(*_apply(d1, d2, a, b))
    parts = a * p(*_apply(d1, d2, 1, 0)) + b * p(*_apply(d1, d2, 0, 1))
    assert both == pytest.approx(parts, rel=1e-9, abs=1e-12)


def test_reference_point_predicts_reference_null():
    assert predict_saddle(MODEL) == MODEL.z0 == 2.1


def test_two_volt_control_moves_null_by_at_most_1p3_um():
    for k in KEYS:
        assert abs(MODEL.voltage_slopes[k] * 2.0) <= 1.3


def test_out_of_range_inputs_raise_unless_relaxed():
    with pytest.raises(RangeError):
        predict_saddle(MODEL, {"V2": 950.0})
    with pytest.raises(RangeError):
        predict_saddle(MODEL, edges={"3_down": 1.0})
    assert predict_shift(MODEL, {"V2": 950.0}, strict=False) == pytest.approx(
        VOLTAGE_SLOPES_UM_PER_V["V2"] * (950.0 - 819.2)
    )


def test_null_lies_in_focus_gap_with_vanishing_field(session):
    rep = session.saddle
    e = session.layout.edges
    assert e["3_up"] < rep.z_saddle < e["4_down"]
    assert rep.residual_field < 1.0
    assert rep.trapping
    assert rep.curvature_axial == pytest.approx(4 * rep.curvature_radial)


def test_common_voltage_scale_leaves_null_unchanged(basis, drive):
    z = find_rf_null(basis, drive, check_field=False).z_saddle
    for s in (0.5, 1.7, -1.0):
        assert find_rf_null(basis, drive.scaled(s), check_field=False).z_saddle == pytest.approx(z, abs=1e-7)


def test_missing_null_is_reported(basis, drive):
    with pytest.raises(NullNotFound):
        find_rf_null(basis, drive, interval=(2.5, 3.0), check_field=False)


@pytest.mark.parametrize("electrode", [2, 3, 4])
def test_full_solver_shift_follows_linear_model(basis, session, electrode):
    """Within 10% for 20 V deviations, using the tabulated slopes."""
    ref = session.reference_drive
    key = f"V{electrode}"
    z0 = find_rf_null(basis, ref, check_field=False).z_saddle
    for dv in (-20.0, 20.0):
        z = find_rf_null(basis, ref.shifted(**{key: dv}), check_field=False).z_saddle
        solver = (z - z0) * 1e3
        predicted = predict_shift(MODEL, {key: ref.voltages()[key] + dv})
        assert solver == pytest.approx(predicted, rel=0.10)


def test_voltage_slope_is_step_independent(basis, session):
    a = voltage_sensitivity(basis, session.reference_drive, 3, 1.0)
    b = voltage_sensitivity(basis, session.reference_drive, 3, 0.25)
    assert a == pytest.approx(b, rel=1e-4)


def test_calibrated_model_reproduces_solver(basis, session):
    cal = SensitivityModel.calibrate(basis, session.reference_drive)
    assert cal.z0 == pytest.approx(session.reference_saddle.z_saddle)
    d = session.reference_drive.shifted(V4=3.0)
    z = find_rf_null(basis, d, check_field=False).z_saddle
    assert predict_saddle(cal, {"V4": d.voltages()["V4"]}) == pytest.approx(z, abs=1e-5)
