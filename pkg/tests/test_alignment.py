import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirrortrap.alignment import AlignmentProblem, InfeasibleAlignment, solve_alignment
from mirrortrap.pseudo import RangeError
from mirrortrap.saddle import SensitivityModel, predict_saddle, predict_shift

MODEL = SensitivityModel()
K = MODEL.k_voltage
# deviation windows [um] of the edges, from the model's validity ranges
WINDOWS = {k: ((lo - MODEL.reference_edges[k]) * 1e3, (hi - MODEL.reference_edges[k]) * 1e3)
           for k, (lo, hi) in MODEL.edge_ranges.items()}
edge_dev = st.sampled_from(sorted(WINDOWS.items()))


def _solve(dev, **kw):
    return solve_alignment(AlignmentProblem(MODEL, dev, **kw))


def _closure(sol, dev):
    edges = {k: MODEL.reference_edges[k] + 1e-3 * d for k, d in dev.items()}
    return predict_saddle(MODEL, sol.voltages, edges, strict=False)


def test_least_norm_for_one_micron_on_2_down():
    # oracle: pseudo-inverse of the 1x3 slope row times the needed shift
    need = -MODEL.edge_slopes["2_down"] * 1.0
    oracle = np.linalg.pinv(K[None, :]) @ np.array([need])
    sol = _solve({"2_down": 1.0})
    assert np.allclose(sol.delta_v, oracle, rtol=0, atol=1e-12)
    assert np.allclose(sol.delta_v, [1.08242, -0.69959, -0.71151], atol=1e-5)
    assert sol.structural_shift_um == pytest.approx(1.2364)


@given(edge_dev, st.floats(0.01, 0.99))
def test_least_norm_is_parallel_to_slopes_and_closes(e, t):
    name, (lo, hi) = e
    dev = {name: lo + t * (hi - lo)}
    sol = _solve(dev)
    cos = sol.delta_v @ K / (np.linalg.norm(sol.delta_v) * np.linalg.norm(K))
    assert abs(abs(cos) - 1.0) < 1e-12
    assert _closure(sol, dev) == pytest.approx(MODEL.z0, abs=1e-12)
    assert abs(sol.predicted_residual_um) < 1e-12


@given(edge_dev, st.floats(0.05, 0.95), st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_any_other_feasible_correction_is_larger(e, t, w):
    name, (lo, hi) = e
    sol = _solve({name: lo + t * (hi - lo)})
    w = np.asarray(w)
    null = w - (w @ K) / (K @ K) * K  # leaves k . dV unchanged
    other = sol.delta_v + null
    assert other @ K == pytest.approx(sol.delta_v @ K, abs=1e-9)
    assert np.linalg.norm(other) >= np.linalg.norm(sol.delta_v) - 1e-12


@given(st.floats(0, 20), st.floats(-2, 2))
def test_correction_scales_linearly_with_structural_shift(d, s):
    a = _solve({"2_down": d}).delta_v
    b = _solve({"2_down": s * d}, extrapolate=True).delta_v
    assert np.allclose(b, s * a, atol=1e-12)


def test_wrong_sign_doubles_the_mismatch():
    dev = {"1_up": -4.0}
    sol = _solve(dev)
    dy = sol.structural_shift_um
    v = {k: MODEL.reference_voltages[k] - d for k, d in zip(("V2", "V3", "V4"), sol.delta_v)}
    edges = {"1_up": MODEL.reference_edges["1_up"] - 4e-3}
    assert predict_shift(MODEL, v, edges) == pytest.approx(2 * dy, rel=1e-12)


@pytest.mark.parametrize("electrode", [2, 3, 4])
def test_single_electrode_mode(electrode):
    dev = {"2_down": 1.0}
    sol = _solve(dev, mode="single", electrode=electrode)
    nz = np.flatnonzero(sol.delta_v)
    assert nz.tolist() == [electrode - 2]
    assert _closure(sol, dev) == pytest.approx(MODEL.z0, abs=1e-12)


def test_weighted_mode_protects_heavy_electrode():
    dev = {"2_down": 1.0}
    plain = _solve(dev)
    heavy = _solve(dev, mode="weighted", weights=(1.0, 100.0, 1.0))
    assert abs(heavy.delta_v[1]) < abs(plain.delta_v[1]) / 10
    assert _closure(heavy, dev) == pytest.approx(MODEL.z0, abs=1e-12)
    unit = _solve(dev, mode="weighted", weights=(2.0, 2.0, 2.0))
    assert np.allclose(unit.delta_v, plain.delta_v, atol=1e-12)


def test_bad_modes_rejected():
    with pytest.raises(ValueError):
        _solve({"2_down": 1.0}, mode="single", electrode=5)
    with pytest.raises(ValueError):
        _solve({"2_down": 1.0}, mode="weighted", weights=(1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        _solve({"2_down": 1.0}, mode="minimax")


def test_edge_outside_validity_window_needs_extrapolation():
    with pytest.raises(RangeError):
        _solve({"3_down": -200.0})
    assert _solve({"3_down": -200.0}, extrapolate=True).within_range


def test_voltage_window_violation_carries_solution():
    with pytest.raises(InfeasibleAlignment) as info:
        _solve({"2_down": 100.0}, extrapolate=True)
    sol = info.value.solution
    assert not sol.within_range and sol.notes
    assert _closure(sol, {"2_down": 100.0}) == pytest.approx(MODEL.z0, abs=1e-12)


def test_solution_builds_a_drive():
    sol = _solve({"2_down": 1.0})
    d = sol.drive(20.0)
    assert d.rf_voltages == tuple(sol.voltages[k] for k in ("V2", "V3", "V4"))
