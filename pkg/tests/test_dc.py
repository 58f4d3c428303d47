import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirrortrap.dc import (
    PAD_NAMES,
    STATIC_OFFSETS,
    CompensationMatrix,
    UntrappedError,
    direction_error_deg,
    displacement_from_voltages,
    equilibrium,
    pad_voltages,
    pattern,
    simulate_compensation_matrix,
    voltages_for_displacement,
)

vec3 = st.lists(st.floats(-10, 10), min_size=3, max_size=3).map(np.array)


@pytest.fixture(scope="module")
def simulated(basis, drive, ion):
    return simulate_compensation_matrix(basis, drive, ion)


@given(vec3)
def test_round_trip_published_matrix(u):
    m = CompensationMatrix()
    back = voltages_for_displacement(m, displacement_from_voltages(m, u))
    assert np.allclose(back, u, rtol=1e-9, atol=1e-12)


@given(vec3)
def test_round_trip_simulated_matrix(simulated, u):
    back = voltages_for_displacement(simulated, displacement_from_voltages(simulated, u))
    assert np.allclose(back, u, rtol=1e-9, atol=1e-12)


def test_singular_matrix_rejected():
    with pytest.raises(np.linalg.LinAlgError):
        voltages_for_displacement(CompensationMatrix(np.diag([1.0, 1.0, 0.0])), [1, 2, 3])
    with pytest.raises(ValueError):
        CompensationMatrix(np.eye(2))


@given(vec3, vec3)
def test_pad_composition_counts_offsets_once(u, v):
    a, b, ab = pad_voltages(u), pad_voltages(v), pad_voltages(u + v)
    for name in PAD_NAMES:
        off = STATIC_OFFSETS[int(name[0])]
        assert ab[name] == pytest.approx(a[name] + b[name] - off, abs=1e-12)


def test_patterns_are_balanced_and_orthogonal():
    p = np.array([[pattern(a)[n] for n in PAD_NAMES] for a in range(3)], dtype=float)
    assert np.allclose(p.sum(axis=1), 0.0)
    assert np.allclose(p @ p.T, 8 * np.eye(3))


def test_x_pair_pads():
    pads = pad_voltages([1.0, 0.0, 0.0], {})
    assert [pads[n] for n in ("1a", "1b", "1c", "1d")] == [1.0, -1.0, -1.0, 1.0]
    assert [pads[n] for n in ("5a", "5b", "5c", "5d")] == [1.0, -1.0, -1.0, 1.0]


def test_published_test_vector_voltages():
    u = voltages_for_displacement(CompensationMatrix(), [1.0, 2.0, 3.0]) * 1e3
    assert np.allclose(u, [-1 / 1.495, -2 / 1.495, -3 / 1.052], rtol=1e-12)


def test_zero_pads_keep_ion_on_rf_null(basis, drive, ion, session):
    x = equilibrium(basis, drive, ion, pad_voltages([0, 0, 0], {}))
    assert np.allclose(x, [0.0, 0.0, session.saddle.z_saddle], atol=1e-9)


def test_simulated_slopes(simulated):
    s = simulated.slopes
    assert np.all(s < 0)
    assert s[0] == pytest.approx(s[1], rel=0.02)
    assert simulated.cross_coupling().max() <= 0.05
    assert np.allclose(s / np.array([-1495.0, -1495.0, -1052.0]), 1.0, atol=0.30)


def test_displacement_is_linear_along_test_ray(basis, drive, ion):
    u = voltages_for_displacement(CompensationMatrix(), [1.0, 2.0, 3.0])
    x0 = equilibrium(basis, drive, ion, pad_voltages([0, 0, 0], {}))
    d = [(equilibrium(basis, drive, ion, pad_voltages(t * u, {})) - x0) * 1e3 for t in (0.5, 1.0, 2.0)]
    for t, di in zip((0.5, 1.0, 2.0), d):
        assert direction_error_deg(di, [1, 2, 3]) < 5.0
        assert direction_error_deg(di, d[1]) < 0.5
        assert np.linalg.norm(di) == pytest.approx(t * np.linalg.norm(d[1]), rel=1e-2)


def test_large_static_offsets_untrap(basis, drive, ion):
    with pytest.raises(UntrappedError):
        equilibrium(basis, drive, ion, pad_voltages([0, 0, 0], {1: 5.0, 5: 5.0}))


def test_direction_error():
    assert direction_error_deg([1, 0, 0], [0, 2, 0]) == pytest.approx(90.0)
    assert direction_error_deg([1, 2, 3], [2, 4, 6]) == pytest.approx(0.0, abs=1e-6)
