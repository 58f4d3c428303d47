import numpy as np
import pytest
from scipy.signal import find_peaks

from mirrortrap.bem import field_at
from mirrortrap.dynamics import (
    FieldModel,
    TrajectoryError,
    integrate,
    micromotion_amplitude,
    secular_energy_drift,
    secular_frequencies,
    spectrum,
)
from mirrortrap.pseudo import fit_secular

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def fields(basis, drive, ion):
    return FieldModel(basis, drive, ion, reach=0.2)


@pytest.fixture(scope="module")
def axial_run(fields):
    return integrate(fields, fields.center + [0.0, 0.0, 0.02], dt_ns=1.0, duration_us=650.0, sample_every=5)


def test_zero_field_gives_straight_line(basis, drive, ion):
    still = FieldModel(basis, drive.scaled(0.0), ion, reach=0.2, center=2.1)
    v0 = np.array([1e-3, -2e-3, 5e-4])  # mm/us
    run = integrate(still, still.center, v0, dt_ns=1.0, duration_us=20.0)
    assert np.allclose(run.x, still.center + run.t[:, None] * v0, atol=1e-12)
    assert np.allclose(run.v, v0, atol=1e-15)


def test_time_step_bound(fields):
    with pytest.raises(ValueError):
        integrate(fields, fields.center, dt_ns=1.01, duration_us=1.0)


def test_start_outside_field_region(fields):
    with pytest.raises(TrajectoryError):
        integrate(fields, fields.center + [0.3, 0.0, 0.0], duration_us=1.0)


def test_ion_at_null_has_no_micromotion(fields):
    run = integrate(fields, fields.center, duration_us=10.0)
    assert micromotion_amplitude(run) * 1e3 < 10.0  # nm


def test_expansion_matches_boundary_elements(basis, drive, fields):
    p = fields.center + [0.05, -0.03, 0.04]
    g = fields.rf_gradient(p)[0]
    e = field_at(basis, drive.voltages(), p) * 1e-3  # V/mm
    assert np.allclose(-g, e, rtol=1e-6, atol=1e-9)


def test_secular_frequency_matches_pseudopotential(basis, drive, ion, fields, axial_run):
    z0 = fields.center[2]
    _, f_z = fit_secular(basis, drive, ion, "z", center_z=z0)
    peaks = secular_frequencies(axial_run)
    assert set(peaks) == {"z"}
    assert peaks["z"] == pytest.approx(f_z, rel=0.05)


def test_axial_spectrum_holds_only_secular_lines(fields, axial_run):
    f, mag = spectrum(axial_run, 2)
    f_z = secular_frequencies(axial_run)["z"]
    omega = fields.drive.frequency_mhz * 1e3
    lines = np.array([f_z, omega - f_z, omega + f_z])
    idx, _ = find_peaks(mag, height=1e-2 * mag.max())  # -40 dB floor
    assert len(idx) >= 1
    for i in idx:
        assert np.min(np.abs(lines - f[i])) < 1.0


def test_radial_spectrum_has_rf_sidebands(fields):
    run = integrate(fields, fields.center + [0.05, 0.0, 0.0], dt_ns=1.0, duration_us=400.0, sample_every=5)
    f, mag = spectrum(run, 0)
    f_r = secular_frequencies(run)["x"]
    omega = fields.drive.frequency_mhz * 1e3
    # each sideband carries a quarter of the Mathieu q times the excursion, far below -40 dB
    heights = []
    for target in (omega - f_r, omega + f_r):
        sel = np.abs(f - target) < 1.0
        floor = np.median(mag[np.abs(f - target) < 20.0])
        heights.append(mag[sel].max())
        assert heights[-1] > 100 * floor
    assert heights[0] == pytest.approx(heights[1], rel=0.2)


def test_energy_is_conserved_on_average(fields, axial_run):
    assert secular_energy_drift(axial_run, fields) < 0.01


def test_micromotion_grows_linearly_with_displacement(basis, drive, ion, fields):
    """Push the ion off the null with a uniform field and compare with q E_rf / (m Omega^2)."""
    a_r = fit_secular(basis, drive, ion, "x", center_z=fields.center[2])[0].a_pond
    t_rf = 1.0 / drive.frequency_mhz
    amps, theory = [], []
    for d_um in (25.0, 50.0, 100.0):
        push = 2 * a_r * d_um * 1e-3  # V/mm for a displacement d in the harmonic well
        run = integrate(fields, fields.center, external_field=[push, 0.0, 0.0],
                        duration_us=1700 * t_rf, damping_us=1500 * t_rf)
        amps.append(micromotion_amplitude(run, start_us=1500 * t_rf))
        mean = run.x[run.t >= 1500 * t_rf].mean(axis=0)
        e_rf = np.linalg.norm(field_at(basis, drive.voltages(), mean))
        theory.append(ion.charge * 1.602176634e-19 * e_rf / (ion.mass_kg * drive.omega**2) * 1e6)
    amps = np.array(amps)
    assert amps[1] / amps[0] == pytest.approx(2.0, rel=0.10)
    assert amps[2] / amps[0] == pytest.approx(4.0, rel=0.10)
    assert np.allclose(amps, theory, rtol=0.10)
