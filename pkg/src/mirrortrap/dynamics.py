"""Time-domain ion motion in the full oscillating field.

The equation of motion ``m a = Q E_rf(x) cos(Omega t) + Q E_dc(x) + Q E_ext``
is integrated with a kick-drift-kick scheme.  Fields come from the local
polynomial expansion (pruned to the monomials that matter inside the
allowed region), so a step costs a few microseconds.

Internal units: mm, microseconds, volts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .bem import BasisFieldSet
from .dc import pad_voltages
from .expansion import LocalExpansion
from .pseudo import IonSpecies, RfDrive, pseudo_coefficient
from .saddle import find_rf_null

MIN_STEPS_PER_CYCLE = 50
DAMPING_CYCLES = 50.0
DEFAULT_REACH_MM = 0.5


class TrajectoryError(RuntimeError):
    pass


@njit(cache=True)
def _grad(p, powers, coefs, deg, px, py, pz):
    px[0] = 1.0
    py[0] = 1.0
    pz[0] = 1.0
    for k in range(1, deg + 1):
        px[k] = px[k - 1] * p[0]
        py[k] = py[k - 1] * p[1]
        pz[k] = pz[k - 1] * p[2]
    gx = 0.0
    gy = 0.0
    gz = 0.0
    for n in range(powers.shape[0]):
        m = px[powers[n, 0]] * py[powers[n, 1]] * pz[powers[n, 2]]
        gx += coefs[n, 0] * m
        gy += coefs[n, 1] * m
        gz += coefs[n, 2] * m
    return gx, gy, gz


@njit(cache=True)
def _kdk(x, v, t0, dt, n_steps, stride, center, reach2, qm, omega, ext,
         pw_rf, c_rf, pw_dc, c_dc, deg, damp_steps, damp_factor):
    n_out = n_steps // stride + 1
    xs = np.empty((n_out, 3))
    vs = np.empty((n_out, 3))
    px = np.empty(deg + 1)
    py = np.empty(deg + 1)
    pz = np.empty(deg + 1)
    p = np.empty(3)
    acc = np.empty(3)
    xs[0] = x
    vs[0] = v
    use_dc = pw_dc.shape[0] > 0

    def accel(t):
        for k in range(3):
            p[k] = x[k] - center[k]
        gx, gy, gz = _grad(p, pw_rf, c_rf, deg, px, py, pz)
        c = math.cos(omega * t)
        acc[0] = -qm * gx * c + qm * ext[0]
        acc[1] = -qm * gy * c + qm * ext[1]
        acc[2] = -qm * gz * c + qm * ext[2]
        if use_dc:
            gx, gy, gz = _grad(p, pw_dc, c_dc, deg, px, py, pz)
            acc[0] -= qm * gx
            acc[1] -= qm * gy
            acc[2] -= qm * gz

    accel(t0)
    done = n_steps
    for i in range(n_steps):
        t = t0 + i * dt
        for k in range(3):
            v[k] += 0.5 * dt * acc[k]
            x[k] += dt * v[k]
        accel(t + dt)
        for k in range(3):
            v[k] += 0.5 * dt * acc[k]
        if i < damp_steps:
            for k in range(3):
                v[k] *= damp_factor
        if (i + 1) % stride == 0:
            j = (i + 1) // stride
            xs[j] = x
            vs[j] = v
        r2 = (x[0] - center[0]) ** 2 + (x[1] - center[1]) ** 2 + (x[2] - center[2]) ** 2
        if r2 > reach2:
            done = i + 1
            break
    return xs[: done // stride + 1], vs[: done // stride + 1], done


@dataclass
class TrajectoryRun:
    """Sampled trajectory; ``t`` in us, positions in mm, velocities in mm/us."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    dt_ns: float
    rf_frequency_mhz: float
    escaped: bool = False
    peaks_khz: dict = field(default_factory=dict)
    micromotion_um: float | None = None

    @property
    def duration_us(self) -> float:
        return float(self.t[-1] - self.t[0])

    @property
    def rf_cycles(self) -> float:
        return self.duration_us * self.rf_frequency_mhz


class FieldModel:
    """RF and DC fields of a trap around its null, ready for the integrator."""

    def __init__(self, basis: BasisFieldSet, drive: RfDrive, ion: IonSpecies | None = None,
                 dc_voltages: dict | None = None, reach: float = DEFAULT_REACH_MM,
                 degree: int = 24, center: float | None = None):
        self.drive = drive
        self.ion = ion or IonSpecies()
        if center is None:
            center = find_rf_null(basis, drive, self.ion, check_field=False).z_saddle
        self.center = np.array([0.0, 0.0, center])
        self.reach = float(reach)
        self.expansion = LocalExpansion(basis, center, degree=degree, radius=max(reach, 0.6))
        self.pw_rf, self.c_rf = self.expansion.sparse_terms(drive.voltages(), reach)
        self.set_dc(dc_voltages)

    def set_dc(self, dc_voltages: dict | None):
        if dc_voltages:
            self.pw_dc, self.c_dc = self.expansion.sparse_terms(dc_voltages, self.reach)
        else:
            self.pw_dc = np.zeros((0, 3), dtype=np.int64)
            self.c_dc = np.zeros((0, 3))

    @property
    def charge_to_mass(self) -> float:
        """Acceleration [mm/us^2] per unit gradient [V/mm]."""
        return self.ion.charge * 1.602176634e-19 / self.ion.mass_kg * 1e-6

    def rf_gradient(self, points) -> np.ndarray:
        """RF amplitude gradient [V/mm] at points [mm] from the pruned terms."""
        p = np.atleast_2d(np.asarray(points, dtype=float)) - self.center
        k = np.arange(self.expansion.degree + 1)
        px, py, pz = (p[:, i : i + 1] ** k for i in range(3))
        w = self.pw_rf
        mono = px[:, w[:, 0]] * py[:, w[:, 1]] * pz[:, w[:, 2]]
        return mono @ self.c_rf

    def pseudopotential(self, points) -> np.ndarray:
        """Pseudopotential [eV] at points [mm]."""
        g = self.rf_gradient(points)
        return pseudo_coefficient(self.drive, self.ion) * 1e6 * np.sum(g * g, axis=1)


def integrate(
    fields: FieldModel,
    x0,
    v0=(0.0, 0.0, 0.0),
    dt_ns: float | None = None,
    duration_us: float = 100.0,
    sample_every: int = 1,
    external_field=(0.0, 0.0, 0.0),
    damping_us: float = 0.0,
    damping_tau_us: float | None = None,
) -> TrajectoryRun:
    """Integrate from ``x0`` [mm] with velocity ``v0`` [mm/us].

    ``dt_ns`` defaults to 1/100 of the RF period and may not exceed 1/50.
    ``external_field`` is a uniform field [V/mm] added to the trap fields.
    For the first ``damping_us`` the velocity decays with time constant
    ``damping_tau_us`` (default 50 RF periods).
    """
    t_rf = 1.0 / fields.drive.frequency_mhz  # us
    if dt_ns is None:
        dt_ns = 1e3 * t_rf / 100.0
    dt = dt_ns * 1e-3
    if not 0 < dt <= t_rf / MIN_STEPS_PER_CYCLE * (1 + 1e-12):
        raise ValueError(f"time step {dt_ns} ns exceeds 1/{MIN_STEPS_PER_CYCLE} of the RF period")
    n_steps = int(round(duration_us / dt))
    if n_steps < 1:
        raise ValueError("duration shorter than one time step")
    tau = DAMPING_CYCLES * t_rf if damping_tau_us is None else damping_tau_us
    damp_steps = int(round(damping_us / dt)) if damping_us > 0 else 0
    damp_factor = math.exp(-dt / tau) if damp_steps else 1.0
    x = np.array(x0, dtype=float)
    v = np.array(v0, dtype=float)
    if np.linalg.norm(x - fields.center) > fields.reach:
        raise TrajectoryError("initial position outside the field region")
    deg = fields.expansion.degree
    xs, vs, done = _kdk(
        x, v, 0.0, dt, n_steps, int(sample_every), fields.center, fields.reach**2,
        fields.charge_to_mass, fields.drive.omega * 1e-6, np.asarray(external_field, dtype=float),
        fields.pw_rf, fields.c_rf, fields.pw_dc, fields.c_dc, deg, damp_steps, damp_factor,
    )
    t = np.arange(len(xs)) * dt * sample_every
    return TrajectoryRun(t=t, x=xs, v=vs, dt_ns=dt_ns, rf_frequency_mhz=fields.drive.frequency_mhz,
                         escaped=done < n_steps)


def _whole_cycles(run: TrajectoryRun, min_cycles: float, start_us: float = 0.0):
    t_rf = 1.0 / run.rf_frequency_mhz
    sel = run.t >= start_us - 1e-12
    t = run.t[sel]
    if t.size < 2 or (t[-1] - t[0]) / t_rf < min_cycles - 1e-9:
        raise ValueError(f"run covers fewer than {min_cycles} RF cycles")
    step = t[1] - t[0]
    per = t_rf / step
    n_cyc = int((t[-1] - t[0]) / t_rf + 1e-9)
    n = int(round(n_cyc * per))
    return np.flatnonzero(sel)[:n]


def micromotion_amplitude(run: TrajectoryRun, start_us: float = 0.0) -> float:
    """Amplitude [um] of the position component at the RF frequency.

    Quadrature demodulation over a whole number of RF cycles (at least 100).
    """
    idx = _whole_cycles(run, 100, start_us)
    t = run.t[idx]
    x = run.x[idx] - run.x[idx].mean(axis=0)
    ph = np.exp(-2j * np.pi * run.rf_frequency_mhz * t)
    a = 2.0 * np.abs(ph @ x) / len(t)
    amp = float(np.linalg.norm(a)) * 1e3
    run.micromotion_um = amp
    return amp


def spectrum(run: TrajectoryRun, axis: int = 0, start_us: float = 0.0, pad: int = 8):
    """Windowed amplitude spectrum of one coordinate: ``(f [kHz], magnitude [um])``."""
    from scipy.signal.windows import blackmanharris

    sel = run.t >= start_us - 1e-12
    y = run.x[sel, axis] * 1e3
    y = y - y.mean()
    w = blackmanharris(len(y))
    n = pad * len(y)
    spec = np.abs(np.fft.rfft(y * w, n)) * 2.0 / w.sum()
    dt_us = run.t[1] - run.t[0]
    f = np.fft.rfftfreq(n, dt_us) * 1e3
    return f, spec


def peak_frequency(f, mag, f_lo: float = 0.0, f_hi: float | None = None) -> float:
    """Strongest peak [kHz] in ``[f_lo, f_hi]`` refined by a parabola through log magnitudes."""
    sel = (f >= f_lo) & (f <= (f[-1] if f_hi is None else f_hi))
    idx = np.flatnonzero(sel)
    k = idx[np.argmax(mag[idx])]
    if k == 0 or k == len(f) - 1:
        return float(f[k])
    a, b, c = np.log(mag[k - 1 : k + 2] + 1e-300)
    denom = a - 2 * b + c
    shift = 0.5 * (a - c) / denom if denom != 0 else 0.0
    return float(f[k] + shift * (f[1] - f[0]))


def secular_frequencies(run: TrajectoryRun, start_us: float = 0.0, min_amplitude_um: float = 1e-3) -> dict:
    """Dominant low-frequency peak [kHz] of each coordinate, below half the RF frequency.

    Axes whose strongest line is weaker than ``min_amplitude_um`` carry no
    secular motion worth resolving and are left out.
    """
    out = {}
    for i, name in enumerate("xyz"):
        f, mag = spectrum(run, i, start_us)
        lo, hi = 0.5 * (f[1] - f[0]) * 8, 0.5e3 * run.rf_frequency_mhz
        band = (f >= lo) & (f <= hi)
        if mag[band].max() < min_amplitude_um:
            continue
        out[name] = peak_frequency(f, mag, lo, hi)
    run.peaks_khz = out
    return out


def secular_energy_drift(run: TrajectoryRun, fields: FieldModel) -> float:
    """Relative change of the cycle-averaged energy between the first and last tenth of the run.

    Energy is kinetic energy of the cycle-averaged velocity plus the
    pseudopotential at the cycle-averaged position (no DC or external field).
    """
    t_rf = 1.0 / run.rf_frequency_mhz
    per = int(round(t_rf / (run.t[1] - run.t[0])))
    n_cyc = len(run.t) // per
    if n_cyc < 20:
        raise ValueError("run too short for an energy drift estimate")
    xb = run.x[: n_cyc * per].reshape(n_cyc, per, 3).mean(axis=1)
    vb = run.v[: n_cyc * per].reshape(n_cyc, per, 3).mean(axis=1)
    m = fields.ion.mass_kg
    kin = 0.5 * m * np.sum((vb * 1e3) ** 2, axis=1) / 1.602176634e-19  # eV
    energy = kin + fields.pseudopotential(xb)
    k = max(n_cyc // 10, 1)
    e0, e1 = energy[:k].mean(), energy[-k:].mean()
    return float(abs(e1 - e0) / abs(e0))


def verify_dc_displacement(
    basis: BasisFieldSet,
    drive: RfDrive,
    u,
    ion: IonSpecies | None = None,
    fields: FieldModel | None = None,
    settle_us: float | None = None,
    average_cycles: int = 200,
    dt_ns: float | None = None,
) -> np.ndarray:
    """Equilibrium shift [um] produced by pair voltages ``u`` [V], from damped dynamics.

    The ion starts at the RF null, is damped for ``settle_us`` (default
    1500 RF periods), then runs free for ``average_cycles`` RF periods
    over which its position is averaged.
    """
    ion = ion or IonSpecies()
    if fields is None:
        fields = FieldModel(basis, drive, ion)
    rep = find_rf_null(basis, drive, ion, check_field=False)
    if not rep.trapping:
        raise TrajectoryError("RF configuration does not trap")
    fields.set_dc(pad_voltages(u, {}))
    t_rf = 1.0 / drive.frequency_mhz
    settle = 1500 * t_rf if settle_us is None else settle_us
    total = settle + average_cycles * t_rf
    run = integrate(fields, fields.center, dt_ns=dt_ns, duration_us=total, damping_us=settle)
    fields.set_dc(None)
    if run.escaped:
        raise TrajectoryError("ion escaped while settling")
    idx = _whole_cycles(run, average_cycles, start_us=settle)
    return (run.x[idx].mean(axis=0) - fields.center) * 1e3
