"""Ponderomotive pseudopotential and secular frequencies.

Energies are in eV, curvatures in eV/mm^2.  A curvature ``a`` means the
pseudopotential grows as ``a * d**2`` with displacement ``d``, so the
secular angular frequency is ``sqrt(2 a / m)`` once ``a`` is converted to
J/m^2.  Because ``a`` is already an energy (the charge enters the
pseudopotential as ``Q**2``) no further charge factor appears there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bem import BasisFieldSet
from .constants import AMU, E_CHARGE, ION_CHARGE, ION_MASS_AMU, RF_FREQUENCY_MHZ
from .constants import TABLE_I_VOLTAGES, REFERENCE_VOLTAGES, VOLTAGE_RANGES
from .geometry import ElectrodeLayout, voltage_vector

RADIAL_WINDOW_UM = (-400.0, 400.0)
AXIAL_WINDOW_UM = (-150.0, 150.0)
FIT_POINTS = 81


class RangeError(ValueError):
    pass


@dataclass(frozen=True)
class IonSpecies:
    mass_amu: float = ION_MASS_AMU
    charge: int = ION_CHARGE

    def __post_init__(self):
        if not self.mass_amu > 0:
            raise ValueError("ion mass must be positive")
        if int(self.charge) != self.charge or self.charge < 1:
            raise ValueError("ion charge must be a positive integer number of elementary charges")

    @property
    def mass_kg(self) -> float:
        return self.mass_amu * AMU


@dataclass(frozen=True)
class RfDrive:
    """RF frequency [MHz] and amplitudes (V2, V3, V4) [V] on the three RF segments."""

    frequency_mhz: float = RF_FREQUENCY_MHZ
    rf_voltages: tuple = tuple(TABLE_I_VOLTAGES[k] for k in ("V2", "V3", "V4"))

    def __post_init__(self):
        if not self.frequency_mhz > 0:
            raise ValueError("RF frequency must be positive")
        object.__setattr__(self, "rf_voltages", tuple(float(v) for v in self.rf_voltages))
        if len(self.rf_voltages) != 3:
            raise ValueError("need three RF voltages (V2, V3, V4)")

    @classmethod
    def operating(cls) -> "RfDrive":
        return cls()

    @classmethod
    def reference(cls) -> "RfDrive":
        return cls(rf_voltages=tuple(REFERENCE_VOLTAGES[k] for k in ("V2", "V3", "V4")))

    @property
    def omega(self) -> float:
        """Angular frequency [rad/s]."""
        return 2.0 * math.pi * self.frequency_mhz * 1e6

    def voltages(self) -> dict:
        return dict(zip(("V2", "V3", "V4"), self.rf_voltages))

    def vector(self) -> np.ndarray:
        """RF amplitudes on the 11 basis electrodes (pads at zero)."""
        return voltage_vector(self.voltages())

    def scaled(self, factor: float) -> "RfDrive":
        return RfDrive(self.frequency_mhz, tuple(factor * v for v in self.rf_voltages))

    def shifted(self, **deltas) -> "RfDrive":
        """Copy with ``V2=..., V3=..., V4=...`` added to the amplitudes."""
        v = self.voltages()
        for k, d in deltas.items():
            v[k] += d
        return RfDrive(self.frequency_mhz, tuple(v[k] for k in ("V2", "V3", "V4")))

    def check_ranges(self, ranges=VOLTAGE_RANGES):
        for k, v in self.voltages().items():
            lo, hi = ranges[k]
            if not lo <= v <= hi:
                raise RangeError(f"{k}={v} V outside [{lo}, {hi}] V")


def pseudo_coefficient(drive: RfDrive, ion: IonSpecies) -> float:
    """Factor turning |E|^2 [(V/m)^2] into pseudopotential energy [eV]."""
    q = ion.charge * E_CHARGE
    return q * q / (4.0 * ion.mass_kg * drive.omega**2) / E_CHARGE


def pseudo_profile(basis: BasisFieldSet, drive: RfDrive, ion: IonSpecies, points) -> np.ndarray:
    """Pseudopotential [eV] at an array of points [mm]."""
    _, grad = basis.evaluate(np.atleast_2d(points))
    e_field = 1e3 * np.einsum("pec,e->pc", grad, drive.vector())
    return pseudo_coefficient(drive, ion) * np.sum(e_field**2, axis=1)


def pseudo_at(basis: BasisFieldSet, drive: RfDrive, ion: IonSpecies, point) -> float:
    """Pseudopotential [eV] at a single point [mm]."""
    return float(pseudo_profile(basis, drive, ion, np.asarray(point, dtype=float)[None, :])[0])


def closed_form_depth(ion: IonSpecies, v0: float, r0_mm: float, frequency_mhz: float) -> float:
    """Textbook well-depth estimate ``Q^2 V0^2 / (4 m r0^2 Omega^2)`` [eV]."""
    if not v0 >= 0 or not r0_mm > 0 or not frequency_mhz > 0:
        raise ValueError("need V0 >= 0, r0 > 0 and a positive frequency")
    omega = 2.0 * math.pi * frequency_mhz * 1e6
    q = ion.charge * E_CHARGE
    r0 = r0_mm * 1e-3
    return q * q * v0**2 / (4.0 * ion.mass_kg * r0**2 * omega**2) / E_CHARGE


def focus_to_gap_edge(layout: ElectrodeLayout) -> float:
    """Distance [mm] from the focus to the nearer RF edge of the gap holding it.

    On a paraboloid the distance from the focus to the surface point at
    height ``z`` is ``z + f``.
    """
    f = layout.spec.focal_length
    below = max(s.z_upper for s in layout.segments if s.z_upper <= f)
    return below + f


def secular_frequency_khz(a_pond: float, ion: IonSpecies) -> float:
    """Secular frequency [kHz] for an energy curvature [eV/mm^2]."""
    if a_pond <= 0:
        return float("nan")
    k = 2.0 * a_pond * E_CHARGE * 1e6
    return math.sqrt(k / ion.mass_kg) / (2.0 * math.pi) / 1e3


def curvature_for_frequency(freq_khz: float, ion: IonSpecies) -> float:
    """Inverse of :func:`secular_frequency_khz` [eV/mm^2]."""
    w = 2.0 * math.pi * freq_khz * 1e3
    return 0.5 * ion.mass_kg * w * w / (E_CHARGE * 1e6)


@dataclass
class QuadraticFit:
    """Least-squares parabola of the pseudopotential along one axis."""

    axis: str
    center_mm: float
    window_um: tuple
    a_pond: float  # eV/mm^2
    residual_rms: float  # eV
    edge_value: float  # eV, mean of the two window ends
    untrapped: bool = False
    flagged: bool = False
    samples: np.ndarray = field(default=None, repr=False)

    @property
    def within_tolerance(self) -> bool:
        return self.residual_rms <= 0.02 * abs(self.edge_value)


def fit_secular(
    basis: BasisFieldSet,
    drive: RfDrive,
    ion: IonSpecies,
    axis: str,
    window=None,
    center_z: float | None = None,
    n_points: int = FIT_POINTS,
):
    """Fit ``a_pond`` along ``axis`` ('x', 'y' or 'z') and return ``(fit, f_kHz)``.

    ``window`` is a pair of offsets [um] from the RF null and must be
    symmetric; defaults are +-400 um radially and +-150 um axially.
    ``f_kHz`` is ``nan`` for an untrapped axis (negative curvature).
    """
    if axis not in ("x", "y", "z"):
        raise ValueError("axis must be 'x', 'y' or 'z'")
    if window is None:
        window = AXIAL_WINDOW_UM if axis == "z" else RADIAL_WINDOW_UM
    lo, hi = (float(w) for w in window)
    if not math.isclose(lo, -hi, abs_tol=1e-9) or hi <= 0:
        raise ValueError(f"fit window {window} um is not symmetric about the null")
    if center_z is None:
        from .saddle import find_rf_null

        center_z = find_rf_null(basis, drive).z_saddle
    t = np.linspace(lo, hi, n_points) * 1e-3
    pts = np.zeros((n_points, 3))
    pts[:, 2] = center_z
    pts[:, "xyz".index(axis)] += t
    psi = pseudo_profile(basis, drive, ion, pts)
    coef = np.polynomial.polynomial.polyfit(t, psi, 2)
    resid = psi - np.polynomial.polynomial.polyval(t, coef)
    rms = float(np.sqrt(np.mean(resid**2)))
    edge = 0.5 * (psi[0] + psi[-1])
    a = float(coef[2])
    fit = QuadraticFit(
        axis=axis,
        center_mm=float(center_z),
        window_um=(lo, hi),
        a_pond=a,
        residual_rms=rms,
        edge_value=float(edge),
        untrapped=a <= 0,
        samples=np.column_stack([t * 1e3, psi]),
    )
    fit.flagged = fit.untrapped or not fit.within_tolerance
    return fit, secular_frequency_khz(a, ion)
