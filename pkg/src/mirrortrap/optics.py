"""Collection geometry of the mirror, laser clearance through the gap, and the efficiency chain.

Angles are degrees at the interface and radians internally.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .geometry import ParaboloidSpec

DEFAULT_REFLECTIVITY = 0.90
DEFAULT_FIBER_COUPLING = 0.90
DEFAULT_TRANSMISSION = 0.95
BASELINE_EFFICIENCY = 0.10
BASELINE_RATE_HZ = 183.0

# Distance from the ion to the electrode gap the beam passes through [mm].
CLEARANCE_PRESETS = {"quoted": 2.1, "radial_wall": 4.2}
GAP_WIDTH_UM = 256.0


def deflection_angle(alpha_deg: float) -> float:
    """Reflection angle [deg] of a ray from the focus hitting a surface tangent at ``alpha_deg``."""
    if not 0.0 <= alpha_deg < 90.0:
        raise ValueError("tangent angle must lie in [0, 90) degrees")
    return 2.0 * alpha_deg


def theta_max(spec: ParaboloidSpec) -> float:
    """Largest reflection angle [deg] set by the rim of the mirror."""
    return 2.0 * math.degrees(math.atan(spec.rim_radius / (2.0 * spec.focal_length)))


def solid_angle_fraction(theta_deg: float) -> float:
    """Fraction of the full sphere inside a cone of half-angle ``theta_deg``."""
    if not 0.0 <= theta_deg <= 180.0:
        raise ValueError("angle must lie in [0, 180] degrees")
    return 0.5 * (1.0 - math.cos(math.radians(theta_deg)))


@dataclass(frozen=True)
class BeamSpec:
    """Gaussian beam with wavelength [nm] and waist radius [um]."""

    wavelength_nm: float = 369.0
    waist_um: float = 50.0

    def __post_init__(self):
        if not self.wavelength_nm > 0 or not self.waist_um > 0:
            raise ValueError("wavelength and waist must be positive")

    @property
    def rayleigh_mm(self) -> float:
        w0 = self.waist_um * 1e-6
        return math.pi * w0 * w0 / (self.wavelength_nm * 1e-9) * 1e3

    def radius_um(self, distance_mm: float) -> float:
        return self.waist_um * math.sqrt(1.0 + (distance_mm / self.rayleigh_mm) ** 2)


def beam_clearance(beam: BeamSpec, distance_mm: float, gap_width_um: float = GAP_WIDTH_UM):
    """Return ``(z_R [mm], beam diameter at the gap [um], passes)``."""
    if distance_mm < 0 or not gap_width_um > 0:
        raise ValueError("distance must be non-negative and the gap width positive")
    diameter = 2.0 * beam.radius_um(distance_mm)
    return beam.rayleigh_mm, diameter, diameter < gap_width_um


def efficiency_chain(p_omega: float, reflectivity: float, fiber: float, transmission: float) -> float:
    """Product of the four collection factors, each in [0, 1]."""
    factors = {"P_omega": p_omega, "reflectivity": reflectivity, "fiber": fiber, "transmission": transmission}
    for name, v in factors.items():
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    return p_omega * reflectivity * fiber * transmission


def entanglement_rate(base_rate_hz: float, efficiency: float, baseline_efficiency: float) -> float:
    """Two-photon success rate scaled quadratically with collection efficiency."""
    if not baseline_efficiency > 0:
        raise ValueError("baseline efficiency must be positive")
    return base_rate_hz * (efficiency / baseline_efficiency) ** 2


@dataclass
class OpticsReport:
    theta_max_deg: float
    p_omega: float
    reflectivity: float
    fiber: float
    transmission: float
    total: float
    rate_hz: float
    rayleigh_mm: float
    gap_diameter_um: float
    beam_passes: bool

    def rows(self):
        """``(quantity, unit, value)`` rows for tables."""
        return [
            ("theta_max", "deg", self.theta_max_deg),
            ("P_omega", "1", self.p_omega),
            ("reflectivity", "1", self.reflectivity),
            ("fiber_coupling", "1", self.fiber),
            ("transmission", "1", self.transmission),
            ("total_efficiency", "1", self.total),
            ("entanglement_rate", "Hz", self.rate_hz),
            ("rayleigh_length", "mm", self.rayleigh_mm),
            ("gap_beam_diameter", "um", self.gap_diameter_um),
            ("beam_passes_gap", "bool", bool(self.beam_passes)),
        ]


def optics_report(
    spec: ParaboloidSpec | None = None,
    reflectivity: float = DEFAULT_REFLECTIVITY,
    fiber: float = DEFAULT_FIBER_COUPLING,
    transmission: float = DEFAULT_TRANSMISSION,
    beam: BeamSpec | None = None,
    clearance_mm: float = CLEARANCE_PRESETS["quoted"],
    gap_width_um: float = GAP_WIDTH_UM,
    base_rate_hz: float = BASELINE_RATE_HZ,
    baseline_efficiency: float = BASELINE_EFFICIENCY,
    p_omega: float | None = None,
) -> OpticsReport:
    """Assemble the full optics figures; ``p_omega`` overrides the geometric value."""
    spec = spec or ParaboloidSpec()
    beam = beam or BeamSpec()
    th = theta_max(spec)
    p = solid_angle_fraction(th) if p_omega is None else p_omega
    total = efficiency_chain(p, reflectivity, fiber, transmission)
    z_r, diam, ok = beam_clearance(beam, clearance_mm, gap_width_um)
    return OpticsReport(
        theta_max_deg=th,
        p_omega=p,
        reflectivity=reflectivity,
        fiber=fiber,
        transmission=transmission,
        total=total,
        rate_hz=entanglement_rate(base_rate_hz, total, baseline_efficiency),
        rayleigh_mm=z_r,
        gap_diameter_um=diam,
        beam_passes=ok,
    )
