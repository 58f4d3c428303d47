"""RF null location, its sensitivities and the linear null-position model."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from .bem import BasisFieldSet, Resolution, SolverError, field_at, solve_basis
from .constants import (
    EDGE_RANGES_MM,
    EDGE_SLOPES,
    REFERENCE_EDGES_MM,
    REFERENCE_NULL_MM,
    REFERENCE_VOLTAGES,
    VOLTAGE_RANGES,
    VOLTAGE_SLOPES_UM_PER_V,
)
from .geometry import EDGE_NAMES, ElectrodeLayout
from .pseudo import IonSpecies, RangeError, RfDrive, pseudo_coefficient

log = logging.getLogger(__name__)

SEARCH_INTERVAL_MM = (1.2, 3.0)
NULL_XTOL_MM = 1e-8  # 0.01 nm, well inside the 0.01 um requirement
VOLTAGE_STEP_V = 1.0
EDGE_STEP_UM = 10.0


class NullNotFound(SolverError):
    pass


@dataclass
class SaddleReport:
    """RF null on the axis with local pseudopotential curvatures."""

    z_saddle: float  # mm
    residual_field: float  # V/m
    curvature_radial: float  # eV/mm^2
    curvature_axial: float  # eV/mm^2
    axial_gradient: float = 0.0  # d^2 phi / dz^2 of the RF amplitude [V/mm^2]

    @property
    def trapping(self) -> bool:
        return self.curvature_radial > 0 and self.curvature_axial > 0


def _axial_field(basis, vec, z):
    return -(basis.axis_profile([z], 1)[1, 0] @ vec)


def find_rf_null(
    basis: BasisFieldSet,
    drive: RfDrive,
    ion: IonSpecies | None = None,
    interval=SEARCH_INTERVAL_MM,
    check_field: bool = True,
) -> SaddleReport:
    """Root of the on-axis RF field in ``interval`` [mm].

    Transverse components vanish on the axis because the RF electrodes are
    axisymmetric, so only ``E_z`` is bracketed.
    """
    ion = ion or IonSpecies()
    vec = drive.vector()
    lo, hi = interval
    f_lo, f_hi = _axial_field(basis, vec, lo), _axial_field(basis, vec, hi)
    if not np.isfinite(f_lo * f_hi) or f_lo * f_hi > 0:
        raise NullNotFound(f"no null in range: E_z has no sign change on ({lo}, {hi}) mm")
    z0 = brentq(lambda z: _axial_field(basis, vec, z), lo, hi, xtol=NULL_XTOL_MM, rtol=1e-15)
    g = float(basis.axis_profile([z0], 2)[2, 0] @ vec)
    # phi ~ g/2 (z^2 - rho^2/2) near the null: |E|^2 = g^2 (z^2 + rho^2/4)
    c = pseudo_coefficient(drive, ion) * 1e12  # (V/mm)^2 -> (V/m)^2, then per mm^2
    a_axial = c * g * g * 1e-6
    residual = 0.0
    if check_field:
        residual = float(np.linalg.norm(field_at(basis, drive.voltages(), [0.0, 0.0, z0])))
    return SaddleReport(
        z_saddle=float(z0),
        residual_field=residual,
        curvature_radial=a_axial / 4.0,
        curvature_axial=a_axial,
        axial_gradient=g,
    )


def voltage_sensitivity(
    basis: BasisFieldSet, drive: RfDrive, electrode: int, step: float = VOLTAGE_STEP_V
) -> float:
    """Central-difference slope dz_null/dV_i [um/V] for RF segment ``electrode`` (2, 3 or 4)."""
    if electrode not in (2, 3, 4):
        raise ValueError("voltage sensitivity is defined for RF segments 2, 3, 4")
    key = f"V{electrode}"
    z = []
    for s in (+step, -step):
        try:
            z.append(find_rf_null(basis, drive.shifted(**{key: s}), check_field=False).z_saddle)
        except NullNotFound as exc:
            raise NullNotFound(f"null lost for {key} step {s:+g} V: {exc}") from exc
    return (z[0] - z[1]) / (2.0 * step) * 1e3


def geometry_sensitivity(
    layout: ElectrodeLayout,
    drive: RfDrive,
    edge: str,
    step_um: float = EDGE_STEP_UM,
    resolution: Resolution | None = None,
    template=None,
) -> float:
    """Central-difference slope dz_null/dx_edge [um/um], re-solving the fields per side.

    Both perturbed meshes reuse ``template`` (node fractions of the
    reference mesh) so that panel counts do not change with the step.
    """
    if edge not in EDGE_NAMES:
        raise ValueError(f"unknown edge {edge!r}; choose from {EDGE_NAMES}")
    res = replace(resolution or Resolution(), max_mode=0)
    if template is None:
        from .bem import build_mesh

        template = build_mesh(layout, res).template
    z0 = layout.edges[edge]
    out = []
    for s in (+1, -1):
        lay = layout.with_edge(edge, z0 + s * step_um * 1e-3)
        basis = solve_basis(lay, res, template=template, check_residual=False)
        out.append(find_rf_null(basis, drive, check_field=False).z_saddle)
    return (out[0] - out[1]) / (2.0 * step_um * 1e-3)


# ---------------------------------------------------------------------------
# linear model
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SensitivityModel:
    """Linear null-position model around a reference point.

    Voltage slopes are um/V, edge slopes um/um, positions mm.
    """

    z0: float = REFERENCE_NULL_MM
    reference_voltages: dict = field(
        default_factory=lambda: {k: REFERENCE_VOLTAGES[k] for k in ("V2", "V3", "V4")}
    )
    reference_edges: dict = field(default_factory=lambda: dict(REFERENCE_EDGES_MM))
    voltage_slopes: dict = field(default_factory=lambda: dict(VOLTAGE_SLOPES_UM_PER_V))
    edge_slopes: dict = field(default_factory=lambda: dict(EDGE_SLOPES))
    voltage_ranges: dict = field(default_factory=lambda: dict(VOLTAGE_RANGES))
    edge_ranges: dict = field(default_factory=lambda: dict(EDGE_RANGES_MM))

    @property
    def k_voltage(self) -> np.ndarray:
        return np.array([self.voltage_slopes[k] for k in ("V2", "V3", "V4")])

    def range_violations(self, voltages=None, edges=None) -> list:
        out = []
        for k, v in (voltages or {}).items():
            lo, hi = self.voltage_ranges[k]
            if not lo - 1e-12 <= v <= hi + 1e-12:
                out.append(f"{k}={v:g} V outside [{lo}, {hi}] V")
        for k, x in (edges or {}).items():
            lo, hi = self.edge_ranges[k]
            if not lo - 1e-12 <= x <= hi + 1e-12:
                out.append(f"edge {k}={x:g} mm outside [{lo}, {hi}] mm")
        return out

    @classmethod
    def calibrate(
        cls,
        basis: BasisFieldSet,
        drive: RfDrive | None = None,
        edge_slopes: dict | None = None,
        step: float = VOLTAGE_STEP_V,
    ) -> "SensitivityModel":
        """Model whose reference null and voltage slopes come from the field solver.

        Edge slopes default to the tabulated ones unless given (they need
        one re-solve per edge and side; see :func:`geometry_sensitivity`).
        """
        drive = drive or RfDrive.reference()
        z0 = find_rf_null(basis, drive, check_field=False).z_saddle
        slopes = {f"V{i}": voltage_sensitivity(basis, drive, i, step) for i in (2, 3, 4)}
        return cls(
            z0=z0,
            reference_voltages=drive.voltages(),
            reference_edges=dict(basis.layout.edges),
            voltage_slopes=slopes,
            edge_slopes=dict(edge_slopes or EDGE_SLOPES),
        )


def predict_shift(model: SensitivityModel, voltages=None, edges=None, strict: bool = True) -> float:
    """Predicted null displacement [um] from the reference point."""
    voltages = voltages or {}
    edges = edges or {}
    if strict:
        bad = model.range_violations(voltages, edges)
        if bad:
            raise RangeError("; ".join(bad))
    dv = sum(model.voltage_slopes[k] * (v - model.reference_voltages[k]) for k, v in voltages.items())
    de = sum(model.edge_slopes[k] * (x - model.reference_edges[k]) * 1e3 for k, x in edges.items())
    return dv + de


def predict_saddle(model: SensitivityModel, voltages=None, edges=None, strict: bool = True) -> float:
    """Null position [mm] from the linear model.

    ``voltages`` maps ``"V2".."V4"`` to absolute amplitudes [V]; ``edges``
    maps edge names to absolute heights [mm].  Missing entries sit at the
    reference.
    """
    return model.z0 + 1e-3 * predict_shift(model, voltages, edges, strict)
