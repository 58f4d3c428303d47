"""RF voltage corrections that bring the null back onto the focus.

The linear model gives one equation ``k . dV = s`` for three unknowns,
where ``s`` is the shift still needed after the edge deviations.  The
default picks the minimum-norm ``dV``; a single electrode or a weighted
norm can be chosen instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .bem import Resolution, solve_basis
from .geometry import ElectrodeLayout
from .pseudo import RangeError, RfDrive
from .saddle import SensitivityModel, find_rf_null, predict_shift

MODES = ("least-norm", "single", "weighted")
RF_KEYS = ("V2", "V3", "V4")


class InfeasibleAlignment(RangeError):
    """Correction leaves the voltage windows; ``solution`` holds the unconstrained answer."""

    def __init__(self, message, solution):
        super().__init__(message)
        self.solution = solution


@dataclass
class AlignmentProblem:
    """Edge deviations [um] to compensate and how to distribute the correction."""

    model: SensitivityModel = field(default_factory=SensitivityModel)
    deviations_um: dict = field(default_factory=dict)
    target_z: float | None = None  # mm, defaults to the model's reference null
    mode: str = "least-norm"
    electrode: int | None = None  # for mode "single"
    weights: tuple | None = None  # for mode "weighted", one per V2..V4
    extrapolate: bool = False

    def edges(self) -> dict:
        ref = self.model.reference_edges
        return {k: ref[k] + 1e-3 * d for k, d in self.deviations_um.items()}


@dataclass
class AlignmentSolution:
    delta_v: np.ndarray  # (dV2, dV3, dV4) [V]
    voltages: dict  # absolute RF amplitudes [V]
    predicted_residual_um: float
    within_range: bool
    structural_shift_um: float
    verified_residual_um: float | None = None
    notes: list = field(default_factory=list)

    def drive(self, frequency_mhz: float | None = None) -> RfDrive:
        kw = {} if frequency_mhz is None else {"frequency_mhz": frequency_mhz}
        return RfDrive(rf_voltages=tuple(self.voltages[k] for k in RF_KEYS), **kw)


def _direction(k, mode, electrode, weights):
    if mode == "least-norm":
        return k / (k @ k)
    if mode == "single":
        if electrode not in (2, 3, 4):
            raise ValueError("single-electrode mode needs electrode 2, 3 or 4")
        i = electrode - 2
        if k[i] == 0:
            raise ValueError(f"slope of V{electrode} is zero; it cannot move the null")
        d = np.zeros(3)
        d[i] = 1.0 / k[i]
        return d
    if mode == "weighted":
        w = np.asarray(weights, dtype=float)
        if w.shape != (3,) or np.any(w <= 0):
            raise ValueError("weighted mode needs three positive weights")
        d = k / w
        return d / (k @ d)
    raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")


def solve_alignment(problem: AlignmentProblem) -> AlignmentSolution:
    """Correction ``dV`` with ``k . dV`` cancelling the structural shift.

    Raises :class:`InfeasibleAlignment` when the corrected amplitudes leave
    the model's voltage windows.
    """
    model = problem.model
    edges = problem.edges()
    if not problem.extrapolate:
        bad = model.range_violations(edges=edges)
        if bad:
            raise RangeError("; ".join(bad))
    dy_st = predict_shift(model, edges=edges, strict=False)
    target = model.z0 if problem.target_z is None else problem.target_z
    need = (target - model.z0) * 1e3 - dy_st
    k = model.k_voltage
    dv = need * _direction(k, problem.mode, problem.electrode, problem.weights)
    volts = {key: model.reference_voltages[key] + d for key, d in zip(RF_KEYS, dv)}
    residual = dy_st + float(k @ dv) - (target - model.z0) * 1e3
    bad = model.range_violations(voltages=volts)
    sol = AlignmentSolution(
        delta_v=dv,
        voltages=volts,
        predicted_residual_um=residual,
        within_range=not bad,
        structural_shift_um=dy_st,
        notes=bad,
    )
    if bad:
        raise InfeasibleAlignment("; ".join(bad), sol)
    return sol


def verify_alignment(
    layout: ElectrodeLayout,
    deviations_um: dict,
    solution: AlignmentSolution,
    target_z: float,
    resolution: Resolution | None = None,
    template=None,
    frequency_mhz: float | None = None,
):
    """Re-solve the deviated layout with the corrected voltages.

    Returns ``(residual_um, report)`` where ``report`` is the
    :class:`~mirrortrap.saddle.SaddleReport` of the corrected trap (its
    curvatures show the side effect on the secular frequencies).
    """
    if not solution.within_range:
        raise RangeError("solution is outside the voltage windows")
    res = replace(resolution or Resolution(), max_mode=0)
    lay = layout.with_edges({k: 1e-3 * d for k, d in deviations_um.items()})
    basis = solve_basis(lay, res, template=template, check_residual=False)
    report = find_rf_null(basis, solution.drive(frequency_mhz), check_field=False)
    residual = abs(report.z_saddle - target_z) * 1e3
    solution.verified_residual_um = residual
    return residual, report
