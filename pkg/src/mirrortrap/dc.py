"""DC compensation with three antisymmetric voltage pairs on the quadrant pads.

Pattern signs are chosen so that a positive pair voltage moves a positive
ion towards negative x, y and z respectively:

* x pair: pads a, d (x > 0) get ``+U1``; pads b, c get ``-U1``.
* y pair: pads a, b (y > 0) get ``+U2``; pads c, d get ``-U2``.
* z pair: segment-5 pads (far end) get ``+U3``; segment-1 pads get ``-U3``.

Each pad carries the signed sum of the three pairs on top of its static
segment offset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bem import BasisFieldSet
from .constants import DC_SLOPES_UM_PER_V, TABLE_I_VOLTAGES
from .expansion import LocalExpansion
from .pseudo import IonSpecies, RfDrive, pseudo_coefficient
from .saddle import find_rf_null

PAD_NAMES = ("1a", "1b", "1c", "1d", "5a", "5b", "5c", "5d")
STATIC_OFFSETS = {1: TABLE_I_VOLTAGES["V1"], 5: TABLE_I_VOLTAGES["V5"]}
TEST_VOLTAGE_V = 1e-3

_X_SIGN = {"a": 1, "b": -1, "c": -1, "d": 1}
_Y_SIGN = {"a": 1, "b": 1, "c": -1, "d": -1}
_Z_SIGN = {1: -1, 5: 1}


class UntrappedError(RuntimeError):
    pass


def pattern(axis: int) -> dict:
    """Unit pad pattern of pair ``axis`` (0, 1, 2 for x, y, z)."""
    out = {}
    for name in PAD_NAMES:
        seg, letter = int(name[0]), name[1]
        out[name] = (_X_SIGN[letter], _Y_SIGN[letter], _Z_SIGN[seg])[axis]
    return out


@dataclass
class CompensationMatrix:
    """Displacement per pair voltage [um/V]; column ``j`` is the response to ``U_j``."""

    matrix: np.ndarray = field(default_factory=lambda: np.diag(DC_SLOPES_UM_PER_V))

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        if self.matrix.shape != (3, 3):
            raise ValueError("compensation matrix must be 3x3")

    @property
    def slopes(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def cross_coupling(self) -> np.ndarray:
        """``|M_ij| / |M_jj|`` per column, zero on the diagonal."""
        d = np.abs(np.diag(self.matrix))
        out = np.abs(self.matrix) / d[None, :]
        np.fill_diagonal(out, 0.0)
        return out


def displacement_from_voltages(matrix: CompensationMatrix, u) -> np.ndarray:
    """Ion displacement ``(dx, dy, dz)`` [um] for pair voltages ``(U1, U2, U3)`` [V]."""
    return matrix.matrix @ np.asarray(u, dtype=float)


def voltages_for_displacement(matrix: CompensationMatrix, target_um) -> np.ndarray:
    """Pair voltages [V] producing ``target_um``; raises ``LinAlgError`` if singular."""
    m = matrix.matrix
    if np.linalg.cond(m) > 1e12:
        raise np.linalg.LinAlgError("compensation matrix is singular")
    return np.linalg.solve(m, np.asarray(target_um, dtype=float))


def pad_voltages(u, static_offsets: dict | None = None) -> dict:
    """Total voltage [V] on each of the eight pads for pair voltages ``u`` [V]."""
    u = np.asarray(u, dtype=float)
    offs = STATIC_OFFSETS if static_offsets is None else static_offsets
    pats = [pattern(a) for a in range(3)]
    return {
        name: offs.get(int(name[0]), 0.0) + sum(u[a] * pats[a][name] for a in range(3))
        for name in PAD_NAMES
    }


def equilibrium(
    basis: BasisFieldSet,
    drive: RfDrive,
    ion: IonSpecies,
    pads: dict,
    expansion: LocalExpansion | None = None,
    tol_mm: float = 1e-12,
) -> np.ndarray:
    """Minimum [mm] of pseudopotential plus DC potential energy near the RF null.

    Newton iteration on the gradient of the total energy, using exact
    derivatives of the local polynomial expansion.
    """
    if expansion is None:
        z0 = find_rf_null(basis, drive, ion, check_field=False).z_saddle
        expansion = LocalExpansion(basis, z0)
    c = pseudo_coefficient(drive, ion) * 1e6  # eV per (V/mm)^2
    q = ion.charge
    rf_v = drive.voltages()
    x = np.array([0.0, 0.0, expansion.center])
    for _ in range(50):
        rf = expansion.derivatives(rf_v, x, 3)
        dc = expansion.derivatives(pads, x, 2)
        grad = 2 * c * rf[2] @ rf[1] + q * dc[1]
        hess = 2 * c * (rf[2] @ rf[2] + np.einsum("k,kab->ab", rf[1], rf[3])) + q * dc[2]
        if np.any(np.linalg.eigvalsh(hess) <= 0):
            raise UntrappedError("total potential has no local minimum near the RF null")
        step = np.linalg.solve(hess, -grad)
        x = x + step
        if np.abs(step).max() < tol_mm:
            return x
    raise UntrappedError("equilibrium search did not converge")


def simulate_compensation_matrix(
    basis: BasisFieldSet,
    drive: RfDrive,
    ion: IonSpecies | None = None,
    test_voltage: float = TEST_VOLTAGE_V,
    include_static: bool = False,
) -> CompensationMatrix:
    """Central-difference displacement slopes of each pair.

    By default the probe runs about the bare RF null with the static
    segment offsets switched off; ``include_static=True`` probes about the
    equilibrium shifted by the offsets instead (their curvature softens the
    radial well, so the slopes grow).
    """
    offsets = None if include_static else {}
    ion = ion or IonSpecies()
    report = find_rf_null(basis, drive, ion, check_field=False)
    if not report.trapping:
        raise UntrappedError("RF configuration does not trap")
    ex = LocalExpansion(basis, report.z_saddle)
    m = np.zeros((3, 3))
    for a in range(3):
        u = np.zeros(3)
        u[a] = test_voltage
        xp = equilibrium(basis, drive, ion, pad_voltages(u, offsets), ex)
        xm = equilibrium(basis, drive, ion, pad_voltages(-u, offsets), ex)
        m[:, a] = (xp - xm) / (2 * test_voltage) * 1e3
    return CompensationMatrix(m)


def direction_error_deg(displacement, target) -> float:
    """Angle [deg] between two 3-vectors."""
    a = np.asarray(displacement, dtype=float)
    b = np.asarray(target, dtype=float)
    cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
