"""DC pair slopes from the field solution and the (1, 2, 3) um test displacement."""

import numpy as np

from mirrortrap.dc import (
    CompensationMatrix,
    direction_error_deg,
    equilibrium,
    pad_voltages,
    simulate_compensation_matrix,
    voltages_for_displacement,
)
from mirrortrap.session import Session

s = Session()
m = simulate_compensation_matrix(s.basis, s.drive, s.ion)
print("slopes [um/V]:", np.round(m.slopes, 1))
target = np.array([1.0, 2.0, 3.0])
for label, matrix in (("tabulated", CompensationMatrix()), ("simulated", m)):
    u = voltages_for_displacement(matrix, target)
    x0 = equilibrium(s.basis, s.drive, s.ion, pad_voltages([0, 0, 0], {}))
    x1 = equilibrium(s.basis, s.drive, s.ion, pad_voltages(u, {}))
    d = (x1 - x0) * 1e3
    print(f"{label:9} U = {np.round(u * 1e3, 3)} mV -> d = {np.round(d, 3)} um, "
          f"direction error {direction_error_deg(d, target):.2f} deg")
