"""RF null, secular frequencies and well depth for the reference design.

Run from any directory; the basis solve is cached under ./.mirrortrap-cache.
"""

from mirrortrap.pseudo import closed_form_depth, fit_secular, focus_to_gap_edge
from mirrortrap.session import Session

s = Session()
rep = s.saddle
print(f"RF null       z = {rep.z_saddle:.5f} mm  (focus at {s.layout.focus} mm)")
print(f"field at null   = {rep.residual_field:.2e} V/m")
for axis in ("x", "z"):
    fit, f = fit_secular(s.basis, s.drive, s.ion, axis, center_z=rep.z_saddle)
    note = "  (anharmonic over the window)" if fit.flagged else ""
    print(f"{axis}: a_pond = {fit.a_pond:.4f} eV/mm^2, f = {f:.2f} kHz{note}")
r0 = focus_to_gap_edge(s.layout)
print(f"closed-form depth with V3 over r0 = {r0:.3f} mm: {closed_form_depth(s.ion, 541.0, r0, 20.0):.2f} eV")
