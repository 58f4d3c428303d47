"""Least-norm RF corrections that put the null back on the focus, per edge error.

Uses the tabulated linear model; no field solve needed.
"""

from mirrortrap.alignment import AlignmentProblem, InfeasibleAlignment, solve_alignment
from mirrortrap.saddle import SensitivityModel

model = SensitivityModel()
print(f"{'edge':8} {'dev_um':>7} {'shift_um':>9} {'dV2_V':>8} {'dV3_V':>8} {'dV4_V':>8}")
for edge, (lo, hi) in model.edge_ranges.items():
    ref = model.reference_edges[edge]
    # the far end of each validity window
    dev = (hi - ref if abs(hi - ref) > abs(lo - ref) else lo - ref) * 1e3
    try:
        sol = solve_alignment(AlignmentProblem(model, {edge: dev}))
    except InfeasibleAlignment as exc:
        sol = exc.solution
    flag = "" if sol.within_range else "  outside voltage windows"
    print(f"{edge:8} {dev:7.0f} {sol.structural_shift_um:9.3f} "
          + " ".join(f"{v:8.3f}" for v in sol.delta_v) + flag)
