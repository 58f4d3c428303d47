"""Command-line front end.

Exit status: 0 success, 1 a computation or check failed, 2 invalid
configuration or inputs outside the validity ranges, 3 field-solver failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time

import numpy as np

from . import __version__
from .bem import DomainError, SolverError
from .config import ConfigError, load_config
from .geometry import LayoutError
from .pseudo import RangeError

log = logging.getLogger("mirrortrap")

COMMANDS = ("solve", "saddle", "secular", "sensitivity", "align", "dc", "optics", "trajectory", "paper-check")


class CheckFailed(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# subcommands; each takes (session, run_dir) and returns nothing or raises
# ---------------------------------------------------------------------------

def cmd_solve(s, run):
    from .bem import boundary_residual

    t0 = time.perf_counter()
    basis = s.basis
    run.extra["solve_seconds"] = round(time.perf_counter() - t0, 3)
    run.extra["cache_hit"] = bool(s.cache_hit)
    res = basis.residual or boundary_residual(basis)
    rows = [
        ("panels", "1", len(basis.mesh.ta)),
        ("max_mode", "1", basis.resolution.max_mode),
        ("edge_size", "mm", basis.resolution.edge_size),
        ("max_size", "mm", basis.resolution.max_size),
        ("far_size", "mm", basis.resolution.far_size),
        ("residual_electrode_max", "V/V", res["electrode_max"]),
        ("residual_max_abs", "V/V", res["max_abs"]),
        ("basis_key", "", basis.key),
    ]
    run.write_csv("basis_summary.csv", ("quantity", "unit", "value"), rows)
    z = np.linspace(0.5, 3.5, 61)
    prof = basis.axis_profile(z, 0)[0]
    from .geometry import ELECTRODES

    header = ["z_mm"] + [f"phi_{e}_V_per_V" for e in ELECTRODES]
    run.write_csv("axis_potential.csv", header, [(zi, *p) for zi, p in zip(z, prof)])
    print(f"basis: {len(basis.mesh.ta)} panels, residual {res['electrode_max']:.2e} V/V")


def cmd_saddle(s, run):
    from .pseudo import secular_frequency_khz

    rows = []
    for label, rep in (("operating", s.saddle), ("reference", s.reference_saddle)):
        rows += [
            (label, "z_saddle", "mm", rep.z_saddle),
            (label, "residual_field", "V/m", rep.residual_field),
            (label, "curvature_radial", "eV/mm^2", rep.curvature_radial),
            (label, "curvature_axial", "eV/mm^2", rep.curvature_axial),
            (label, "f_r_local", "kHz", secular_frequency_khz(rep.curvature_radial, s.ion)),
            (label, "f_z_local", "kHz", secular_frequency_khz(rep.curvature_axial, s.ion)),
        ]
    run.write_csv("saddle.csv", ("drive", "quantity", "unit", "value"), rows)
    print(f"RF null at z = {s.saddle.z_saddle:.5f} mm (residual field {s.saddle.residual_field:.2e} V/m)")


def cmd_secular(s, run):
    from .pseudo import closed_form_depth, fit_secular, focus_to_gap_edge

    z0 = s.saddle.z_saddle
    rows = []
    for axis in ("x", "y", "z"):
        fit, f = fit_secular(s.basis, s.drive, s.ion, axis, center_z=z0)
        rows.append((axis, fit.window_um[0], fit.window_um[1], fit.center_mm, fit.a_pond,
                     fit.residual_rms, fit.edge_value, f, fit.flagged))
        model = fit.a_pond * (fit.samples[:, 0] * 1e-3) ** 2
        run.write_csv(f"profile_{axis}.csv", ("offset_um", "pseudo_eV", "quadratic_eV"),
                      [(t, p, m) for (t, p), m in zip(fit.samples, model)])
        flag = "  [flagged: residual above 2% of edge value]" if fit.flagged else ""
        print(f"{axis}: a_pond = {fit.a_pond:.5f} eV/mm^2, f = {f:.2f} kHz{flag}")
    run.write_csv("secular.csv", ("axis", "window_lo_um", "window_hi_um", "center_mm", "a_pond_eV_per_mm2",
                                  "residual_rms_eV", "edge_value_eV", "frequency_kHz", "flagged"), rows)
    r0 = focus_to_gap_edge(s.layout)
    rows = [(f"V{i}", v, r0, closed_form_depth(s.ion, v, r0, s.drive.frequency_mhz))
            for i, v in zip((2, 3, 4), s.drive.rf_voltages)]
    run.write_csv("closed_form_depth.csv", ("electrode", "V0_V", "r0_mm", "depth_eV"), rows)


def cmd_sensitivity(s, run):
    from .constants import EDGE_SLOPES, VOLTAGE_SLOPES_UM_PER_V
    from .saddle import SensitivityModel, find_rf_null, predict_saddle, solve_basis, voltage_sensitivity

    step = float(s.config.value("sensitivity", "voltage_step_v"))
    n = int(s.config.value("sensitivity", "sweep_points"))
    published = SensitivityModel()
    rows, sweep = [], []
    slopes = {}
    for i in (2, 3, 4):
        k = voltage_sensitivity(s.basis, s.reference_drive, i, step)
        slopes[f"V{i}"] = k
        rows.append((f"V{i}", k, VOLTAGE_SLOPES_UM_PER_V[f"V{i}"]))
    run.write_csv("voltage_slopes.csv", ("electrode", "slope_um_per_V", "quoted_um_per_V"), rows)
    z_ref = s.reference_saddle.z_saddle
    for i in (2, 3, 4):
        key = f"V{i}"
        lo, hi = published.voltage_ranges[key]
        for v in np.linspace(lo, hi, n):
            d = s.reference_drive.shifted(**{key: v - s.reference_drive.voltages()[key]})
            z = find_rf_null(s.basis, d, s.ion, check_field=False).z_saddle
            z_lin = predict_saddle(published, {key: v})
            z_cal = z_ref + 1e-3 * slopes[key] * (v - s.reference_drive.voltages()[key])
            sweep.append((key, v, z, z_lin, z_cal))
    run.write_csv("voltage_sweep.csv", ("electrode", "voltage_V", "z_solver_mm", "z_linear_quoted_mm",
                                        "z_linear_solver_mm"), sweep)
    edges = list(s.config.value("sensitivity", "edges"))
    m = int(s.config.value("sensitivity", "edge_sweep_points"))
    rows, sweep = [], []
    for e in edges:
        k = s.edge_slope(e)
        rows.append((e, k, EDGE_SLOPES[e]))
        print(f"edge {e}: {k:+.4f} um/um (quoted {EDGE_SLOPES[e]:+.4f})")
        if m > 0:
            lo, hi = published.edge_ranges[e]
            for x in np.linspace(lo, hi, m):
                lay = s.layout.with_edge(e, float(x))
                b = solve_basis(lay, s.axisym_resolution, template=s.template, check_residual=False)
                z = find_rf_null(b, s.reference_drive, s.ion, check_field=False).z_saddle
                sweep.append((e, x, z, z_ref + k * (x - s.layout.edges[e])))
    run.write_csv("edge_slopes.csv", ("edge", "slope_um_per_um", "quoted_um_per_um"), rows)
    if sweep:
        run.write_csv("edge_sweep.csv", ("edge", "edge_mm", "z_solver_mm", "z_linear_solver_mm"), sweep)
    for key, k in slopes.items():
        print(f"{key}: {k:+.4f} um/V (quoted {VOLTAGE_SLOPES_UM_PER_V[key]:+.4f})")


def cmd_align(s, run):
    from .alignment import AlignmentProblem, InfeasibleAlignment, solve_alignment, verify_alignment
    from .pseudo import secular_frequency_khz
    from .saddle import SensitivityModel

    verify = bool(s.config.value("alignment", "verify"))
    scenarios = s.config.alignment_scenarios()
    if bool(s.config.value("alignment", "calibrate")) or verify:
        edges = sorted({e for sc in scenarios for e in sc["deviations_um"]})
        model = s.calibrated_model(edges)
    else:
        model = SensitivityModel()
    rows, failed = [], []
    for sc in scenarios:
        prob = AlignmentProblem(model, dict(sc["deviations_um"]), mode=sc["mode"], electrode=sc["electrode"],
                                weights=sc["weights"], extrapolate=sc["extrapolate"])
        try:
            sol = solve_alignment(prob)
        except InfeasibleAlignment as exc:
            sol = exc.solution
            failed.append(f"{sc['name']}: {exc}")
        f_r = f_z = res = None
        if verify and sol.within_range:
            res, rep = verify_alignment(s.layout, prob.deviations_um, sol, model.z0, s.axisym_resolution,
                                        s.template, s.drive.frequency_mhz)
            f_r = secular_frequency_khz(rep.curvature_radial, s.ion)
            f_z = secular_frequency_khz(rep.curvature_axial, s.ion)
        rows.append((sc["name"], sc["mode"], *sol.delta_v, *(sol.voltages[k] for k in ("V2", "V3", "V4")),
                     sol.structural_shift_um, sol.predicted_residual_um, sol.within_range, res, f_r, f_z))
        print(f"{sc['name']}: dV = ({sol.delta_v[0]:+.4f}, {sol.delta_v[1]:+.4f}, {sol.delta_v[2]:+.4f}) V"
              + ("" if sol.within_range else "  [outside voltage windows]"))
    run.write_csv("alignment.csv", ("scenario", "mode", "dV2_V", "dV3_V", "dV4_V", "V2_V", "V3_V", "V4_V",
                                    "structural_shift_um", "predicted_residual_um", "within_range",
                                    "verified_residual_um", "f_r_kHz", "f_z_kHz"), rows)
    run.write_csv("model.csv", ("quantity", "unit", "value"),
                  [("z0", "mm", model.z0)] + [(f"k_{k}", "um/V", v) for k, v in model.voltage_slopes.items()]
                  + [(f"k_{k}", "um/um", v) for k, v in model.edge_slopes.items()])
    if failed:
        raise CheckFailed("; ".join(failed))


def cmd_dc(s, run):
    from .constants import DC_SLOPES_UM_PER_V
    from .dc import (CompensationMatrix, direction_error_deg, equilibrium, pad_voltages,
                     simulate_compensation_matrix, voltages_for_displacement)

    m = simulate_compensation_matrix(s.basis, s.drive, s.ion, float(s.config.value("dc", "test_voltage_v")))
    cc = m.cross_coupling()
    rows = [(f"U{j + 1}", *m.matrix[:, j], DC_SLOPES_UM_PER_V[j], cc[:, j].max()) for j in range(3)]
    run.write_csv("compensation_matrix.csv", ("pattern", "dx_um_per_V", "dy_um_per_V", "dz_um_per_V",
                                              "quoted_slope_um_per_V", "max_cross_coupling_rel"), rows)
    offs = s.config.value("dc", "static_offsets_v")
    u = np.asarray(s.config.value("dc", "pair_voltages_v"), dtype=float)
    pads = pad_voltages(u, {1: float(offs.get("V1", 0.0)), 5: float(offs.get("V5", 0.0))})
    run.write_csv("pads.csv", ("pad", "voltage_V"), list(pads.items()))
    target = np.asarray(s.config.value("dc", "target_displacement_um"), dtype=float)
    u_t = voltages_for_displacement(CompensationMatrix(), target)
    x0 = equilibrium(s.basis, s.drive, s.ion, pad_voltages([0, 0, 0], {}))
    x1 = equilibrium(s.basis, s.drive, s.ion, pad_voltages(u_t, {}))
    d = (x1 - x0) * 1e3
    run.write_csv("test_vector.csv", ("component", "target_um", "U_V", "simulated_um"),
                  [(c, t, uu, dd) for c, t, uu, dd in zip("xyz", target, u_t, d)])
    ang = direction_error_deg(d, target)
    for j in range(3):
        print(f"U{j + 1}: slope {m.matrix[j, j]:+.1f} um/V (quoted {DC_SLOPES_UM_PER_V[j]:+.0f})")
    print(f"test vector direction error {ang:.2f} deg")


def cmd_optics(s, run):
    from .optics import optics_report
    from .reports import aligned_table

    o = s.config
    rep = optics_report(
        s.layout.spec,
        reflectivity=float(o.value("optics", "reflectivity")),
        fiber=float(o.value("optics", "fiber_coupling")),
        transmission=float(o.value("optics", "transmission")),
        beam=o.beam(),
        clearance_mm=o.clearance_mm(),
        gap_width_um=float(o.value("optics", "gap_width_um")),
        base_rate_hz=float(o.value("optics", "base_rate_hz")),
        baseline_efficiency=float(o.value("optics", "baseline_efficiency")),
        p_omega=o.value("optics", "p_omega"),
    )
    rows = rep.rows()
    run.write_csv("optics.csv", ("quantity", "unit", "value"), rows)
    text = aligned_table(("quantity", "unit", "value"), rows)
    run.write_text("optics.txt", text)
    print(text, end="")


def cmd_trajectory(s, run):
    from .dynamics import (FieldModel, integrate, micromotion_amplitude, secular_energy_drift,
                           secular_frequencies, spectrum)

    fields = FieldModel(s.basis, s.drive, s.ion, reach=float(s.config.value("trajectory", "reach_mm")))
    rows = []
    f_rf = s.drive.frequency_mhz * 1e3
    for r in s.config.trajectory_runs():
        x0 = fields.center + np.asarray(r["start_offset_um"], dtype=float) * 1e-3
        v0 = np.asarray(r["velocity_m_per_s"], dtype=float) * 1e-3  # m/s -> mm/us
        tr = integrate(fields, x0, v0, dt_ns=float(r["dt_ns"]), duration_us=float(r["duration_us"]),
                       sample_every=int(r["sample_every"]))
        name = r["name"]
        run.write_csv(f"trajectory_{name}.csv", ("t_us", "x_um", "y_um", "z_um"),
                      np.column_stack([tr.t, (tr.x - fields.center) * 1e3]))
        try:
            mm = micromotion_amplitude(tr)
        except ValueError:
            mm = None
        peaks = secular_frequencies(tr) if tr.rf_cycles >= 200 else {}
        has_spectrum = tr.rf_cycles >= 200
        try:
            drift = secular_energy_drift(tr, fields)
        except ValueError:
            drift = None
        if has_spectrum:
            specs = [spectrum(tr, i, pad=1) for i in range(3)]
            f = specs[0][0]
            keep = f <= 1.2 * f_rf
            run.write_csv(f"spectrum_{name}.csv", ("f_kHz", "x_um", "y_um", "z_um"),
                          np.column_stack([f[keep]] + [sp[1][keep] for sp in specs]))
        rows.append((name, tr.escaped, tr.duration_us, peaks.get("x"), peaks.get("y"), peaks.get("z"), mm, drift))
        print(f"{name}: escaped={tr.escaped} micromotion={mm if mm is None else round(mm, 6)} um "
              f"peaks={ {k: round(v, 3) for k, v in peaks.items()} } kHz")
    run.write_csv("summary.csv", ("run", "escaped", "duration_us", "f_x_kHz", "f_y_kHz", "f_z_kHz",
                                  "micromotion_um", "secular_energy_drift_rel"), rows)


def cmd_paper_check(s, run):
    from .paper_check import HEADER, all_passed, rows, run_checks
    from .reports import aligned_table

    checks = run_checks(s)
    table = aligned_table(HEADER, rows(checks))
    run.write_csv("paper_check.csv", HEADER, rows(checks))
    run.write_text("paper_check.txt", table)
    print(table, end="")
    bad = [c.quantity for c in checks if c.passed is False]
    if bad:
        raise CheckFailed(f"{len(bad)} value(s) out of tolerance: {', '.join(bad)}")


HANDLERS = {
    "solve": cmd_solve,
    "saddle": cmd_saddle,
    "secular": cmd_secular,
    "sensitivity": cmd_sensitivity,
    "align": cmd_align,
    "dc": cmd_dc,
    "optics": cmd_optics,
    "trajectory": cmd_trajectory,
    "paper-check": cmd_paper_check,
}


def _strict_range_problems(cfg) -> list:
    from .saddle import SensitivityModel

    model = SensitivityModel()
    out = model.range_violations(voltages=cfg.drive().voltages(), edges=cfg.layout().edges)
    for sc in cfg.alignment_scenarios():
        edges = {k: model.reference_edges[k] + 1e-3 * d for k, d in sc["deviations_um"].items()}
        out += [f"scenario {sc['name']}: {m}" for m in model.range_violations(edges=edges)]
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML configuration file (defaults built in)")
    common.add_argument("--out", help="output root; one sub-directory per invocation")
    common.add_argument("--resolution", help="mesh preset: coarse, reference, fine or custom")
    common.add_argument("--strict-ranges", action="store_true",
                        help="reject voltages and edges outside the linear-model validity windows")
    cache = common.add_mutually_exclusive_group()
    cache.add_argument("--use-cache", dest="use_cache", action="store_true", default=True,
                       help="reuse stored basis solutions (default)")
    cache.add_argument("--no-cache", dest="use_cache", action="store_false", help="always re-solve")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(prog="mirrortrap", description=__doc__.splitlines()[0], parents=[common])
    p.add_argument("--version", action="version", version=f"mirrortrap {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    helps = {
        "solve": "solve and cache the basis fields",
        "saddle": "locate the RF null",
        "secular": "fit pseudopotential curvatures and secular frequencies",
        "sensitivity": "null-position slopes against voltages and electrode edges",
        "align": "RF voltage corrections for edge deviations",
        "dc": "DC compensation matrix and pad voltages",
        "optics": "collection efficiency and beam clearance",
        "trajectory": "time-domain ion trajectories",
        "paper-check": "regression against the published design values",
    }
    for name in COMMANDS:
        sub.add_parser(name, help=helps[name], parents=[common])
    return p


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, resolution_override=args.resolution)
        if args.strict_ranges:
            bad = _strict_range_problems(cfg)
            if bad:
                for m in bad:
                    print(f"range error: {m}", file=sys.stderr)
                return 2
    except ConfigError as exc:
        for line in exc.lines():
            print(line, file=sys.stderr)
        return 2

    from .reports import RunDirectory
    from .session import Session

    session = Session(cfg, args.resolution, args.use_cache)
    run = RunDirectory(args.out or cfg.value("output_dir"), args.command, cfg, argv)
    status = 0
    try:
        HANDLERS[args.command](session, run)
    except LayoutError as exc:
        print(f"invalid layout: {exc}", file=sys.stderr)
        status = 2
    except (SolverError, DomainError, MemoryError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        status = 3
    except (CheckFailed, RangeError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        status = 1
    run.finish(status)
    print(f"outputs in {run.path}")
    return status


if __name__ == "__main__":
    sys.exit(main())
