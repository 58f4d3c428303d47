"""YAML run configuration with strict, line-anchored validation.

Every key carries its unit in its name.  Unknown keys, wrong types and
out-of-range values are all reported with the line and column they occur
on, and nothing is computed until the whole file validates.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml

from .bem import Resolution
from .constants import REFERENCE_VOLTAGES, TABLE_I_VOLTAGES
from .geometry import EDGE_NAMES, ElectrodeLayout, LayoutError, ParaboloidSpec, validate_layout
from .optics import CLEARANCE_PRESETS, BeamSpec
from .pseudo import IonSpecies, RfDrive

RESOLUTION_PRESETS = ("coarse", "reference", "fine")
ALIGN_MODES = ("least-norm", "single", "weighted")

_NUM = (int, float)
_OPT_NUM = (int, float, type(None))

# leaf: (types, default); dict: nested section; [dict]: list of records
SCHEMA = {
    "output_dir": ((str,), "runs"),
    "layout": {
        "focal_length_mm": (_NUM, 2.1),
        "aperture_diameter_mm": (_NUM, 31.5),
        "depth_mm": (_NUM, 29.5),
        "pad_gap_mm": (_NUM, 0.04),
        "edges_mm": ((dict,), {}),
    },
    "ion": {
        "mass_amu": (_NUM, 171.0),
        "charge_e": ((int,), 1),
    },
    "rf": {
        "frequency_mhz": (_NUM, 20.0),
        "voltages_v": ((dict,), {k: TABLE_I_VOLTAGES[k] for k in ("V2", "V3", "V4")}),
        "reference_voltages_v": ((dict,), {k: REFERENCE_VOLTAGES[k] for k in ("V2", "V3", "V4")}),
    },
    "dc": {
        "static_offsets_v": ((dict,), {"V1": TABLE_I_VOLTAGES["V1"], "V5": TABLE_I_VOLTAGES["V5"]}),
        "pair_voltages_v": ((list,), [0.0, 0.0, 0.0]),
        "test_voltage_v": (_NUM, 1e-3),
        "target_displacement_um": ((list,), [1.0, 2.0, 3.0]),
    },
    "solver": {
        "resolution": ((str,), "reference"),
        "max_mode": ((int,), 5),
        "edge_size_mm": (_OPT_NUM, None),
        "max_size_mm": (_OPT_NUM, None),
        "far_size_mm": (_OPT_NUM, None),
        "cache_dir": ((str,), ".mirrortrap-cache"),
    },
    "sensitivity": {
        "voltage_step_v": (_NUM, 1.0),
        "edge_step_um": (_NUM, 10.0),
        "edges": ((list,), list(EDGE_NAMES)),
        "sweep_points": ((int,), 9),
        "edge_sweep_points": ((int,), 3),
    },
    "alignment": {
        "verify": ((bool,), False),
        "calibrate": ((bool,), False),
        "scenarios": [
            {
                "name": ((str,), None),
                "deviations_um": ((dict,), {}),
                "mode": ((str,), "least-norm"),
                "electrode": ((int, type(None)), None),
                "weights": ((list, type(None)), None),
                "extrapolate": ((bool,), False),
            }
        ],
    },
    "optics": {
        "reflectivity": (_NUM, 0.90),
        "fiber_coupling": (_NUM, 0.90),
        "transmission": (_NUM, 0.95),
        "p_omega": (_OPT_NUM, None),
        "wavelength_nm": (_NUM, 369.0),
        "waist_um": (_NUM, 50.0),
        "clearance_mm": ((int, float, str), "quoted"),
        "gap_width_um": (_NUM, 256.0),
        "base_rate_hz": (_NUM, 183.0),
        "baseline_efficiency": (_NUM, 0.10),
    },
    "trajectory": {
        "reach_mm": (_NUM, 0.5),
        "runs": [
            {
                "name": ((str,), None),
                "start_offset_um": ((list,), [0.0, 0.0, 0.0]),
                "velocity_m_per_s": ((list,), [0.0, 0.0, 0.0]),
                "dt_ns": (_NUM, 0.5),
                "duration_us": (_NUM, 650.0),
                "sample_every": ((int,), 10),
            }
        ],
    },
}

DEFAULT_ALIGNMENT = [{"name": "edge_2_down_plus_1um", "deviations_um": {"2_down": 1.0}}]
DEFAULT_RUNS = [
    {"name": "null_at_rest", "start_offset_um": [0.0, 0.0, 0.0], "duration_us": 10.0},
    {"name": "radial_100um", "start_offset_um": [100.0, 0.0, 0.0]},
    {"name": "axial_50um", "start_offset_um": [0.0, 0.0, 50.0]},
]
_DEFAULT_RECORDS = {"scenarios": DEFAULT_ALIGNMENT, "runs": DEFAULT_RUNS}


class ConfigError(ValueError):
    """Validation failure; ``problems`` holds ``(line, column, message)`` triples."""

    def __init__(self, problems, path="<config>"):
        self.problems = list(problems)
        self.path = str(path)
        super().__init__("\n".join(self.lines()))

    def lines(self):
        return [f"{self.path}:{ln}:{col}: {msg}" for ln, col, msg in self.problems]


def _mark(node):
    return node.start_mark.line + 1, node.start_mark.column + 1


def _check_leaf(value, types, where, node, problems):
    if isinstance(value, bool) and bool not in types:
        problems.append((*_mark(node), f"{where}: expected {_type_names(types)}, got a boolean"))
        return False
    if not isinstance(value, types):
        problems.append((*_mark(node), f"{where}: expected {_type_names(types)}, got {type(value).__name__}"))
        return False
    return True


def _type_names(types):
    names = {int: "number", float: "number", str: "string", dict: "mapping",
             list: "list", bool: "boolean", type(None): "null"}
    return " or ".join(sorted({names[t] for t in types}))


def _walk(schema, node, data, prefix, problems, out):
    if not isinstance(node, yaml.MappingNode):
        problems.append((*_mark(node), f"{prefix or 'top level'}: expected a mapping"))
        return
    values = {}
    for key_node, val_node in node.value:
        key = key_node.value
        where = f"{prefix}.{key}" if prefix else key
        if key in values:
            problems.append((*_mark(key_node), f"duplicate key '{where}'"))
            continue
        values[key] = True
        if key not in schema:
            allowed = ", ".join(sorted(schema))
            problems.append((*_mark(key_node), f"unknown key '{where}' (allowed: {allowed})"))
            continue
        spec = schema[key]
        value = data[key]
        if isinstance(spec, dict):
            sub = {}
            _walk(spec, val_node, value, where, problems, sub)
            out[key] = sub
        elif isinstance(spec, list):
            if not isinstance(val_node, yaml.SequenceNode):
                problems.append((*_mark(val_node), f"{where}: expected a list"))
                continue
            recs = []
            for i, (item_node, item) in enumerate(zip(val_node.value, value)):
                rec = {}
                _walk(spec[0], item_node, item, f"{where}[{i}]", problems, rec)
                recs.append((rec, item_node))
            out[key] = recs
        else:
            if _check_leaf(value, spec[0], where, val_node, problems):
                out[key] = (value, val_node)


def _fill(schema, given):
    """Merge validated values over defaults; leaves become ``(value, node)``."""
    out = {}
    for key, spec in schema.items():
        if isinstance(spec, dict):
            out[key] = _fill(spec, given.get(key, {}))
        elif isinstance(spec, list):
            recs = given.get(key)
            if recs is None:
                recs = [({k: (v, None) for k, v in copy.deepcopy(r).items()}, None) for r in _DEFAULT_RECORDS[key]]
            out[key] = [(_fill(spec[0], r), n) for r, n in recs]
        else:
            out[key] = given.get(key, (copy.deepcopy(spec[1]), None))
    return out


@dataclass
class WorkbenchConfig:
    """Fully validated run configuration."""

    raw: dict
    source: str = "<defaults>"
    text: str = ""

    # ------------------------------------------------------------------
    def value(self, *path):
        node = self.raw
        for p in path:
            node = node[p]
        return node[0] if isinstance(node, tuple) else node

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.plain(), sort_keys=True).encode()).hexdigest()

    def plain(self) -> dict:
        def strip(x):
            if isinstance(x, tuple):
                return x[0]
            if isinstance(x, dict):
                return {k: strip(v) for k, v in x.items()}
            if isinstance(x, list):
                return [strip(r) for r, _ in x]
            return x

        return strip(self.raw)

    # -- builders -------------------------------------------------------
    def layout(self) -> ElectrodeLayout:
        spec = ParaboloidSpec(
            focal_length=float(self.value("layout", "focal_length_mm")),
            aperture_diameter=float(self.value("layout", "aperture_diameter_mm")),
            depth=float(self.value("layout", "depth_mm")),
        )
        lay = ElectrodeLayout(spec, pad_gap=float(self.value("layout", "pad_gap_mm")))
        for name, z in self.value("layout", "edges_mm").items():
            lay = lay.with_edge(name, float(z))
        return lay

    def ion(self) -> IonSpecies:
        return IonSpecies(float(self.value("ion", "mass_amu")), int(self.value("ion", "charge_e")))

    def drive(self, reference: bool = False) -> RfDrive:
        v = self.value("rf", "reference_voltages_v" if reference else "voltages_v")
        return RfDrive(float(self.value("rf", "frequency_mhz")), tuple(float(v[k]) for k in ("V2", "V3", "V4")))

    def resolution(self, preset: str | None = None) -> Resolution:
        name = preset or self.value("solver", "resolution")
        kw = {"max_mode": int(self.value("solver", "max_mode"))}
        for key, attr in (("edge_size_mm", "edge_size"), ("max_size_mm", "max_size"), ("far_size_mm", "far_size")):
            v = self.value("solver", key)
            if v is not None:
                kw[attr] = float(v)
        if name == "custom":
            return Resolution(**kw)
        return Resolution.preset(name, **kw)

    def beam(self) -> BeamSpec:
        return BeamSpec(float(self.value("optics", "wavelength_nm")), float(self.value("optics", "waist_um")))

    def clearance_mm(self) -> float:
        c = self.value("optics", "clearance_mm")
        return float(CLEARANCE_PRESETS[c]) if isinstance(c, str) else float(c)

    def alignment_scenarios(self) -> list:
        return [{k: v[0] for k, v in r.items()} for r, _ in self.raw["alignment"]["scenarios"]]

    def trajectory_runs(self) -> list:
        return [{k: v[0] for k, v in r.items()} for r, _ in self.raw["trajectory"]["runs"]]


def _semantic_checks(raw, problems, resolution_override=None):
    def at(node):
        return _mark(node) if node is not None else (0, 0)

    def leaf(*path):
        x = raw
        for p in path:
            x = x[p]
        return x

    for path in (("layout", "focal_length_mm"), ("layout", "aperture_diameter_mm"), ("layout", "depth_mm"),
                 ("ion", "mass_amu"), ("rf", "frequency_mhz"), ("optics", "wavelength_nm"),
                 ("optics", "waist_um"), ("optics", "gap_width_um"), ("optics", "baseline_efficiency"),
                 ("trajectory", "reach_mm")):
        v, n = leaf(*path)
        if not v > 0:
            problems.append((*at(n), f"{'.'.join(path)} must be positive"))
    v, n = leaf("ion", "charge_e")
    if v < 1:
        problems.append((*at(n), "ion.charge_e must be at least 1"))
    for path in (("rf", "voltages_v"), ("rf", "reference_voltages_v")):
        v, n = leaf(*path)
        if set(v) != {"V2", "V3", "V4"} or not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in v.values()):
            problems.append((*at(n), f"{'.'.join(path)} needs numeric V2, V3 and V4"))
    v, n = leaf("dc", "static_offsets_v")
    if not set(v) <= {"V1", "V5"} or not all(isinstance(x, _NUM) for x in v.values()):
        problems.append((*at(n), "dc.static_offsets_v accepts numeric V1 and V5 only"))
    for path in (("dc", "pair_voltages_v"), ("dc", "target_displacement_um")):
        v, n = leaf(*path)
        if len(v) != 3 or not all(isinstance(x, _NUM) and not isinstance(x, bool) for x in v):
            problems.append((*at(n), f"{'.'.join(path)} needs three numbers"))
    v, n = leaf("layout", "edges_mm")
    for k, x in v.items():
        if k not in EDGE_NAMES:
            problems.append((*at(n), f"layout.edges_mm: unknown edge '{k}' (allowed: {', '.join(EDGE_NAMES)})"))
        elif not isinstance(x, _NUM) or isinstance(x, bool):
            problems.append((*at(n), f"layout.edges_mm.{k} must be a number"))
    v, n = leaf("solver", "resolution")
    name = resolution_override or v
    if name not in RESOLUTION_PRESETS + ("custom",):
        problems.append((*at(n), f"solver.resolution '{name}' is not one of {', '.join(RESOLUTION_PRESETS + ('custom',))}"))
    v, n = leaf("solver", "max_mode")
    if v < 0:
        problems.append((*at(n), "solver.max_mode must be non-negative"))
    v, n = leaf("sensitivity", "edges")
    bad = [e for e in v if e not in EDGE_NAMES]
    if bad:
        problems.append((*at(n), f"sensitivity.edges: unknown edge(s) {bad}"))
    v, n = leaf("optics", "clearance_mm")
    if isinstance(v, str) and v not in CLEARANCE_PRESETS:
        problems.append((*at(n), f"optics.clearance_mm preset '{v}' is not one of {', '.join(CLEARANCE_PRESETS)}"))
    for key in ("reflectivity", "fiber_coupling", "transmission", "p_omega"):
        v, n = leaf("optics", key)
        if v is not None and not 0 <= v <= 1:
            problems.append((*at(n), f"optics.{key} must lie in [0, 1]"))
    recs = raw["alignment"]["scenarios"]
    for i, (r, node) in enumerate(recs):
        where = f"alignment.scenarios[{i}]"
        if r["name"][0] is None:
            problems.append((*at(node), f"{where}: missing 'name'"))
        mode, mn = r["mode"]
        if mode not in ALIGN_MODES:
            problems.append((*at(mn or node), f"{where}.mode '{mode}' is not one of {', '.join(ALIGN_MODES)}"))
        if mode == "single" and r["electrode"][0] not in (2, 3, 4):
            problems.append((*at(r["electrode"][1] or node), f"{where}.electrode must be 2, 3 or 4 in single mode"))
        if mode == "weighted":
            w = r["weights"][0]
            if w is None or len(w) != 3 or not all(isinstance(x, _NUM) and x > 0 for x in w):
                problems.append((*at(r["weights"][1] or node), f"{where}.weights needs three positive numbers"))
        dev, dn = r["deviations_um"]
        for k, x in dev.items():
            if k not in EDGE_NAMES or not isinstance(x, _NUM) or isinstance(x, bool):
                problems.append((*at(dn or node), f"{where}.deviations_um: bad entry '{k}: {x}'"))
    recs = raw["trajectory"]["runs"]
    for i, (r, node) in enumerate(recs):
        where = f"trajectory.runs[{i}]"
        if r["name"][0] is None:
            problems.append((*at(node), f"{where}: missing 'name'"))
        for key in ("start_offset_um", "velocity_m_per_s"):
            v, vn = r[key]
            if len(v) != 3 or not all(isinstance(x, _NUM) for x in v):
                problems.append((*at(vn or node), f"{where}.{key} needs three numbers"))
        for key in ("dt_ns", "duration_us", "sample_every"):
            v, vn = r[key]
            if not v > 0:
                problems.append((*at(vn or node), f"{where}.{key} must be positive"))


def load_config(path=None, text: str | None = None, resolution_override: str | None = None) -> WorkbenchConfig:
    """Parse and validate a configuration; raises :class:`ConfigError`.

    With neither ``path`` nor ``text`` the built-in defaults are used.
    """
    source = "<defaults>" if text is None else "<string>"
    if path is not None:
        source = str(path)
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError([(0, 0, f"cannot read config: {exc}")], source) from exc
    text = text or ""
    problems = []
    given = {}
    if text.strip():
        try:
            node = yaml.compose(text, Loader=yaml.SafeLoader)
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            ln, col = (mark.line + 1, mark.column + 1) if mark else (0, 0)
            raise ConfigError([(ln, col, f"YAML syntax error: {getattr(exc, 'problem', exc)}")], source) from exc
        if node is not None:
            _walk(SCHEMA, node, data, "", problems, given)
    if problems:
        raise ConfigError(problems, source)
    raw = _fill(SCHEMA, given)
    _semantic_checks(raw, problems, resolution_override)
    if problems:
        raise ConfigError(problems, source)
    if resolution_override:
        raw["solver"]["resolution"] = (resolution_override, None)
    cfg = WorkbenchConfig(raw=raw, source=source, text=text)
    try:
        lay = cfg.layout()
        issues = validate_layout(lay, focus_tol=None)
    except LayoutError as exc:
        issues = [str(exc)]
    if issues:
        node = raw["layout"]["edges_mm"][1]
        ln, col = _mark(node) if node is not None else (0, 0)
        raise ConfigError([(ln, col, f"layout: {m}") for m in issues], source)
    return cfg


def default_config_text() -> str:
    """Commented YAML listing every key with its default."""
    lines = ["# mirrortrap workbench configuration; all keys optional, units in key names"]

    def emit(schema, indent):
        for key, spec in schema.items():
            pad = "  " * indent
            if isinstance(spec, dict):
                lines.append(f"{pad}{key}:")
                emit(spec, indent + 1)
            elif isinstance(spec, list):
                recs = DEFAULT_ALIGNMENT if key == "scenarios" else DEFAULT_RUNS
                base = {k: v[1] for k, v in spec[0].items()}
                lines.append(f"{pad}{key}:")
                for r in recs:
                    dumped = yaml.safe_dump([dict(copy.deepcopy(base), **r)], sort_keys=False, default_flow_style=None)
                    lines.extend(f"{pad}  {ln}" for ln in dumped.rstrip().splitlines())
            else:
                dumped = yaml.safe_dump({key: spec[1]}, default_flow_style=True).strip()[1:-1]
                lines.append(f"{pad}{dumped}")

    emit(SCHEMA, 0)
    return "\n".join(lines) + "\n"
