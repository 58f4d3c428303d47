"""Paraboloid electrode layout.

All lengths are millimetres.  The paraboloid is ``z = r**2 / (4 f)`` with its
apex at the origin and the optical axis along ``+z``.  It is cut into five
axial segments; segments 1 and 5 are split into four quadrant pads ``a``-``d``
(quadrants I-IV), segments 2-4 carry the RF drive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

PAD_LETTERS = ("a", "b", "c", "d")
QUADRANT_SEGMENTS = (1, 5)
RF_SEGMENTS = (2, 3, 4)

#: Basis electrode names in canonical order.
ELECTRODES = ("1a", "1b", "1c", "1d", "2", "3", "4", "5a", "5b", "5c", "5d")

#: Movable segment borders, named ``<segment>_up`` / ``<segment>_down``.
EDGE_NAMES = ("1_up", "2_down", "2_up", "3_down", "3_up", "4_down", "4_up", "5_down")

DEFAULT_EDGES = {
    1: (0.0, 0.256),
    2: (0.296, 1.096),
    3: (1.136, 1.900),
    4: (2.300, 3.000),
    5: (3.040, None),  # runs to the rim
}


class LayoutError(ValueError):
    """Raised for geometry that cannot be used (invalid layout, out-of-aperture query)."""


@dataclass(frozen=True)
class ParaboloidSpec:
    """Mirror surface: focal length, rim aperture and quoted depth [mm]."""

    focal_length: float = 2.1
    aperture_diameter: float = 31.5
    depth: float = 29.5

    def __post_init__(self):
        if self.focal_length <= 0 or self.aperture_diameter <= 0:
            raise LayoutError("focal length and aperture must be positive")
        if abs(self.depth - self.rim_z) > 0.01 * self.rim_z:
            raise LayoutError(
                f"depth {self.depth} mm inconsistent with aperture "
                f"{self.aperture_diameter} mm and f={self.focal_length} mm "
                f"(expected {self.rim_z:.3f} mm)"
            )

    @property
    def rim_radius(self) -> float:
        return 0.5 * self.aperture_diameter

    @property
    def rim_z(self) -> float:
        """Exact height of the rim, ``r_rim**2 / 4f``."""
        return self.rim_radius**2 / (4.0 * self.focal_length)

    @classmethod
    def truncated(cls, depth: float, focal_length: float = 2.1) -> "ParaboloidSpec":
        """Mirror of the same focal length cut off at ``depth``."""
        aperture = 2.0 * math.sqrt(4.0 * focal_length * depth)
        return cls(focal_length=focal_length, aperture_diameter=aperture, depth=depth)

    def radius_at(self, z):
        return np.sqrt(4.0 * self.focal_length * np.asarray(z, dtype=float))

    def arc_length(self, r):
        """Arc length along the generatrix from the apex to radius ``r``."""
        u = np.asarray(r, dtype=float) / (2.0 * self.focal_length)
        return self.focal_length * (u * np.sqrt(1.0 + u * u) + np.arcsinh(u))


def surface_point(spec: ParaboloidSpec, r: float) -> float:
    """Height of the mirror surface at radius ``r``."""
    if r < 0 or r > spec.rim_radius * (1 + 1e-12):
        raise LayoutError(f"radius {r} mm outside the aperture [0, {spec.rim_radius}]")
    return r * r / (4.0 * spec.focal_length)


@dataclass(frozen=True)
class SegmentDef:
    id: int
    z_lower: float
    z_upper: float

    @property
    def kind(self) -> str:
        return "RF" if self.id in RF_SEGMENTS else "DC"


@dataclass(frozen=True)
class PadId:
    segment: int
    quadrant: str

    def __str__(self):
        return f"{self.segment}{self.quadrant}"


def quadrant_of(azimuth_deg: float) -> str:
    """Quadrant letter for an azimuth; boundary points go to the lower letter."""
    a = azimuth_deg % 360.0
    if a <= 90.0:
        return "a"
    if a <= 180.0:
        return "b"
    if a <= 270.0:
        return "c"
    return "d"


@dataclass(frozen=True)
class ElectrodeLayout:
    """Segmented mirror.

    ``pad_gap`` is the width of the insulating strips along the x and y axes
    that separate the quadrant pads of segments 1 and 5.
    """

    spec: ParaboloidSpec = field(default_factory=ParaboloidSpec)
    segments: tuple = ()
    quadrant_split: tuple = QUADRANT_SEGMENTS
    pad_gap: float = 0.04

    def __post_init__(self):
        if not self.segments:
            segs = []
            for sid, (lo, hi) in DEFAULT_EDGES.items():
                segs.append(SegmentDef(sid, lo, self.spec.rim_z if hi is None else hi))
            object.__setattr__(self, "segments", tuple(segs))

    # -- queries -----------------------------------------------------------
    def segment(self, sid: int) -> SegmentDef:
        for s in self.segments:
            if s.id == sid:
                return s
        raise KeyError(sid)

    @property
    def focus(self) -> float:
        return self.spec.focal_length

    @property
    def edges(self) -> dict:
        """Current coordinates of the movable borders, keyed by ``EDGE_NAMES``."""
        out = {}
        for name in EDGE_NAMES:
            sid, side = name.split("_")
            seg = self.segment(int(sid))
            out[name] = seg.z_upper if side == "up" else seg.z_lower
        return out

    def with_edge(self, name: str, z: float) -> "ElectrodeLayout":
        """Copy of the layout with one border moved to height ``z``."""
        if name not in EDGE_NAMES:
            raise KeyError(f"unknown edge {name!r}")
        sid, side = name.split("_")
        segs = []
        for s in self.segments:
            if s.id == int(sid):
                s = replace(s, z_upper=z) if side == "up" else replace(s, z_lower=z)
            segs.append(s)
        return replace(self, segments=tuple(segs))

    def with_edges(self, shifts: dict) -> "ElectrodeLayout":
        """Copy with borders displaced by ``shifts`` (edge name -> delta in mm)."""
        lay = self
        for name, dz in shifts.items():
            lay = lay.with_edge(name, lay.edges[name] + dz)
        return lay

    def breakpoints(self) -> list:
        """Surface heights where the boundary data changes character.

        Returns ``(z0, z1, kind, payload)`` tuples covering ``[0, rim_z]``;
        ``kind`` is ``"seg"`` (payload: segment id) or ``"gap"`` (payload:
        ids of the segments below and above).
        """
        segs = sorted(self.segments, key=lambda s: s.z_lower)
        out = []
        for k, s in enumerate(segs):
            out.append((s.z_lower, s.z_upper, "seg", s.id))
            if k + 1 < len(segs):
                out.append((s.z_upper, segs[k + 1].z_lower, "gap", (s.id, segs[k + 1].id)))
        return out

    def electrode_at(self, z: float, azimuth_deg: float = 0.0) -> str:
        """Electrode name (``"3"``, ``"1a"``...) on the surface at height ``z``, or ``"gap"``."""
        if z < 0 or z > self.spec.rim_z * (1 + 1e-12):
            raise LayoutError(f"z={z} mm outside [0, {self.spec.rim_z:.4f}]")
        for s in self.segments:
            top_closed = s.z_upper >= self.spec.rim_z and z == s.z_upper
            if s.z_lower <= z < s.z_upper or top_closed:
                if s.id in self.quadrant_split:
                    return f"{s.id}{quadrant_of(azimuth_deg)}"
                return str(s.id)
        return "gap"

    # -- boundary data -----------------------------------------------------
    def segment_profile(self, z) -> np.ndarray:
        """Weight of each segment (columns 1..5) in the surface potential at height ``z``.

        Gaps interpolate linearly in arc length between the adjacent segments.
        """
        z = np.atleast_1d(np.asarray(z, dtype=float))
        w = np.zeros((z.size, 5))
        s_of = lambda zz: self.spec.arc_length(self.spec.radius_at(zz))
        s = s_of(z)
        for z0, z1, kind, payload in self.breakpoints():
            if kind == "seg":
                m = (z >= z0) & (z <= z1)
                w[m, payload - 1] = 1.0
            else:
                m = (z > z0) & (z < z1)
                if m.any():
                    t = (s[m] - s_of(z0)) / (s_of(z1) - s_of(z0))
                    lo, hi = payload
                    w[m, lo - 1] = 1.0 - t
                    w[m, hi - 1] = t
        return w

    def pad_weights(self, x, y) -> np.ndarray:
        """Share of pads a-d at surface points, ramped across the insulating strips."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        g = max(self.pad_gap, 1e-12)
        ramp = lambda t: np.clip((t + 0.5 * g) / g, 0.0, 1.0)
        rx, ry, rmx, rmy = ramp(x), ramp(y), ramp(-x), ramp(-y)
        return np.stack([rx * ry, rmx * ry, rmx * rmy, rx * rmy], axis=-1)

    def boundary_weights(self, x, y, z) -> np.ndarray:
        """Weights of the basis electrodes (``ELECTRODES`` order) at surface points."""
        prof = self.segment_profile(z)
        pads = self.pad_weights(np.atleast_1d(x), np.atleast_1d(y))
        out = np.zeros((prof.shape[0], len(ELECTRODES)))
        out[:, 0:4] = prof[:, [0]] * pads
        out[:, 4:7] = prof[:, 1:4]
        out[:, 7:11] = prof[:, [4]] * pads
        return out


def default_layout() -> ElectrodeLayout:
    return ElectrodeLayout()


def voltage_vector(voltages) -> np.ndarray:
    """Expand a voltage assignment to the 11 basis electrodes.

    Accepts a mapping keyed by electrode name (``"2"``, ``"5c"``), by
    segment (``"V1"``..``"V5"``, applied to every pad of that segment), or an
    array already in ``ELECTRODES`` order.
    """
    if not isinstance(voltages, dict):
        v = np.asarray(voltages, dtype=float)
        if v.shape != (len(ELECTRODES),):
            raise ValueError(f"expected {len(ELECTRODES)} voltages, got shape {v.shape}")
        return v
    v = np.zeros(len(ELECTRODES))
    for key, val in voltages.items():
        key = str(key)
        if key.upper().startswith("V") and key[1:].isdigit():
            sid = int(key[1:])
            if not 1 <= sid <= 5:
                raise KeyError(f"unknown segment {key!r}")
            for i, name in enumerate(ELECTRODES):
                if name.rstrip("abcd") == str(sid):
                    v[i] += val
        elif key in ELECTRODES:
            v[ELECTRODES.index(key)] += val
        else:
            raise KeyError(f"unknown electrode {key!r}")
    return v


def validate_layout(layout: ElectrodeLayout, focus_tol: float | None = 1e-3) -> list:
    """Return human-readable invariant violations; empty when the layout is usable.

    ``focus_tol=None`` skips the check that the focus sits mid-gap between
    segments 3 and 4, which deliberately perturbed layouts violate.
    """
    problems = []
    segs = sorted(layout.segments, key=lambda s: s.id)
    ids = [s.id for s in segs]
    if ids != [1, 2, 3, 4, 5]:
        problems.append(f"segments must be 1..5, got {ids}")
        return problems
    for s in segs:
        if not s.z_lower < s.z_upper:
            problems.append(f"segment {s.id}: z_lower {s.z_lower} >= z_upper {s.z_upper}")
    for a, b in zip(segs, segs[1:]):
        if b.z_lower < a.z_upper:
            problems.append(
                f"overlap: {a.id}_up={a.z_upper} above {b.id}_down={b.z_lower}"
            )
        elif b.z_lower == a.z_upper:
            problems.append(f"zero gap between {a.id}_up and {b.id}_down at z={a.z_upper}")
    if segs[0].z_lower != 0.0:
        problems.append(f"segment 1 must start at the apex, starts at {segs[0].z_lower}")
    if abs(segs[-1].z_upper - layout.spec.rim_z) > 1e-9:
        problems.append(f"segment 5 must end at the rim z={layout.spec.rim_z:.4f}")
    mid = 0.5 * (layout.segment(3).z_upper + layout.segment(4).z_lower)
    if focus_tol is not None and abs(mid - layout.focus) > focus_tol:
        problems.append(
            f"focus not centred in 3_up/4_down gap: midpoint {mid:.4f} != f={layout.focus}"
        )
    if set(layout.quadrant_split) != set(QUADRANT_SEGMENTS):
        problems.append(f"quadrant split must be segments {QUADRANT_SEGMENTS}")
    if layout.pad_gap < 0:
        problems.append("pad gap must be non-negative")
    return problems


def min_gap(layout: ElectrodeLayout) -> float:
    return min(z1 - z0 for z0, z1, kind, _ in layout.breakpoints() if kind == "gap")


def iter_gaps(layout: ElectrodeLayout) -> Iterable:
    return [(z0, z1, ids) for z0, z1, kind, ids in layout.breakpoints() if kind == "gap"]
