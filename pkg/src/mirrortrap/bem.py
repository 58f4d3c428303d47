"""Boundary-element Laplace solver for the segmented mirror.

The surface of revolution (paraboloid plus a grounded virtual cap over the
aperture) carries a single-layer charge density.  The density is expanded in
azimuthal Fourier modes ``cos(m phi)``, ``sin(m phi)``; each mode reduces to a
1-D integral equation along the generatrix whose ring kernel is a toroidal
Legendre function ``Q_{m-1/2}``.  Piecewise-constant panels with midpoint
collocation are used throughout.

Lengths are mm, potentials V.  Gradients returned by :meth:`BasisFieldSet.evaluate`
are in V/mm; :func:`field_at` converts to V/m.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.linalg import lu_factor, lu_solve
from scipy.special import ellipe, ellipkm1

from .geometry import ELECTRODES, ElectrodeLayout, LayoutError, min_gap, validate_layout

log = logging.getLogger(__name__)

CACHE_FORMAT = 3
_CHI_SWITCH = 1.2  # below: elliptic-integral recurrence, above: trapezoid in psi
_NEAR_FACTOR = 2.5
RIM_RAMP = 3.0  # mm of cap over which segment 5's potential decays to ground


class DomainError(ValueError):
    """Evaluation point outside the trap volume or too close to the electrodes."""


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Resolution:
    """Mesh and quadrature controls.

    ``edge_size`` is the panel length next to every segment border,
    ``max_size`` the largest panel on segments 1-4 and ``far_size`` the
    largest panel on segment 5 and the cap.
    """

    edge_size: float = 0.001
    max_size: float = 0.075
    far_size: float = 0.3
    growth: float = 1.2
    max_mode: int = 4
    ring_points: int = 64
    gauss_points: int = 6
    wall_margin: float = 0.2

    @classmethod
    def preset(cls, name: str, **overrides) -> "Resolution":
        table = {
            "coarse": dict(edge_size=0.005, max_size=0.15, far_size=0.6),
            "reference": {},
            "fine": dict(edge_size=0.00025, max_size=0.04, far_size=0.15),
        }
        if name not in table:
            raise KeyError(f"unknown resolution preset {name!r}; choose from {sorted(table)}")
        return cls(**{**table[name], **overrides})


# ---------------------------------------------------------------------------
# ring kernels
# ---------------------------------------------------------------------------

def legendre_q_half(chi_minus_1, max_mode: int, n_psi: int = 64) -> np.ndarray:
    """Toroidal functions ``Q_{m-1/2}(chi)`` for ``m = 0..max_mode``.

    ``chi - 1`` is passed directly so that near-coincident points keep
    their precision.  Returns an array of shape ``chi.shape + (max_mode+1,)``.
    """
    cm1 = np.asarray(chi_minus_1, dtype=float)
    chi = 1.0 + cm1
    out = np.empty(cm1.shape + (max_mode + 1,))
    lo = chi < _CHI_SWITCH
    if lo.any():
        c = chi[lo]
        k = ellipkm1(cm1[lo] / (c + 1.0))
        e = ellipe(2.0 / (c + 1.0))
        q = np.empty(c.shape + (max_mode + 1,))
        q[..., 0] = np.sqrt(2.0 / (c + 1.0)) * k
        if max_mode >= 1:
            q[..., 1] = c * q[..., 0] - np.sqrt(2.0 * (c + 1.0)) * e
        # forward recurrence is stable enough this close to chi = 1
        for m in range(1, max_mode):
            q[..., m + 1] = (2 * m * c * q[..., m] - (m - 0.5) * q[..., m - 1]) / (m + 0.5)
        out[lo] = q
    hi = ~lo
    if hi.any():
        psi = 2.0 * np.pi * np.arange(n_psi) / n_psi
        f = 1.0 / np.sqrt(chi[hi][:, None] - np.cos(psi)[None, :])
        cos_tab = np.cos(np.outer(np.arange(max_mode + 1), psi))
        out[hi] = f @ cos_tab.T * (2.0 * np.pi / n_psi) / (2.0 * math.sqrt(2.0))
    return out


# ---------------------------------------------------------------------------
# mesh
# ---------------------------------------------------------------------------

PARAB, SLEEVE, CAP = 0, 1, 2


def _graded_fractions(length, h0, hmax, growth):
    """Node fractions in [0, 1] with panels ~h0 at both ends, at most ~hmax inside."""
    left, h, tot = [], h0, 0.0
    while tot + h < 0.5 * length and h < hmax:
        left.append(h)
        tot += h
        h *= growth
    mid = length - 2.0 * tot
    n_mid = max(1, int(math.ceil(mid / hmax - 1e-9)))
    sizes = left + [mid / n_mid] * n_mid + left[::-1]
    x = np.concatenate([[0.0], np.cumsum(sizes)])
    return x / x[-1]


@dataclass
class Mesh:
    """Panels along the generatrix.

    ``piece`` selects the surface patch (paraboloid, sleeve, cap), ``ta``/``tb``
    the patch parameter limits (radius for paraboloid and cap, height for the
    sleeve).  ``template`` holds the per-interval node fractions; passing it
    back to :func:`build_mesh` for a perturbed layout keeps the panel count
    and lets nodes move continuously with the borders.
    """

    focal_length: float
    cap_z: float
    rim_radius: float
    piece: np.ndarray
    ta: np.ndarray
    tb: np.ndarray
    template: tuple
    interval: np.ndarray
    interval_kind: tuple

    @property
    def n(self):
        return self.piece.size

    def point(self, piece, t):
        """Generatrix point ``(rho, z)`` and arc-length Jacobian for parameters ``t``."""
        piece = np.broadcast_to(piece, np.shape(t))
        t = np.asarray(t, dtype=float)
        rho = np.where(piece == SLEEVE, self.rim_radius, t)
        z = np.where(
            piece == PARAB,
            t * t / (4.0 * self.focal_length),
            np.where(piece == SLEEVE, t, self.cap_z),
        )
        jac = np.where(piece == PARAB, np.sqrt(1.0 + (t / (2.0 * self.focal_length)) ** 2), 1.0)
        return rho, z, jac

    def collocation(self):
        return self.point(self.piece, 0.5 * (self.ta + self.tb))

    def lengths(self):
        """Approximate arc length of each panel."""
        r0, z0, _ = self.point(self.piece, self.ta)
        r1, z1, _ = self.point(self.piece, self.tb)
        rm, zm, _ = self.collocation()
        return np.hypot(rm - r0, zm - z0) + np.hypot(r1 - rm, z1 - zm)


def _arc_to_radius(spec, s_target, r_guess):
    r = np.asarray(r_guess, dtype=float).copy()
    for _ in range(50):
        ds = spec.arc_length(r) - s_target
        r -= ds / np.sqrt(1.0 + (r / (2.0 * spec.focal_length)) ** 2)
        if np.max(np.abs(ds)) < 1e-14:
            break
    return r


def build_mesh(layout: ElectrodeLayout, res: Resolution, template=None, cap_offset=0.0) -> Mesh:
    spec = layout.spec
    R, f = spec.rim_radius, spec.focal_length
    cap_z = spec.rim_z + cap_offset
    intervals = []
    # pad strips leave kinks in the azimuthal data where their edges cross the rings
    kinks = [0.5 * layout.pad_gap, math.sqrt(0.5) * layout.pad_gap] if layout.pad_gap > 0 else []
    for z0, z1, kind, payload in layout.breakpoints():
        far = kind == "seg" and payload == 5
        r0, r1 = spec.radius_at(z0), spec.radius_at(z1)
        cuts = [r0] + [k for k in kinks if r0 < k < r1 and kind == "seg" and payload == 1] + [r1]
        for a, b in zip(cuts[:-1], cuts[1:]):
            intervals.append((PARAB, a, b, far, kind))
    if cap_offset > 0:
        intervals.append((SLEEVE, spec.rim_z, cap_z, True, "sleeve"))
    intervals.append((CAP, R, 0.0, True, "cap"))

    if template is not None and len(template) != len(intervals):
        raise LayoutError("mesh template does not match the layout's interval structure")
    pieces, tas, tbs, fracs, ids = [], [], [], [], []
    for k, (pc, a, b, far, _) in enumerate(intervals):
        if pc == PARAB:
            sa, sb = spec.arc_length(a), spec.arc_length(b)
            length = sb - sa
        else:
            length = abs(b - a)
        if template is not None:
            u = template[k]
        else:
            h0 = res.edge_size if pc == PARAB else 4.0 * res.edge_size
            u = _graded_fractions(length, h0, res.far_size if far else res.max_size, res.growth)
        fracs.append(u)
        if pc == PARAB:
            t = _arc_to_radius(spec, sa + u * length, a + u * (b - a))
            t[0], t[-1] = a, b
        else:
            t = a + u * (b - a)
        pieces.append(np.full(t.size - 1, pc))
        ids.append(np.full(t.size - 1, k))
        tas.append(t[:-1])
        tbs.append(t[1:])
    return Mesh(
        focal_length=f,
        cap_z=cap_z,
        rim_radius=R,
        piece=np.concatenate(pieces),
        ta=np.concatenate(tas),
        tb=np.concatenate(tbs),
        template=tuple(fracs),
        interval=np.concatenate(ids),
        interval_kind=tuple(iv[4] for iv in intervals),
    )


# ---------------------------------------------------------------------------
# single-layer integrals
# ---------------------------------------------------------------------------

def _ring_integrals(mesh, targets_rho, targets_z, max_mode, panels=None, n_gauss=6):
    """Mode potentials of unit density on each panel, seen from each target.

    Returns ``G[m, i, j] = int_panel_j rho' J Q_m(chi) / (2 pi sqrt(rho_i rho')) dt``,
    the potential at target ``i`` of density ``cos(m phi')`` on panel ``j``
    (the target sees the same ``cos(m phi)`` factor).
    """
    if panels is None:
        panels = np.arange(mesh.n)
    rho = np.asarray(targets_rho, dtype=float)
    zt = np.asarray(targets_z, dtype=float)
    nt, npnl = rho.size, panels.size
    out = np.zeros((max_mode + 1, nt, npnl))

    piece, ta, tb = mesh.piece[panels], mesh.ta[panels], mesh.tb[panels]
    rm, zm, _ = mesh.point(piece, 0.5 * (ta + tb))
    length = np.hypot(*np.subtract(mesh.point(piece, tb)[:2], mesh.point(piece, ta)[:2]))
    dist = np.hypot(rho[:, None] - rm[None, :], zt[:, None] - zm[None, :])
    near = dist < _NEAR_FACTOR * length[None, :]

    def kernel(r_t, z_t, tq, wq, pc):
        rq, zq, jq = mesh.point(pc, tq)
        # coincident nodes only occur with zero quadrature weight
        cm1 = np.maximum(((r_t - rq) ** 2 + (z_t - zq) ** 2) / (2.0 * r_t * rq), 1e-300)
        q = legendre_q_half(cm1, max_mode)
        w = wq * jq * np.sqrt(rq / r_t) / (2.0 * np.pi)
        return q * w[..., None]

    # far pairs: plain Gauss-Legendre, vectorised in blocks of targets
    gx, gw = leggauss(n_gauss)
    half = 0.5 * (tb - ta)
    tq = 0.5 * (ta + tb)[:, None] + half[:, None] * gx[None, :]
    wq = np.abs(half)[:, None] * gw[None, :]
    block = max(1, 400_000 // max(1, npnl * n_gauss))
    for i0 in range(0, nt, block):
        sl = slice(i0, i0 + block)
        k = kernel(
            rho[sl, None, None], zt[sl, None, None], tq[None], wq[None], piece[None, :, None]
        )
        vals = k.sum(axis=2)  # (nt_blk, npnl, M+1)
        out[:, sl, :] = np.moveaxis(vals, -1, 0)

    # near pairs: graded rule clustered at the closest point of the panel
    ii, jj = np.nonzero(near)
    if ii.size:
        gxn, gwn = leggauss(12)
        u = 0.5 * (gxn + 1.0)
        wu = 0.5 * gwn
        ts = np.linspace(0.0, 1.0, 65)
        t_lin = ta[jj, None] + (tb - ta)[jj, None] * ts[None, :]
        rs, zs, _ = mesh.point(piece[jj, None], t_lin)
        d2 = (rs - rho[ii, None]) ** 2 + (zs - zt[ii, None]) ** 2
        kbest = np.argmin(d2, axis=1)
        tstar = t_lin[np.arange(ii.size), kbest]
        on_mid = np.isclose(rho[ii], rm[jj], rtol=0, atol=1e-13) & np.isclose(
            zt[ii], zm[jj], rtol=0, atol=1e-13
        )
        tstar = np.where(on_mid, 0.5 * (ta[jj] + tb[jj]), tstar)
        nodes, weights = [], []
        for end in (ta[jj], tb[jj]):
            span = end - tstar
            nodes.append(tstar[:, None] + span[:, None] * u[None, :] ** 3)
            weights.append(np.abs(span)[:, None] * 3.0 * u[None, :] ** 2 * wu[None, :])
        tqn = np.concatenate(nodes, axis=1)
        wqn = np.concatenate(weights, axis=1)
        k = kernel(rho[ii, None], zt[ii, None], tqn, wqn, piece[jj, None])
        vals = k.sum(axis=1)  # (npairs, M+1)
        out[:, ii, jj] = vals.T
    return out


# ---------------------------------------------------------------------------
# boundary data
# ---------------------------------------------------------------------------

def _azimuthal_coefficients(layout, rho, z, max_mode):
    """Fourier coefficients of every electrode's boundary weight on rings.

    Returns ``(cos_coef, sin_coef)``, each ``(M+1, n_ring, n_electrode)``;
    the boundary weight is ``a_0 + sum_m a_m cos(m phi) + b_m sin(m phi)``.
    """
    rho = np.atleast_1d(rho)
    z = np.atleast_1d(z)
    ne = len(ELECTRODES)
    a = np.zeros((max_mode + 1, rho.size, ne))
    b = np.zeros_like(a)
    gap = max(layout.pad_gap, 1e-6)
    for i, (r, zz) in enumerate(zip(rho, z)):
        n_phi = max(256, 2 ** int(math.ceil(math.log2(max(8.0 * math.pi * r / gap, 1.0)))))
        phi = 2.0 * np.pi * np.arange(n_phi) / n_phi
        w = layout.boundary_weights(r * np.cos(phi), r * np.sin(phi), np.full(n_phi, zz))
        spec = np.fft.rfft(w, axis=0) / n_phi
        a[0, i] = spec[0].real
        for m in range(1, max_mode + 1):
            a[m, i] = 2.0 * spec[m].real
            b[m, i] = -2.0 * spec[m].imag
    return a, b


def _boundary_data(mesh, layout, piece, rho, z, max_mode):
    """Mode coefficients of the prescribed potential at generatrix points.

    Beyond the rim the potential falls linearly to zero over ``RIM_RAMP`` mm
    of sleeve/cap, so the grounded cap joins segment 5 without a jump.
    """
    piece = np.broadcast_to(piece, rho.shape)
    a = np.zeros((max_mode + 1, rho.size, len(ELECTRODES)))
    b = np.zeros_like(a)
    mirror = piece == PARAB
    if mirror.any():
        aa, bb = _azimuthal_coefficients(layout, rho[mirror], z[mirror], max_mode)
        a[:, mirror] = aa
        b[:, mirror] = bb
    rim_z = layout.spec.rim_z
    beyond = np.where(
        piece == SLEEVE, z - rim_z, (mesh.cap_z - rim_z) + (mesh.rim_radius - rho)
    )
    ramp = np.clip(1.0 - beyond / RIM_RAMP, 0.0, 1.0)
    ramp[mirror] = 0.0
    if ramp.any():
        aa, bb = _azimuthal_coefficients(layout, [mesh.rim_radius], [rim_z], max_mode)
        a += ramp[None, :, None] * aa
        b += ramp[None, :, None] * bb
    return a, b


# ---------------------------------------------------------------------------
# basis field set
# ---------------------------------------------------------------------------

@dataclass
class BasisFieldSet:
    """Unit-voltage potentials of the eleven electrodes.

    ``sigma_cos[m]`` / ``sigma_sin[m]`` hold the panel densities (``n_panel x
    n_electrode``) of azimuthal order ``m``.  The set is immutable once built;
    evaluation helpers cache their source clouds.
    """

    layout: ElectrodeLayout
    resolution: Resolution
    mesh: Mesh
    sigma_cos: np.ndarray
    sigma_sin: np.ndarray
    residual: dict = field(default_factory=dict)
    key: str = ""
    _clouds: dict = field(default_factory=dict, repr=False)

    electrodes = ELECTRODES

    @property
    def max_mode(self):
        return self.sigma_cos.shape[0] - 1

    # -- interior evaluation ---------------------------------------------
    def _gauss_sources(self, n_gauss=None):
        n_gauss = n_gauss or self.resolution.gauss_points
        m = self.mesh
        gx, gw = leggauss(n_gauss)
        half = 0.5 * (m.tb - m.ta)
        tq = (0.5 * (m.ta + m.tb))[:, None] + half[:, None] * gx[None, :]
        rq, zq, jq = m.point(m.piece[:, None], tq)
        wq = np.abs(half)[:, None] * gw[None, :] * jq * rq
        panel = np.repeat(np.arange(m.n), n_gauss)
        return rq.ravel(), zq.ravel(), wq.ravel(), panel

    def _cloud(self, n_ring):
        if n_ring in self._clouds:
            return self._clouds[n_ring]
        rq, zq, wq, panel = self._gauss_sources()
        phi = 2.0 * np.pi * np.arange(n_ring) / n_ring
        pos = np.stack(
            [
                (rq[:, None] * np.cos(phi)[None, :]).ravel(),
                (rq[:, None] * np.sin(phi)[None, :]).ravel(),
                np.repeat(zq, n_ring),
            ],
            axis=1,
        )
        dens = np.zeros((rq.size, n_ring, len(ELECTRODES)))
        for mm in range(self.max_mode + 1):
            dens += self.sigma_cos[mm][panel][:, None, :] * np.cos(mm * phi)[None, :, None]
            if mm:
                dens += self.sigma_sin[mm][panel][:, None, :] * np.sin(mm * phi)[None, :, None]
        strength = (dens * (wq / (2.0 * n_ring))[:, None, None]).reshape(-1, len(ELECTRODES))
        self._clouds[n_ring] = (pos, strength)
        return self._clouds[n_ring]

    def wall_distance(self, points) -> np.ndarray:
        """Signed distance-like margin to the mirror and cap (negative outside)."""
        p = np.atleast_2d(points)
        rho = np.hypot(p[:, 0], p[:, 1])
        f = self.mesh.focal_length
        d_par = (p[:, 2] - rho**2 / (4 * f)) / np.sqrt(1 + (rho / (2 * f)) ** 2)
        d_cap = self.mesh.cap_z - p[:, 2]
        d_side = np.where(
            p[:, 2] > self.layout.spec.rim_z, self.mesh.rim_radius - rho, np.inf
        )
        return np.minimum(np.minimum(d_par, d_cap), d_side)

    def evaluate(self, points, gradient=True):
        """Basis potentials (``P x 11``) and gradients (``P x 11 x 3``, V/mm) at points [mm]."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        margin = self.wall_distance(pts)
        bad = margin < self.resolution.wall_margin
        if bad.any():
            p = pts[np.argmax(bad)]
            raise DomainError(
                f"point {p.tolist()} is outside the trap or within "
                f"{self.resolution.wall_margin} mm of an electrode"
            )
        phi = np.empty((pts.shape[0], len(ELECTRODES)))
        grad = np.empty((pts.shape[0], len(ELECTRODES), 3)) if gradient else None
        ring = np.where(margin > 0.6, self.resolution.ring_points, 4 * self.resolution.ring_points)
        for n_ring in np.unique(ring):
            idx = np.nonzero(ring == n_ring)[0]
            pos, strength = self._cloud(int(n_ring))
            chunk = max(1, 2_000_000 // pos.shape[0])
            for i0 in range(0, idx.size, chunk):
                sel = idx[i0 : i0 + chunk]
                d = pts[sel, None, :] - pos[None, :, :]
                inv = 1.0 / np.sqrt(np.einsum("pqk,pqk->pq", d, d))
                phi[sel] = inv @ strength
                if gradient:
                    inv3 = inv**3
                    for c in range(3):
                        grad[sel, :, c] = -(d[:, :, c] * inv3) @ strength
        return phi, grad

    def axis_profile(self, z, derivatives=2):
        """On-axis potential and its z-derivatives for every electrode.

        Returns an array ``(derivatives+1, n_z, 11)`` from the exact ring
        formula (only the axisymmetric mode contributes on the axis).
        """
        z = np.atleast_1d(np.asarray(z, dtype=float))
        rq, zq, wq, panel = self._gauss_sources()
        sig = self.sigma_cos[0][panel]  # (nq, E)
        dz = z[:, None] - zq[None, :]
        d2 = rq[None, :] ** 2 + dz**2
        d = np.sqrt(d2)
        w = wq[None, :] / 2.0
        kern = [w / d]
        if derivatives >= 1:
            kern.append(-w * dz / d**3)
        if derivatives >= 2:
            kern.append(w * (3.0 * dz**2 / d2 - 1.0) / d**3)
        if derivatives >= 3:
            kern.append(w * (9.0 * dz / d**5 - 15.0 * dz**3 / d**7))
        return np.stack([k @ sig for k in kern[: derivatives + 1]])

    def mode_axis_coefficients(self, z, max_degree, center):
        """Taylor coefficients in ``u = z - center`` of the near-axis mode functions.

        ``f_m(z) = lim rho^-m phi_m(rho, z)``; returns ``(F_cos, F_sin)`` with
        shape ``(M+1, max_degree+1, 11)``.
        """
        from scipy.special import eval_gegenbauer, factorial

        rq, zq, wq, panel = self._gauss_sources()
        a = center - zq
        dd = np.sqrt(rq**2 + a**2)
        x = -a / dd
        out_c = np.zeros((self.max_mode + 1, max_degree + 1, len(ELECTRODES)))
        out_s = np.zeros_like(out_c)
        for m in range(self.max_mode + 1):
            cm = 0.5 * factorial(2 * m) / (4.0**m * factorial(m) ** 2)
            base = cm * wq * rq**m / dd ** (2 * m + 1)
            for n in range(max_degree + 1):
                g = base * eval_gegenbauer(n, m + 0.5, x) / dd**n
                out_c[m, n] = g @ self.sigma_cos[m][panel]
                if m:
                    out_s[m, n] = g @ self.sigma_sin[m][panel]
        return out_c, out_s


def solve_basis(
    layout: ElectrodeLayout,
    resolution: Resolution | None = None,
    template=None,
    cap_offset: float = 0.0,
    check_residual: bool = True,
) -> BasisFieldSet:
    """Solve the eleven unit-voltage problems for ``layout``."""
    res = resolution or Resolution()
    problems = validate_layout(layout, focus_tol=None)
    if problems:
        raise LayoutError("; ".join(problems))
    if res.edge_size > 0.5 * min_gap(layout) + 1e-12:
        raise LayoutError(
            f"edge panel size {res.edge_size} mm cannot resolve the narrowest gap "
            f"({min_gap(layout) * 1e3:.0f} um); need at most half the gap width"
        )
    if layout.pad_gap > 0 and res.ring_points < 16:
        raise LayoutError("ring_points must be at least 16")

    mesh = build_mesh(layout, res, template=template, cap_offset=cap_offset)
    M = res.max_mode
    rho_c, z_c, _ = mesh.collocation()
    log.info("assembling %d panels, modes 0..%d", mesh.n, M)
    mats = _ring_integrals(mesh, rho_c, z_c, M)
    a, b = _boundary_data(mesh, layout, mesh.piece, rho_c, z_c, M)
    sig_c = np.zeros((M + 1, mesh.n, len(ELECTRODES)))
    sig_s = np.zeros_like(sig_c)
    for m in range(M + 1):
        lu = lu_factor(mats[m])
        sig_c[m] = lu_solve(lu, a[m])
        if m:
            sig_s[m] = lu_solve(lu, b[m])
    if not np.all(np.isfinite(sig_c)) or not np.all(np.isfinite(sig_s)):
        raise SolverError("non-finite panel densities")
    basis = BasisFieldSet(layout, res, mesh, sig_c, sig_s, key=basis_key(layout, res, cap_offset))
    if check_residual:
        basis.residual = boundary_residual(basis)
    return basis


def boundary_residual(basis: BasisFieldSet) -> dict:
    """Mismatch between represented and prescribed surface potential.

    Checked per azimuthal mode at panel end nodes, i.e. midway between
    collocation points, where piecewise-constant densities are least
    accurate.  ``electrode_max`` covers nodes inside electrode surfaces;
    ``max_abs`` adds gap ramps, the cap and the nodes sitting exactly on
    kinks of the boundary data, which converge only linearly in panel size.
    """
    mesh = basis.mesh
    M = basis.max_mode
    first = np.r_[True, mesh.interval[1:] != mesh.interval[:-1]]
    rho_n, z_n, _ = mesh.point(mesh.piece, mesh.ta)
    keep = rho_n > 1e-9
    kinds = np.array(mesh.interval_kind)[mesh.interval]
    inside = (kinds == "seg") & ~first
    rho_n, z_n, piece_n, inside = rho_n[keep], z_n[keep], mesh.piece[keep], inside[keep]
    g = _ring_integrals(mesh, rho_n, z_n, M)
    a, b = _boundary_data(mesh, basis.layout, piece_n, rho_n, z_n, M)
    err = np.zeros(rho_n.size)
    per_mode = []
    for m in range(M + 1):
        e = np.abs(g[m] @ basis.sigma_cos[m] - a[m]).max(axis=1)
        if m:
            e = np.maximum(e, np.abs(g[m] @ basis.sigma_sin[m] - b[m]).max(axis=1))
        per_mode.append(float(e[inside].max()))
        err = np.maximum(err, e)
    return {
        "electrode_max": float(err[inside].max()),
        "max_abs": float(err.max()),
        "per_mode": per_mode,
        "n_check": int(rho_n.size),
    }


def basis_key(layout, res, cap_offset=0.0) -> str:
    payload = json.dumps(
        {"layout": asdict(layout), "res": asdict(res), "cap": cap_offset, "v": CACHE_FORMAT},
        sort_keys=True,
        default=float,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:20]


def save_basis(basis: BasisFieldSet, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    m = basis.mesh
    meta = {
        "format": CACHE_FORMAT,
        "key": basis.key,
        "layout": asdict(basis.layout),
        "resolution": asdict(basis.resolution),
        "residual": basis.residual,
        "cap_z": m.cap_z,
        "interval_kind": list(m.interval_kind),
    }
    np.savez_compressed(
        path,
        meta=np.array(json.dumps(meta, default=float)),
        piece=m.piece,
        ta=m.ta,
        tb=m.tb,
        interval=m.interval,
        sigma_cos=basis.sigma_cos,
        sigma_sin=basis.sigma_sin,
        template=np.array(json.dumps([list(map(float, u)) for u in m.template])),
    )
    return path


def load_basis(path, layout: ElectrodeLayout, res: Resolution, cap_offset=0.0) -> BasisFieldSet:
    """Load a cached basis, refusing files written for a different problem."""
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        want = basis_key(layout, res, cap_offset)
        if meta.get("format") != CACHE_FORMAT or meta.get("key") != want:
            raise SolverError(f"cache {path} does not match layout/resolution (key {want})")
        template = tuple(np.array(u) for u in json.loads(str(data["template"])))
        mesh = Mesh(
            focal_length=layout.spec.focal_length,
            cap_z=meta["cap_z"],
            rim_radius=layout.spec.rim_radius,
            piece=data["piece"],
            ta=data["ta"],
            tb=data["tb"],
            template=template,
            interval=data["interval"],
            interval_kind=tuple(meta["interval_kind"]),
        )
        return BasisFieldSet(
            layout, res, mesh, data["sigma_cos"], data["sigma_sin"], meta["residual"], want
        )


def cached_basis(layout, res, cache_dir=None, cap_offset=0.0) -> BasisFieldSet:
    """Solve or reuse a basis stored under ``cache_dir``."""
    if cache_dir is None:
        return solve_basis(layout, res, cap_offset=cap_offset)
    path = Path(cache_dir) / f"basis-{basis_key(layout, res, cap_offset)}.npz"
    if path.exists():
        try:
            return load_basis(path, layout, res, cap_offset)
        except SolverError:
            log.warning("ignoring stale cache %s", path)
    basis = solve_basis(layout, res, cap_offset=cap_offset)
    save_basis(basis, path)
    return basis


# ---------------------------------------------------------------------------
# voltage superpositions
# ---------------------------------------------------------------------------

def potential_at(basis: BasisFieldSet, voltages, point) -> float:
    """Potential [V] at ``point`` [mm] for a voltage assignment."""
    from .geometry import voltage_vector

    phi, _ = basis.evaluate(np.asarray(point, dtype=float)[None, :], gradient=False)
    return float(phi[0] @ voltage_vector(voltages))


def field_at(basis: BasisFieldSet, voltages, point) -> np.ndarray:
    """Electric field [V/m] at ``point`` [mm]."""
    from .geometry import voltage_vector

    _, grad = basis.evaluate(np.asarray(point, dtype=float)[None, :])
    return -1e3 * grad[0].T @ voltage_vector(voltages)
