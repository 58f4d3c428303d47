"""Finite-difference Laplace oracle on a Cartesian grid.

Independent cross-check of the boundary-element fields.  The trap volume
``rho^2/4f < z < depth`` is discretised with the Shortley-Weller stencil:
grid lines that leave the volume are cut at the true surface and the
Dirichlet value is taken there, which keeps the scheme second order.  Only
the quadrant ``x, y >= 0`` is stored; the boundary data is split into its
four parity components in ``x`` and ``y``, and each is solved with a
Neumann (even) or zero-Dirichlet (odd) condition on the symmetry planes.

The grounded cap closing the aperture uses the same linear fall-off from
segment 5's potential as the boundary-element model.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import pyamg
import scipy.sparse as sp

from .bem import RIM_RAMP
from .geometry import ElectrodeLayout, LayoutError, voltage_vector

log = logging.getLogger(__name__)


class MemoryBudgetError(MemoryError):
    pass


# bytes per unknown: matrix, multigrid hierarchy and Krylov work vectors
_BYTES_PER_UNKNOWN = 1200


@dataclass
class FDSolution:
    spacing: float
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    potential: np.ndarray  # (nx, ny, nz) on the quadrant grid, nan outside
    iterations: int

    def axis(self):
        """On-axis node heights and potentials inside the volume."""
        u = self.potential[0, 0, :]
        ok = np.isfinite(u)
        return self.z[ok], u[ok]

    def axis_potential(self, z):
        """On-axis potential at heights that are grid nodes."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        k = np.rint(z / self.spacing).astype(int)
        if np.any(np.abs(k * self.spacing - z) > 1e-9 * max(1.0, z.max())):
            raise ValueError("axis heights must lie on grid nodes")
        return self.potential[0, 0, k]


def _surface_values(layout, voltages, x, y, z, cap_z):
    """Prescribed potential at boundary points (paraboloid or cap)."""
    spec = layout.spec
    v = voltage_vector(voltages)
    on_cap = z >= cap_z - 1e-12
    out = np.zeros(x.size)
    mirror = ~on_cap
    if mirror.any():
        out[mirror] = layout.boundary_weights(x[mirror], y[mirror], z[mirror]) @ v
    if on_cap.any():
        rho = np.hypot(x[on_cap], y[on_cap])
        R = spec.rim_radius
        ramp = np.clip(1.0 - (R - rho) / RIM_RAMP, 0.0, 1.0)
        phi = np.arctan2(y[on_cap], x[on_cap])
        rim = layout.boundary_weights(R * np.cos(phi), R * np.sin(phi), np.full(phi.size, spec.rim_z))
        out[on_cap] = ramp * (rim @ v)
    return out


class _SurfaceChart:
    """Generatrix coordinate running over the mirror and on across the cap."""

    def __init__(self, layout, cap_z):
        spec = layout.spec
        self.f = spec.focal_length
        self.R = spec.rim_radius
        self.cap_z = cap_z
        self.s_rim = float(spec.arc_length(self.R))
        self.r_tab = np.linspace(0.0, self.R, 20001)
        self.s_tab = spec.arc_length(self.r_tab)

    def to_chart(self, x, y, z):
        rho = np.hypot(x, y)
        phi = np.arctan2(y, x)
        on_cap = z >= self.cap_z - 1e-12
        sig = np.where(on_cap, self.s_rim + (self.R - rho), np.interp(rho, self.r_tab, self.s_tab))
        return sig, phi

    def to_space(self, sig, phi):
        flip = sig < 0
        sig = np.abs(sig)
        phi = np.where(flip, phi + np.pi, phi)
        on_cap = sig > self.s_rim
        rho = np.where(on_cap, self.R - (sig - self.s_rim), np.interp(sig, self.s_tab, self.r_tab))
        z = np.where(on_cap, self.cap_z, rho**2 / (4 * self.f))
        return rho * np.cos(phi), rho * np.sin(phi), z


def _smoothed_values(layout, voltages, x, y, z, cap_z, h, chart):
    """Surface data averaged with a hat kernel of half-width ``h`` in both surface directions.

    Averaging perturbs smooth data by O(h^2) only, but stops the narrow gap
    ramps and pad strips from being aliased by the few grid lines crossing them.
    """
    g, w = np.polynomial.legendre.leggauss(6)
    tau = np.concatenate([-(g + 1) / 2, (g + 1) / 2])
    wt = np.concatenate([w, w]) / 2 * (1 - np.abs(tau))
    wt /= wt.sum()
    sig, phi = chart.to_chart(x, y, z)
    rho = np.maximum(np.hypot(x, y), h)
    out = np.zeros(x.size)
    for ta, wa in zip(tau, wt):
        for tb, wb in zip(tau, wt):
            xs, ys, zs = chart.to_space(sig + h * ta, phi + h * tb / rho)
            out += wa * wb * _surface_values(layout, voltages, xs, ys, zs, cap_z)
    return out


def estimate_unknowns(layout: ElectrodeLayout, spacing: float) -> int:
    """Number of quadrant-grid nodes strictly inside the volume (closed form estimate)."""
    spec = layout.spec
    vol = math.pi * 2.0 * spec.focal_length * spec.rim_z**2  # paraboloid bowl volume
    return int(vol / 4.0 / spacing**3)


def fd_oracle_solve(
    layout: ElectrodeLayout,
    spacing: float,
    voltages,
    max_spacing: float = 0.2,
    memory_budget_mb: float = 2048.0,
    tol: float = 1e-11,
    smooth: bool = True,
) -> FDSolution:
    """Solve Laplace's equation for ``voltages`` on ``layout`` with grid ``spacing`` [mm].

    The cap is placed at the rim height, so use a truncated mirror
    (:meth:`ParaboloidSpec.truncated`) to keep the grid small.  ``smooth``
    averages the surface data over one cell before it is imposed.
    """
    h = float(spacing)
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    if h > max_spacing:
        raise LayoutError(
            f"grid spacing {h} mm exceeds {max_spacing} mm; segment borders and gap ramps "
            "would not be sampled"
        )
    need = estimate_unknowns(layout, h) * _BYTES_PER_UNKNOWN / 2**20
    if need > memory_budget_mb:
        raise MemoryBudgetError(
            f"grid spacing {h} mm needs about {need:.0f} MB, budget is {memory_budget_mb:.0f} MB"
        )

    spec = layout.spec
    f = spec.focal_length
    cap_z = spec.rim_z
    R = spec.rim_radius
    nx = int(math.ceil(R / h)) + 2
    nz = int(math.ceil(cap_z / h)) + 2
    x = h * np.arange(nx)
    y = x.copy()
    z = h * np.arange(nz)
    X, Y, Z = np.meshgrid(x, y, z, indexing="ij")
    inside = (Z > (X**2 + Y**2) / (4 * f)) & (Z < cap_z)

    scale = float(np.abs(voltage_vector(voltages)).max())
    total = np.full(inside.shape, np.nan)
    total[inside] = 0.0
    iters = 0
    for px in (0, 1):
        for py in (0, 1):
            sol, it = _solve_parity(
                layout, voltages, h, x, y, z, inside, cap_z, px, py, tol, smooth, scale
            )
            if sol is not None:
                total[inside] += sol[inside]
                iters += it
    return FDSolution(h, x, y, z, total, iters)


def _parity_values(layout, voltages, px, py, xb, yb, zb, cap_z, h, chart):
    sample = _smoothed_values if chart is not None else lambda *a: _surface_values(*a[:6])
    acc = np.zeros(xb.size)
    for sx in (1, -1):
        for sy in (1, -1):
            w = (sx if px else 1) * (sy if py else 1)
            acc += w * sample(layout, voltages, sx * xb, sy * yb, zb, cap_z, h, chart)
    return 0.25 * acc


def _solve_parity(layout, voltages, h, x, y, z, inside, cap_z, px, py, tol, smooth, scale):
    f = layout.spec.focal_length
    chart = _SurfaceChart(layout, cap_z) if smooth else None
    unknown = inside.copy()
    if px:
        unknown[0, :, :] = False
    if py:
        unknown[:, 0, :] = False
    idx = -np.ones(inside.shape, dtype=np.int64)
    n = int(unknown.sum())
    idx[unknown] = np.arange(n)
    I, J, K = np.nonzero(unknown)
    x0, y0, z0 = x[I], y[J], z[K]

    rows, cols, vals = [], [], []
    diag = np.zeros(n)
    rhs = np.zeros(n)
    data_max = 0.0
    for axis in range(3):
        # distances to the neighbour (or the surface) on both sides, in units of h
        theta = {}
        nb = {}
        bval = {}
        for side in (-1, 1):
            ii, jj, kk = I.copy(), J.copy(), K.copy()
            (ii, jj, kk)[axis][:] += side
            t = np.ones(n)
            val = np.zeros(n)
            mirror = np.zeros(n, dtype=bool)
            if axis < 2:
                at_plane = (ii if axis == 0 else jj) < 0
                # even parity: reflect to the node on the other side
                if axis == 0:
                    ii = np.where(at_plane, 1, ii)
                else:
                    jj = np.where(at_plane, 1, jj)
                mirror = at_plane
            inside_nb = inside[np.clip(ii, 0, inside.shape[0] - 1), np.clip(jj, 0, inside.shape[1] - 1), kk]
            odd_plane = np.zeros(n, dtype=bool)
            if px:
                odd_plane |= ii == 0
            if py:
                odd_plane |= jj == 0
            cut = ~inside_nb & ~mirror
            if cut.any():
                c = np.nonzero(cut)[0]
                xb, yb, zb = x0[c].copy(), y0[c].copy(), z0[c].copy()
                if axis == 0:
                    xb = np.sqrt(np.maximum(4 * f * zb - yb**2, 0.0))
                    t[c] = (xb - x0[c]) / h
                elif axis == 1:
                    yb = np.sqrt(np.maximum(4 * f * zb - xb**2, 0.0))
                    t[c] = (yb - y0[c]) / h
                elif side < 0:
                    zb = (xb**2 + yb**2) / (4 * f)
                    t[c] = (z0[c] - zb) / h
                else:
                    zb = np.full(c.size, cap_z)
                    t[c] = (cap_z - z0[c]) / h
                val[c] = _parity_values(layout, voltages, px, py, xb, yb, zb, cap_z, h, chart)
            # odd-parity symmetry nodes hold zero and are not unknowns
            known_zero = ~cut & odd_plane
            theta[side] = np.clip(t, 1e-8, 1.0)
            nb[side] = np.where(cut | known_zero, -1, idx[ii, jj, np.clip(kk, 0, None)])
            bval[side] = np.where(known_zero, 0.0, val)
        tm, tp = theta[-1], theta[1]
        am = 2.0 / (tm * (tm + tp))
        ap = 2.0 / (tp * (tm + tp))
        diag -= am + ap
        for side, a in ((-1, am), (1, ap)):
            link = nb[side] >= 0
            rows.append(np.nonzero(link)[0])
            cols.append(nb[side][link])
            vals.append(a[link])
            rhs[~link] -= a[~link] * bval[side][~link]
        data_max = max(data_max, float(np.abs(bval[-1]).max()), float(np.abs(bval[1]).max()))
    # parity components that only carry rounding noise are skipped
    if data_max <= 1e-12 * scale:
        return None, 0

    rows.append(np.arange(n))
    cols.append(np.arange(n))
    vals.append(diag)
    # unit diagonal: rows of nodes hugging the wall otherwise dominate the residual norm
    r = np.concatenate(rows)
    scale_row = 1.0 / diag
    A = sp.csr_matrix(
        (np.concatenate(vals) * scale_row[r], (r, np.concatenate(cols))), shape=(n, n)
    )
    rhs = rhs * scale_row
    ml = pyamg.smoothed_aggregation_solver(A, symmetry="nonsymmetric", max_coarse=500)
    res = []
    u = ml.solve(rhs, tol=tol, accel="bicgstab", maxiter=400, residuals=res)
    log.info("fd parity (%d,%d): %d unknowns, %d iterations", px, py, n, len(res))
    out = np.zeros(inside.shape)
    out[unknown] = u
    return out, len(res)


def convergence_study(layout, voltages, spacings=(0.16, 0.08, 0.04), z_samples=None, **kw) -> dict:
    """Axis potentials on successively halved grids with Richardson analysis.

    Returns the observed order, the Richardson extrapolant and per-grid errors
    against it at the common sample heights.
    """
    spacings = tuple(sorted(spacings, reverse=True))
    if len(spacings) != 3 or not all(
        math.isclose(spacings[k] / spacings[k + 1], 2.0) for k in range(2)
    ):
        raise ValueError("need three spacings in ratio 2")
    h0 = spacings[0]
    if z_samples is None:
        z_samples = h0 * np.arange(int(math.ceil(1.0 / h0)), int(math.floor(3.0 / h0)) + 1)
    sols = [fd_oracle_solve(layout, h, voltages, **kw) for h in spacings]
    u = np.array([s.axis_potential(z_samples) for s in sols])
    d1 = np.linalg.norm(u[0] - u[1])
    d2 = np.linalg.norm(u[1] - u[2])
    order = math.log2(d1 / d2)
    extrap = u[2] + (u[2] - u[1]) / (2.0**order - 1.0)
    errors = [float(np.max(np.abs(ui - extrap))) for ui in u]
    return {
        "spacings": spacings,
        "z": z_samples,
        "axis": u,
        "order": order,
        "extrapolated": extrap,
        "errors": errors,
        "solutions": sols,
    }
