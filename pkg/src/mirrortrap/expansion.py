"""Local harmonic-polynomial expansion of the basis fields around a point on the axis.

Each azimuthal mode of a basis potential behaves near the axis as
``rho^m cos(m phi) f_m(z)`` plus the even-derivative corrections that keep
it harmonic.  The on-axis functions ``f_m`` are Taylor-expanded exactly
(Gegenbauer generating function of the ring sources), which turns every
basis field into a polynomial in ``(x, y, z - z_c)``.  Inside a ball that
stays well away from the electrodes the polynomial reproduces the
boundary-element field to near machine precision at a tiny fraction of
the cost, which is what the trajectory integrator needs.
"""

from __future__ import annotations

from math import comb, factorial

import numpy as np
from scipy.signal import convolve2d

from .bem import BasisFieldSet, DomainError
from .geometry import voltage_vector


def _xy_powers(m, degree):
    """``Re (x+iy)^m`` and ``Im (x+iy)^m`` as (degree+1)^2 coefficient grids."""
    re = np.zeros((degree + 1, degree + 1))
    im = np.zeros_like(re)
    for p in range(m + 1):
        c = comb(m, p)
        if p % 2 == 0:
            re[m - p, p] = c * (-1) ** (p // 2)
        else:
            im[m - p, p] = c * (-1) ** ((p - 1) // 2)
    return re, im


def _rho2_power(k, degree):
    out = np.zeros((degree + 1, degree + 1))
    for j in range(k + 1):
        out[2 * j, 2 * (k - j)] = comb(k, j)
    return out


class LocalExpansion:
    """Polynomial surrogate of all basis fields in a ball around ``(0, 0, center)``.

    Parameters
    ----------
    basis : BasisFieldSet
    center : float
        Expansion point on the axis [mm].
    degree : int
        Total polynomial degree.
    radius : float
        Radius [mm] inside which evaluation is allowed.
    """

    def __init__(self, basis: BasisFieldSet, center: float, degree: int = 24, radius: float = 0.6):
        self.basis = basis
        self.center = float(center)
        self.degree = int(degree)
        self.radius = float(radius)
        n = self.degree
        fc, fs = basis.mode_axis_coefficients(self.center, n, self.center)
        n_el = fc.shape[-1]
        coef = np.zeros((n + 1, n + 1, n + 1, n_el))
        for m in range(min(basis.max_mode, n) + 1):
            re, im = _xy_powers(m, n)
            for k in range(n // 2 + 1):
                if m + 2 * k > n:
                    break
                alpha = (-1) ** k * factorial(m) / (4.0**k * factorial(k) * factorial(k + m))
                r2k = _rho2_power(k, n)
                pc = convolve2d(r2k, re)[: n + 1, : n + 1] * alpha
                ps = convolve2d(r2k, im)[: n + 1, : n + 1] * alpha if m else None
                for nn in range(2 * k, n - m + 1):
                    l = nn - 2 * k
                    scale = factorial(nn) / factorial(l)
                    coef[:, :, l, :] += pc[:, :, None] * (scale * fc[m, nn])[None, None, :]
                    if m:
                        coef[:, :, l, :] += ps[:, :, None] * (scale * fs[m, nn])[None, None, :]
        self.coef = coef

    # ------------------------------------------------------------------
    def _local(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float)).copy()
        p[:, 2] -= self.center
        if np.any(np.linalg.norm(p, axis=1) > self.radius + 1e-12):
            raise DomainError(f"point outside the expansion ball (radius {self.radius} mm)")
        return p

    def _powers(self, p):
        k = np.arange(self.degree + 1)
        return p[:, 0:1] ** k, p[:, 1:2] ** k, p[:, 2:3] ** k

    def potential(self, points) -> np.ndarray:
        """Basis potentials ``(P, 11)`` [V per V]."""
        px, py, pz = self._powers(self._local(points))
        return np.einsum("pi,pj,pl,ijle->pe", px, py, pz, self.coef, optimize=True)

    def gradient(self, points) -> np.ndarray:
        """Basis gradients ``(P, 11, 3)`` [V/mm per V]."""
        p = self._local(points)
        px, py, pz = self._powers(p)
        k = np.arange(self.degree + 1)
        dx = np.zeros_like(px)
        dy = np.zeros_like(py)
        dz = np.zeros_like(pz)
        dx[:, 1:] = k[1:] * px[:, :-1]
        dy[:, 1:] = k[1:] * py[:, :-1]
        dz[:, 1:] = k[1:] * pz[:, :-1]
        ein = lambda a, b, c: np.einsum("pi,pj,pl,ijle->pe", a, b, c, self.coef, optimize=True)
        return np.stack([ein(dx, py, pz), ein(px, dy, pz), ein(px, py, dz)], axis=-1)

    def hessian(self, voltages) -> np.ndarray:
        """Hessian [V/mm^2] of the combined potential at the expansion point."""
        c = self.coef @ voltage_vector(voltages)
        h = np.empty((3, 3))
        idx = np.eye(3, dtype=int)
        for a in range(3):
            for b in range(3):
                e = idx[a] + idx[b]
                h[a, b] = c[tuple(e)] * np.prod([factorial(v) for v in e])
        return h

    def derivatives(self, voltages, point, order: int = 3) -> list:
        """Partial derivatives of the combined potential at one point.

        Returns ``[phi, grad, hess, third]`` truncated to ``order`` with
        shapes ``(), (3,), (3, 3), (3, 3, 3)`` in V/mm^k.
        """
        p = self._local(point)[0]
        c = self.coef @ voltage_vector(voltages)
        n = self.degree
        k = np.arange(n + 1)
        out = []
        for o in range(order + 1):
            shape = (3,) * o
            arr = np.zeros(shape)
            for idx in np.ndindex(*shape) if o else [()]:
                a = np.bincount(np.asarray(idx, dtype=int), minlength=3)
                vecs = []
                for ax in range(3):
                    ff = np.ones(n + 1)
                    for s in range(a[ax]):
                        ff = ff * np.clip(k - s, 0, None)
                    pw = np.where(k >= a[ax], p[ax] ** np.clip(k - a[ax], 0, None), 0.0)
                    vecs.append(ff * pw)
                arr[idx] = np.einsum("i,j,l,ijl->", vecs[0], vecs[1], vecs[2], c)
            out.append(arr if o else float(arr))
        return out

    def sparse_terms(self, voltages, reach: float, rel_tol: float = 1e-13):
        """Monomials of the combined gradient, pruned for use within ``reach`` mm.

        Returns ``(powers, coefficients)`` with ``powers`` an ``(n, 3)`` int
        array and ``coefficients`` an ``(n, 3)`` array of gradient
        components [V/mm].  Terms whose bound ``|c| reach^deg`` falls below
        ``rel_tol`` times the largest bound are dropped.
        """
        c = self.coef @ voltage_vector(voltages)
        n = self.degree
        i, j, l = np.meshgrid(np.arange(n + 1), np.arange(n + 1), np.arange(n + 1), indexing="ij")
        comps = []
        for axis, pw in enumerate((i, j, l)):
            g = np.zeros_like(c)
            sl_src = [slice(None)] * 3
            sl_dst = [slice(None)] * 3
            sl_src[axis] = slice(1, None)
            sl_dst[axis] = slice(None, -1)
            g[tuple(sl_dst)] = (pw * c)[tuple(sl_src)]
            comps.append(g)
        g = np.stack(comps, axis=-1)
        deg = i + j + l
        bound = np.abs(g).max(axis=-1) * reach ** deg
        keep = bound > rel_tol * max(bound.max(), 1e-300)
        return np.stack([i[keep], j[keep], l[keep]], axis=1).astype(np.int64), g[keep]

    def self_check(self, n_points: int = 20, radius: float | None = None, seed: int = 0) -> float:
        """Largest relative gradient mismatch against direct boundary-element evaluation."""
        rng = np.random.default_rng(seed)
        r = self.radius if radius is None else radius
        d = rng.normal(size=(n_points, 3))
        d *= (r * rng.uniform(0, 1, n_points) ** (1 / 3) / np.linalg.norm(d, axis=1))[:, None]
        pts = d + np.array([0.0, 0.0, self.center])
        _, g_ref = self.basis.evaluate(pts)
        g = self.gradient(pts)
        scale = np.abs(g_ref).max()
        return float(np.abs(g - g_ref).max() / scale)
