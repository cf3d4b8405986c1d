"""Boundary-element electrostatics for coplanar electrodes.

Collocation BEM with piecewise-constant surface charge on axis-aligned
rectangles and centroid collocation.  The influence integrals (potential and
field of a uniformly charged rectangle) are evaluated in closed form, so the
solved charge basis gives potential and field anywhere in the upper
half-space by superposition.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np
from numba import njit, prange
from scipy.constants import epsilon_0
from scipy.linalg import lu_factor, lu_solve, get_lapack_funcs

from .geometry import TrapLayout, layout_to_dict
from .mesh import PatchMesh, mesh as make_mesh

_K = 1.0 / (4.0 * np.pi * epsilon_0)

#: max-norm boundary-condition residual allowed for a solved basis, volts
SOLVER_TOL = 1e-4

#: reciprocal-condition floor for the dense collocation matrix
RCOND_FLOOR = 1e-12

DENSE_CAP = 6000

GRID_HEADER = "x_m,y_m,z_m,phi_V,Ex_Vpm,Ey_Vpm,Ez_Vpm"


class SolverError(RuntimeError):
    """Raised for ill-conditioned or out-of-tolerance BEM solves."""


# ---------------------------------------------------------------------------
# closed-form rectangle influence integrals

def _asinh_term(p, q, z):
    # p * asinh(q / hypot(p_perp)) with the 0/0 corner handled by its limit 0
    h = np.hypot(p, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = p * np.arcsinh(q / h)
    return np.where(h == 0.0, 0.0, t)


def _corner_G(u, v, z):
    r = np.sqrt(u * u + v * v + z * z)
    g = _asinh_term(u, v, z) + _asinh_term(v, u, z)
    with np.errstate(divide="ignore", invalid="ignore"):
        at = z * np.arctan((u * v) / (z * r))
    g = g - np.where(z == 0.0, 0.0, at)
    return g


def patch_potential(points, centers, half_widths):
    """Potential coefficient matrix: volts at each point per unit surface
    charge density (1 C/m^2) on each rectangle.

    points: (np, 3); centers: (n, 2); half_widths: (n, 2).
    Returns (np, n).  Exact closed form, continuous across z -> 0 off the
    charged region.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dx = points[:, 0:1] - centers[None, :, 0]
    dy = points[:, 1:2] - centers[None, :, 1]
    z = np.abs(points[:, 2:3]) * np.ones_like(dx)
    a = half_widths[None, :, 0]
    b = half_widths[None, :, 1]
    u1, u2 = dx - a, dx + a
    v1, v2 = dy - b, dy + b
    s = (_corner_G(u2, v2, z) - _corner_G(u1, v2, z)
         - _corner_G(u2, v1, z) + _corner_G(u1, v1, z))
    return _K * s


def patch_field(points, centers, half_widths):
    """Field coefficient tensor: (Ex, Ey, Ez) in V/m at each point per unit
    surface charge density on each rectangle.  Returns (np, n, 3).

    Analytic gradient of patch_potential; valid for z != 0 (the normal
    component is discontinuous across the charged plane).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    dx = points[:, 0:1] - centers[None, :, 0]
    dy = points[:, 1:2] - centers[None, :, 1]
    zval = points[:, 2:3]
    z = zval * np.ones_like(dx)
    a = half_widths[None, :, 0]
    b = half_widths[None, :, 1]
    u1, u2 = dx - a, dx + a
    v1, v2 = dy - b, dy + b

    def corner_sum(f):
        return f(u2, v2, z) - f(u1, v2, z) - f(u2, v1, z) + f(u1, v1, z)

    def fx(u, v, zz):
        return np.arcsinh(v / np.hypot(u, zz))

    def fy(u, v, zz):
        return np.arcsinh(u / np.hypot(v, zz))

    def fz(u, v, zz):
        r = np.sqrt(u * u + v * v + zz * zz)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.arctan((u * v) / (zz * r))
        return np.where(zz == 0.0, 0.0, t)

    ex = -_K * corner_sum(fx)
    ey = -_K * corner_sum(fy)
    ez = _K * corner_sum(fz)
    return np.stack([ex, ey, ez], axis=-1)


@njit(parallel=True, cache=True)
def _field_sigma_kernel(points, centers, half_widths, sigma, far_factor):
    """Field at many points from a fixed charge distribution; the hot path
    for sampling field grids (same closed forms as patch_field).

    With far_factor > 0, patches farther than far_factor x their larger
    half-width are treated as point charges (a flat uniform rectangle has no
    dipole moment about its centroid, so the leading error is quadrupole,
    ~far_factor^-2 per patch).
    """
    n_pts = points.shape[0]
    n = centers.shape[0]
    out = np.zeros((n_pts, 3))
    for p in prange(n_pts):
        x = points[p, 0]
        y = points[p, 1]
        z = points[p, 2]
        ex = 0.0
        ey = 0.0
        ez = 0.0
        for j in range(n):
            s = sigma[j]
            if s == 0.0:
                continue
            dx = x - centers[j, 0]
            dy = y - centers[j, 1]
            hx = half_widths[j, 0]
            hy = half_widths[j, 1]
            if far_factor > 0.0:
                h = hx if hx > hy else hy
                r2 = dx * dx + dy * dy + z * z
                if r2 > (far_factor * h) ** 2:
                    w = 4.0 * hx * hy * s / (r2 * np.sqrt(r2))
                    ex += w * dx
                    ey += w * dy
                    ez += w * z
                    continue
            u1 = dx - hx
            u2 = dx + hx
            v1 = dy - hy
            v2 = dy + hy
            sx = 0.0
            sy = 0.0
            sz = 0.0
            for cu in range(2):
                u = u2 if cu == 0 else u1
                for cv in range(2):
                    v = v2 if cv == 0 else v1
                    sign = 1.0 if cu == cv else -1.0
                    r = np.sqrt(u * u + v * v + z * z)
                    sx += sign * np.arcsinh(v / np.hypot(u, z))
                    sy += sign * np.arcsinh(u / np.hypot(v, z))
                    if z != 0.0:
                        sz += sign * np.arctan(u * v / (z * r))
            ex -= sx * s
            ey -= sy * s
            ez += sz * s
        out[p, 0] = _K * ex
        out[p, 1] = _K * ey
        out[p, 2] = _K * ez
    return out


# ---------------------------------------------------------------------------
# basis solve

@dataclass(frozen=True)
class BasisSolution:
    """Per-electrode unit-voltage surface-charge solutions on a mesh.

    sigma[e] solves the problem with 1 V on electrode e and 0 V on all
    others; any voltage assignment is a weighted sum of these bases.
    """

    mesh: PatchMesh
    sigma: np.ndarray          # (n_electrodes, n_patches), C/m^2
    residual: float            # max-norm boundary-condition residual, V
    tolerance: float

    def _index(self, name: str) -> int:
        return self.mesh.electrode_names.index(name)

    def combined_sigma(self, voltages: Mapping[str, float]) -> np.ndarray:
        sig = np.zeros(self.mesh.n_patches)
        for name, v in voltages.items():
            if name not in self.mesh.electrode_names:
                raise KeyError(f"unknown electrode {name!r}")
            sig += v * self.sigma[self._index(name)]
        return sig

    def potential(self, voltages: Mapping[str, float], points) -> np.ndarray:
        """Potential (V) at points for the given electrode voltages."""
        sig = self.combined_sigma(voltages)
        return _chunked_dot(points, self.mesh, sig, patch_potential)

    def field(self, voltages: Mapping[str, float], points, *,
              far_factor: float = 0.0) -> np.ndarray:
        """Electric field (V/m, 3-vectors) at points.

        far_factor > 0 enables the point-charge approximation for patches
        farther than far_factor half-widths (bulk-sampling speedup; leave 0
        for exact evaluation).
        """
        sig = self.combined_sigma(voltages)
        points = np.ascontiguousarray(np.atleast_2d(
            np.asarray(points, dtype=float)))
        return _field_sigma_kernel(points, self.mesh.centers,
                                   self.mesh.half_widths, sig,
                                   float(far_factor))

    def total_charge(self, name: str) -> float:
        """Total induced charge (C) of the unit-voltage basis of one
        electrode."""
        return float(np.sum(self.sigma[self._index(name)] * self.mesh.areas))

    # -- serialization ------------------------------------------------------

    def save(self, path) -> None:
        np.savez_compressed(
            path,
            centers=self.mesh.centers,
            half_widths=self.mesh.half_widths,
            owner=self.mesh.owner,
            ranges=np.asarray(self.mesh.ranges, dtype=np.int64),
            sigma=self.sigma,
            meta=np.frombuffer(json.dumps({
                "version": 1,
                "electrode_names": list(self.mesh.electrode_names),
                "residual": self.residual,
                "tolerance": self.tolerance,
            }).encode(), dtype=np.uint8),
        )

    @classmethod
    def load(cls, path) -> "BasisSolution":
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            if meta.get("version") != 1:
                raise SolverError(f"unsupported basis cache version in {path}")
            m = PatchMesh(
                centers=z["centers"],
                half_widths=z["half_widths"],
                owner=z["owner"],
                electrode_names=tuple(meta["electrode_names"]),
                ranges=tuple((int(a), int(b)) for a, b in z["ranges"]),
            )
            return cls(mesh=m, sigma=z["sigma"],
                       residual=float(meta["residual"]),
                       tolerance=float(meta["tolerance"]))


_CHUNK = 4096


def _chunked_dot(points, m: PatchMesh, sig, coeff_fn):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.empty(len(points))
    for lo in range(0, len(points), _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, len(points)))
        out[sl] = coeff_fn(points[sl], m.centers, m.half_widths) @ sig
    return out


def solve_basis(m: PatchMesh, tolerance: float = SOLVER_TOL) -> BasisSolution:
    """Solve the collocation system A sigma = b for every electrode's
    unit-voltage problem (1 V on it, 0 V elsewhere).

    A_ij is the potential at the centroid of patch i per unit charge density
    on patch j; one dense LU factorization serves all right-hand sides.
    """
    n = m.n_patches
    if n > DENSE_CAP:
        raise SolverError(f"{n} patches exceeds dense-solve cap {DENSE_CAP}")
    pts = np.column_stack([m.centers, np.zeros(n)])
    A = np.empty((n, n))
    for lo in range(0, n, _CHUNK):
        sl = slice(lo, min(lo + _CHUNK, n))
        A[sl] = patch_potential(pts[sl], m.centers, m.half_widths)

    anorm = np.abs(A).sum(axis=0).max()
    lu, piv = lu_factor(A)
    gecon, = get_lapack_funcs(("gecon",), (A,))
    rcond, _ = gecon(lu, anorm)
    if rcond < RCOND_FLOOR:
        raise SolverError(
            f"collocation matrix nearly singular (rcond {rcond:.2e}); "
            "refine the mesh or merge degenerate patches")

    ne = len(m.electrode_names)
    B = np.zeros((n, ne))
    for e in range(ne):
        lo, hi = m.ranges[e]
        B[lo:hi, e] = 1.0
    sigma = lu_solve((lu, piv), B)

    resid = float(np.max(np.abs(A @ sigma - B)))
    if resid > tolerance:
        raise SolverError(
            f"boundary-condition residual {resid:.3e} V exceeds tolerance "
            f"{tolerance:.1e} V")
    return BasisSolution(mesh=m, sigma=np.ascontiguousarray(sigma.T),
                         residual=resid, tolerance=tolerance)


# ---------------------------------------------------------------------------
# cached end-to-end solve

def layout_hash(layout: TrapLayout, resolution: int) -> str:
    doc = json.dumps({"layout": layout_to_dict(layout),
                      "resolution": resolution}, sort_keys=True)
    return hashlib.sha256(doc.encode()).hexdigest()[:16]


def solve_layout(layout: TrapLayout, resolution: int = 6, *,
                 cache_dir=None) -> BasisSolution:
    """Mesh and solve a layout, reusing a cached basis when available.

    The cache key is a content hash of (layout, resolution), so edits to the
    geometry invalidate stale entries automatically.
    """
    if cache_dir is not None:
        cache_dir = Path(cache_dir)
        cache_dir.mkdir(parents=True, exist_ok=True)
        path = cache_dir / f"basis_{layout_hash(layout, resolution)}.npz"
        if path.exists():
            return BasisSolution.load(path)
    basis = solve_basis(make_mesh(layout, resolution))
    if cache_dir is not None:
        basis.save(path)
    return basis


# ---------------------------------------------------------------------------
# grid export

def export_grid(basis: BasisSolution, voltages: Mapping[str, float],
                box, spacing: float, path) -> int:
    """Sample potential and field on a regular grid inside box
    ((xmin, xmax), (ymin, ymax), (zmin, zmax)) and write CSV rows.

    Returns the number of data rows written.
    """
    (x0, x1), (y0, y1), (z0, z1) = box
    if z0 <= 0:
        raise ValueError("export box must lie in the upper half-space (z > 0)")

    def axis(a, b):
        if b < a:
            return np.empty(0)
        return a + spacing * np.arange(int(np.floor((b - a) / spacing)) + 1)

    xs, ys, zs = axis(x0, x1), axis(y0, y1), axis(z0, z1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    with open(path, "w") as f:
        f.write(GRID_HEADER + "\n")
        if len(pts) == 0:
            return 0
        phi = basis.potential(voltages, pts)
        E = basis.field(voltages, pts)
        for p, v, e in zip(pts, phi, E):
            f.write(",".join(repr(float(c)) for c in (*p, v, *e)) + "\n")
    return len(pts)
