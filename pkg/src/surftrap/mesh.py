"""Rectangle tiling of rectilinear electrode polygons.

Each electrode polygon is decomposed into axis-aligned rectangles, which are
then subdivided into patches with 2:1 size grading toward rectangle edges
(surface charge diverges at conductor edges, so edge patches are finer).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon as _SPolygon
from shapely.geometry import Point as _SPoint

from .geometry import TrapLayout

#: tiled area must match polygon area to this relative tolerance
AREA_TOL = 5e-3

_AXIS_TOL = 1e-12


class MeshError(ValueError):
    """Raised when a layout cannot be tiled or the mesh is too large."""


@dataclass(frozen=True)
class PatchMesh:
    """Axis-aligned rectangular patches covering every electrode.

    centers, half_widths: (n, 2) arrays in meters; owner[i] indexes
    electrode_names; patches of one electrode occupy a contiguous index
    range given by ranges[e] = (start, stop).
    """

    centers: np.ndarray
    half_widths: np.ndarray
    owner: np.ndarray
    electrode_names: tuple[str, ...]
    ranges: tuple[tuple[int, int], ...]

    @property
    def n_patches(self) -> int:
        return len(self.centers)

    @property
    def areas(self) -> np.ndarray:
        return 4.0 * self.half_widths[:, 0] * self.half_widths[:, 1]

    def electrode_patches(self, name: str) -> slice:
        i = self.electrode_names.index(name)
        return slice(*self.ranges[i])


def _is_rectilinear(poly: np.ndarray) -> bool:
    d = np.diff(np.vstack([poly, poly[:1]]), axis=0)
    return bool(np.all((np.abs(d[:, 0]) < _AXIS_TOL) | (np.abs(d[:, 1]) < _AXIS_TOL)))


def _decompose(poly: np.ndarray, name: str) -> list[tuple[float, float, float, float]]:
    """Split a rectilinear polygon into maximal horizontal-run rectangles.

    Returns (xmin, xmax, ymin, ymax) tuples whose union equals the polygon.
    """
    if not _is_rectilinear(poly):
        raise MeshError(
            f"electrode {name!r}: polygon is not rectilinear; "
            "pre-approximate curved shapes (see rectilinear_approximation)")
    sp = _SPolygon(poly)
    xs = np.unique(poly[:, 0])
    ys = np.unique(poly[:, 1])
    rects = []
    for j in range(len(ys) - 1):
        y0, y1 = ys[j], ys[j + 1]
        yc = 0.5 * (y0 + y1)
        run_start = None
        for i in range(len(xs)):
            inside = False
            if i < len(xs) - 1:
                xc = 0.5 * (xs[i] + xs[i + 1])
                inside = sp.contains(_SPoint(xc, yc))
            if inside and run_start is None:
                run_start = xs[i]
            if not inside and run_start is not None:
                rects.append((run_start, xs[i], y0, y1))
                run_start = None
        if run_start is not None:
            rects.append((run_start, xs[-1], y0, y1))
    if not rects:
        raise MeshError(f"electrode {name!r}: decomposition produced no "
                        "rectangles (degenerate polygon?)")
    area = sum((r[1] - r[0]) * (r[3] - r[2]) for r in rects)
    if abs(area - sp.area) > AREA_TOL * sp.area:
        raise MeshError(
            f"electrode {name!r}: tiled area {area:.6e} differs from polygon "
            f"area {sp.area:.6e} by more than {AREA_TOL:.1%}")
    return rects


def _graded_edges(length: float, n: int) -> np.ndarray:
    """Cell boundaries for n cells over [0, length] with 2:1 grading toward
    both ends (edge cells are up to 4x finer than interior cells)."""
    if n <= 1:
        return np.array([0.0, length])
    idx = np.arange(n)
    level = np.minimum(idx, n - 1 - idx)
    w = np.minimum(2.0 ** level, 4.0)
    edges = np.concatenate([[0.0], np.cumsum(w)])
    return edges * (length / edges[-1])


def _subdivide(rect, h: float, max_aspect: float = 4.0):
    """Yield (center, half_width) patches for one rectangle: short-side
    target h, long-side target capped at max_aspect * h."""
    xmin, xmax, ymin, ymax = rect
    w, hgt = xmax - xmin, ymax - ymin
    nx = max(1, int(np.ceil(w / h))) if w <= hgt else max(1, int(np.ceil(w / (max_aspect * h))))
    ny = max(1, int(np.ceil(hgt / h))) if hgt <= w else max(1, int(np.ceil(hgt / (max_aspect * h))))
    ex = xmin + _graded_edges(w, nx)
    ey = ymin + _graded_edges(hgt, ny)
    cx = 0.5 * (ex[:-1] + ex[1:])
    cy = 0.5 * (ey[:-1] + ey[1:])
    hx = 0.5 * np.diff(ex)
    hy = 0.5 * np.diff(ey)
    for i in range(nx):
        for j in range(ny):
            yield (cx[i], cy[j]), (hx[i], hy[j])


def mesh(layout: TrapLayout, resolution: int = 6, *, max_patches: int = 6000,
         graded: bool = True) -> PatchMesh:
    """Tile every electrode of a valid layout into rectangular patches.

    resolution is the patch count across the smallest electrode feature
    (the smallest polygon bounding-box side).  Set graded=False for uniform
    (ungraded) subdivision; congruent-patch meshes are exactly reciprocal.
    """
    if resolution < 2:
        raise MeshError("resolution must be >= 2")

    feature = np.inf
    decomps: list[tuple[str, list]] = []
    for e in layout.electrodes:
        rects = []
        for poly in e.polygons:
            rects.extend(_decompose(poly, e.name))
            feature = min(feature,
                          poly[:, 0].max() - poly[:, 0].min(),
                          poly[:, 1].max() - poly[:, 1].min())
        decomps.append((e.name, rects))
    h = feature / resolution

    centers, half_widths, owner, ranges = [], [], [], []
    start = 0
    for ei, (name, rects) in enumerate(decomps):
        for rect in rects:
            if graded:
                patches = _subdivide(rect, h)
            else:
                patches = _subdivide_uniform(rect, h)
            for c, hw in patches:
                centers.append(c)
                half_widths.append(hw)
                owner.append(ei)
        ranges.append((start, len(centers)))
        start = len(centers)

    n = len(centers)
    if n > max_patches:
        suggested = max(2, int(resolution * np.sqrt(max_patches / n)))
        raise MeshError(
            f"mesh has {n} patches (cap {max_patches}); try resolution "
            f"{suggested}")

    m = PatchMesh(
        centers=np.asarray(centers, dtype=float),
        half_widths=np.asarray(half_widths, dtype=float),
        owner=np.asarray(owner, dtype=np.int64),
        electrode_names=tuple(e.name for e in layout.electrodes),
        ranges=tuple(ranges),
    )
    _check_mesh(m, layout)
    return m


def _subdivide_uniform(rect, h: float):
    xmin, xmax, ymin, ymax = rect
    w, hgt = xmax - xmin, ymax - ymin
    nx = max(1, int(np.ceil(w / h)))
    ny = max(1, int(np.ceil(hgt / h)))
    ex = np.linspace(xmin, xmax, nx + 1)
    ey = np.linspace(ymin, ymax, ny + 1)
    hx = 0.5 * (ex[1] - ex[0])
    hy = 0.5 * (ey[1] - ey[0])
    for i in range(nx):
        for j in range(ny):
            yield (0.5 * (ex[i] + ex[i + 1]), 0.5 * (ey[j] + ey[j + 1])), (hx, hy)


def _check_mesh(m: PatchMesh, layout: TrapLayout) -> None:
    for ei, e in enumerate(layout.electrodes):
        sl = slice(*m.ranges[ei])
        tiled = float(np.sum(m.areas[sl]))
        poly_area = e.area()
        if abs(tiled - poly_area) > AREA_TOL * poly_area:
            raise MeshError(
                f"electrode {e.name!r}: patch area {tiled:.6e} vs polygon "
                f"area {poly_area:.6e} exceeds {AREA_TOL:.1%}")
