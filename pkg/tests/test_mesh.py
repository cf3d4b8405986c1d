import numpy as np
import pytest

from surftrap.geometry import Electrode, TrapLayout, rect_polygon
from surftrap.mesh import AREA_TOL, MeshError, mesh


def _layout(polys_by_name, extent=(-5e-3, 5e-3, -5e-3, 5e-3)):
    electrodes = tuple(
        Electrode(name, "rf" if i == 0 else "dc",
                  polys if isinstance(polys, tuple) else (polys,))
        for i, (name, polys) in enumerate(polys_by_name.items()))
    return TrapLayout("t", electrodes, extent)


SQUARE = _layout({"rf": rect_polygon(-1e-3, 1e-3, -1e-3, 1e-3)})


def test_area_preserved_per_electrode():
    m = mesh(SQUARE, 6)
    assert float(m.areas.sum()) == pytest.approx(4e-6, rel=AREA_TOL)


def test_owner_and_ranges_consistent():
    lay = _layout({
        "rf": rect_polygon(-1e-3, 1e-3, -1e-3, 1e-3),
        "dc1": rect_polygon(1.5e-3, 2.5e-3, -1e-3, 1e-3),
    })
    m = mesh(lay, 4)
    assert m.electrode_names == ("rf", "dc1")
    for ei, (lo, hi) in enumerate(m.ranges):
        assert hi > lo
        assert np.all(m.owner[lo:hi] == ei)
    assert m.ranges[-1][1] == m.n_patches
    sl = m.electrode_patches("dc1")
    assert (sl.start, sl.stop) == m.ranges[1]


def test_l_shape_decomposition_covers_area():
    lshape = np.array([[0, 0], [2e-3, 0], [2e-3, 1e-3], [1e-3, 1e-3],
                       [1e-3, 2e-3], [0, 2e-3]], dtype=float)
    m = mesh(_layout({"rf": lshape}), 4)
    assert float(m.areas.sum()) == pytest.approx(3e-6, rel=AREA_TOL)


def test_non_rectilinear_polygon_rejected():
    tri = np.array([[0, 0], [1e-3, 0], [0.5e-3, 1e-3]])
    with pytest.raises(MeshError, match="rectilinear"):
        mesh(_layout({"rf": tri}), 4)


def test_resolution_floor():
    with pytest.raises(MeshError):
        mesh(SQUARE, 1)


def test_patch_cap_suggests_coarser_resolution():
    with pytest.raises(MeshError, match="try resolution"):
        mesh(SQUARE, 200, max_patches=100)


def test_graded_mesh_refines_edges():
    m = mesh(SQUARE, 8)
    # the smallest patch width must be smaller than the largest: grading
    assert m.half_widths.min() < 0.5 * m.half_widths.max()
    # edge columns use the finest cells
    xmin_patch = m.centers[np.argmin(m.centers[:, 0])]
    assert m.half_widths[np.argmin(m.centers[:, 0]), 0] == pytest.approx(
        m.half_widths[:, 0].min())
    assert xmin_patch[0] < -0.9e-3


def test_ungraded_mesh_is_congruent():
    m = mesh(SQUARE, 8, graded=False)
    assert np.allclose(m.half_widths, m.half_widths[0])
    assert float(m.areas.sum()) == pytest.approx(4e-6, rel=1e-12)


def test_multi_polygon_electrode():
    lay = _layout({"rf": (rect_polygon(-2e-3, -1e-3, 0, 1e-3),
                          rect_polygon(1e-3, 2e-3, 0, 1e-3))})
    m = mesh(lay, 4)
    assert float(m.areas.sum()) == pytest.approx(2e-6, rel=AREA_TOL)
    assert m.ranges == ((0, m.n_patches),)


def test_bundled_layout_meshes_under_cap(bundled_layout):
    m = mesh(bundled_layout, 6)
    assert 2 <= m.n_patches <= 6000
    total = sum(e.area() for e in bundled_layout.electrodes)
    assert float(m.areas.sum()) == pytest.approx(total, rel=AREA_TOL)
