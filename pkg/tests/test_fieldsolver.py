import numpy as np
import pytest
from scipy.constants import epsilon_0
from scipy.integrate import dblquad

from surftrap.geometry import Electrode, TrapLayout, rect_polygon
from surftrap.mesh import mesh
from surftrap.fieldsolver import (BasisSolution, SolverError, export_grid,
                                  patch_field, patch_potential, solve_basis,
                                  solve_layout)

_K = 1.0 / (4.0 * np.pi * epsilon_0)


def _square_layout(side=2e-3):
    h = side / 2
    return TrapLayout("sq", (
        Electrode("rf", "rf", (rect_polygon(-h, h, -h, h),)),
    ), (-5e-3, 5e-3, -5e-3, 5e-3))


@pytest.fixture(scope="module")
def square_basis():
    return solve_basis(mesh(_square_layout(), 8))


# ---------------------------------------------------------------------------
# closed-form rectangle integrals against numerical quadrature

@pytest.mark.parametrize("point", [
    (0.3, 0.2, 0.5),
    (1.4, -0.9, 0.05),
    (0.0, 0.0, 2.0),
    (0.69, 0.0, 0.3),      # near an edge
])
def test_patch_potential_matches_quadrature(point):
    a, b = 0.7, 0.4        # half widths
    x, y, z = point

    def integrand(yp, xp):
        return _K / np.sqrt((x - xp) ** 2 + (y - yp) ** 2 + z ** 2)

    ref, err = dblquad(integrand, -a, a, -b, b, epsabs=1e-12, epsrel=1e-10)
    got = float(patch_potential(np.array([[x, y, z]]),
                                np.array([[0.0, 0.0]]),
                                np.array([[a, b]]))[0, 0])
    assert got == pytest.approx(ref, rel=1e-8)


def test_patch_potential_continuous_through_plane_off_patch():
    pt_hi = np.array([[1.5, 0.0, 1e-9]])
    pt_0 = np.array([[1.5, 0.0, 0.0]])
    c = np.array([[0.0, 0.0]])
    hw = np.array([[0.5, 0.5]])
    assert patch_potential(pt_hi, c, hw)[0, 0] == pytest.approx(
        patch_potential(pt_0, c, hw)[0, 0], rel=1e-6)


def test_patch_field_is_gradient_of_potential():
    c = np.array([[0.0, 0.0]])
    hw = np.array([[0.7, 0.4]])
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1.5, 1.5, size=(6, 3))
    pts[:, 2] = np.abs(pts[:, 2]) + 0.2
    E = patch_field(pts, c, hw)[:, 0, :]
    h = 1e-7
    for k in range(3):
        dp = pts.copy()
        dm = pts.copy()
        dp[:, k] += h
        dm[:, k] -= h
        fd = -(patch_potential(dp, c, hw) - patch_potential(dm, c, hw))[:, 0] \
            / (2 * h)
        assert np.allclose(E[:, k], fd, rtol=1e-6, atol=1e-6 * np.abs(E).max())


def test_near_plane_field_approaches_sheet_limit():
    # directly above the middle of a large patch, E_z -> sigma / (2 eps0)
    c = np.array([[0.0, 0.0]])
    hw = np.array([[50.0, 50.0]])
    E = patch_field(np.array([[0.0, 0.0, 1e-3]]), c, hw)[0, 0]
    assert E[2] == pytest.approx(1.0 / (2.0 * epsilon_0), rel=1e-3)
    assert abs(E[0]) < 1e-9 * abs(E[2])


# ---------------------------------------------------------------------------
# solved bases

def test_boundary_condition_met_between_collocation_points(square_basis):
    rng = np.random.default_rng(5)
    pts = np.column_stack([rng.uniform(-0.9e-3, 0.9e-3, size=(40, 2)),
                           np.full(40, 1e-7)])
    phi = square_basis.potential({"rf": 1.0}, pts)
    assert np.all(np.abs(phi - 1.0) < 0.05)


def test_solver_residual_within_tolerance(square_basis):
    assert square_basis.residual <= square_basis.tolerance


def test_superposition_of_bases():
    lay = TrapLayout("two", (
        Electrode("a", "rf", (rect_polygon(-2e-3, -0.2e-3, -1e-3, 1e-3),)),
        Electrode("b", "dc", (rect_polygon(0.2e-3, 2e-3, -1e-3, 1e-3),)),
    ), (-5e-3, 5e-3, -5e-3, 5e-3))
    basis = solve_basis(mesh(lay, 5))
    pts = np.array([[0.0, 0.0, 1e-3], [0.5e-3, 0.3e-3, 2e-3]])
    combo = basis.potential({"a": 2.0, "b": -1.5}, pts)
    parts = (2.0 * basis.potential({"a": 1.0}, pts)
             - 1.5 * basis.potential({"b": 1.0}, pts))
    assert np.allclose(combo, parts, rtol=1e-12)


def test_far_field_looks_like_point_charge(square_basis):
    q = square_basis.total_charge("rf")
    r = 0.2  # 100x the electrode size
    phi = float(square_basis.potential({"rf": 1.0},
                                       np.array([[0.0, 0.0, r]]))[0])
    assert phi == pytest.approx(_K * q / r, rel=5e-3)


def test_capacitance_matrix_reciprocity():
    # congruent ungraded patches make the collocation matrix symmetric,
    # so the induced-charge matrix must be symmetric too
    lay = TrapLayout("two", (
        Electrode("a", "rf", (rect_polygon(-2e-3, -0.5e-3, -1e-3, 1e-3),)),
        Electrode("b", "dc", (rect_polygon(0.5e-3, 2e-3, -1e-3, 1e-3),)),
    ), (-5e-3, 5e-3, -5e-3, 5e-3))
    basis = solve_basis(mesh(lay, 6, graded=False))
    areas = basis.mesh.areas
    sl_a = basis.mesh.electrode_patches("a")
    sl_b = basis.mesh.electrode_patches("b")
    c_ab = float(np.sum(basis.sigma[0][sl_b] * areas[sl_b]))
    c_ba = float(np.sum(basis.sigma[1][sl_a] * areas[sl_a]))
    assert c_ab == pytest.approx(c_ba, rel=1e-8)


def test_patch_cap_enforced_by_solver():
    lay = _square_layout()
    with pytest.raises(SolverError, match="cap"):
        solve_basis(mesh(lay, 90, max_patches=20000))


def test_far_factor_approximation_accuracy(bundled_basis):
    rng = np.random.default_rng(7)
    pts = np.column_stack([
        rng.uniform(-3e-3, 3e-3, 30),
        rng.uniform(-5e-3, 5e-3, 30),
        rng.uniform(2e-4, 5e-3, 30),
    ])
    rf = {n: 1.0 for n in bundled_basis.mesh.electrode_names
          if n.startswith("rf")}
    exact = bundled_basis.field(rf, pts)
    approx = bundled_basis.field(rf, pts, far_factor=16.0)
    scale = np.abs(exact).max()
    assert np.abs(approx - exact).max() < 2e-3 * scale


def test_basis_save_load_round_trip(square_basis, tmp_path):
    p = tmp_path / "basis.npz"
    square_basis.save(p)
    back = BasisSolution.load(p)
    assert np.array_equal(back.sigma, square_basis.sigma)
    assert np.array_equal(back.mesh.centers, square_basis.mesh.centers)
    assert back.mesh.electrode_names == square_basis.mesh.electrode_names
    assert back.mesh.ranges == square_basis.mesh.ranges
    assert back.residual == square_basis.residual


def test_solve_layout_cache_round_trip(tmp_path):
    lay = _square_layout()
    b1 = solve_layout(lay, 5, cache_dir=tmp_path)
    assert list(tmp_path.glob("basis_*.npz"))
    b2 = solve_layout(lay, 5, cache_dir=tmp_path)
    assert np.array_equal(b1.sigma, b2.sigma)


def test_export_grid(square_basis, tmp_path):
    p = tmp_path / "grid.csv"
    box = ((-1e-3, 1e-3), (-1e-3, 1e-3), (5e-4, 1.5e-3))
    n = export_grid(square_basis, {"rf": 1.0}, box, 5e-4, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "x_m,y_m,z_m,phi_V,Ex_Vpm,Ey_Vpm,Ez_Vpm"
    assert n == 5 * 5 * 3
    assert len(lines) == n + 1
    # values round-trip through repr
    row = [float(v) for v in lines[1].split(",")]
    phi = float(square_basis.potential({"rf": 1.0},
                                       np.array([row[:3]]))[0])
    assert row[3] == phi


def test_export_grid_rejects_surface_plane(square_basis, tmp_path):
    box = ((-1e-3, 1e-3), (-1e-3, 1e-3), (0.0, 1e-3))
    with pytest.raises(ValueError):
        export_grid(square_basis, {"rf": 1.0}, box, 5e-4,
                    tmp_path / "g.csv")
