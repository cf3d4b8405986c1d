import numpy as np
import pytest

from surftrap.geometry import (SR88, DriveConfig, Electrode, LayoutError,
                               Species, TrapLayout, load_layout,
                               rect_polygon, rectilinear_approximation,
                               save_layout, validate)


def _simple_layout(**kw):
    electrodes = kw.pop("electrodes", (
        Electrode("rf", "rf", (rect_polygon(-1e-3, 1e-3, -2e-3, 2e-3),)),
    ))
    extent = kw.pop("extent", (-3e-3, 3e-3, -3e-3, 3e-3))
    return TrapLayout(name=kw.pop("name", "t"), electrodes=electrodes,
                      extent=extent)


def test_valid_layout_has_no_violations():
    assert validate(_simple_layout()) == []


def test_duplicate_names_flagged():
    lay = _simple_layout(electrodes=(
        Electrode("a", "rf", (rect_polygon(-1e-3, 0, 0, 1e-3),)),
        Electrode("a", "dc", (rect_polygon(1e-3, 2e-3, 0, 1e-3),)),
    ))
    assert any("duplicate" in v for v in validate(lay))


def test_overlap_flagged():
    lay = _simple_layout(electrodes=(
        Electrode("a", "rf", (rect_polygon(-1e-3, 1e-3, 0, 1e-3),)),
        Electrode("b", "dc", (rect_polygon(0, 2e-3, 0, 1e-3),)),
    ))
    assert any("overlap" in v for v in validate(lay))


def test_touching_edges_allowed():
    lay = _simple_layout(electrodes=(
        Electrode("a", "rf", (rect_polygon(-1e-3, 0, 0, 1e-3),)),
        Electrode("b", "dc", (rect_polygon(0, 1e-3, 0, 1e-3),)),
    ))
    assert validate(lay) == []


def test_outside_extent_flagged():
    lay = _simple_layout(extent=(-0.5e-3, 0.5e-3, -0.5e-3, 0.5e-3))
    assert any("outside extent" in v for v in validate(lay))


def test_missing_rf_flagged():
    lay = _simple_layout(electrodes=(
        Electrode("a", "dc", (rect_polygon(-1e-3, 1e-3, 0, 1e-3),)),
    ))
    assert any("no rf-role" in v for v in validate(lay))


def test_bad_role_raises():
    with pytest.raises(LayoutError):
        Electrode("a", "antenna", (rect_polygon(0, 1, 0, 1),))


def test_degenerate_polygon_flagged():
    lay = _simple_layout(electrodes=(
        Electrode("a", "rf", (np.array([[0.0, 0.0], [1e-3, 0.0]]),)),
    ))
    assert validate(lay)


def test_save_load_round_trip_bit_exact(tmp_path):
    lay = _simple_layout(electrodes=(
        Electrode("rf", "rf",
                  (rect_polygon(-1.1e-3, 0.123456789e-3, -2e-3, 2e-3),)),
        Electrode("dc1", "dc", (rect_polygon(1e-3, 2e-3, 0.0, 1e-3),)),
    ))
    p = tmp_path / "lay.json"
    save_layout(lay, p)
    back = load_layout(p)
    assert back.name == lay.name
    assert back.extent == lay.extent
    for a, b in zip(back.electrodes, lay.electrodes):
        assert a.name == b.name and a.role == b.role
        for pa, pb in zip(a.polygons, b.polygons):
            assert np.array_equal(pa, pb)


def test_load_invalid_layout_raises(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(LayoutError):
        load_layout(p)


def test_drive_config_dict_round_trip():
    d = DriveConfig(300.0, 2 * np.pi * 8e6, {"dc1": 0.3})
    back = DriveConfig.from_dict(d.to_dict())
    assert back.rf_amplitude == d.rf_amplitude
    assert back.rf_angular_frequency == pytest.approx(
        d.rf_angular_frequency, rel=1e-15)
    assert back.dc_voltages == d.dc_voltages


def test_drive_config_validation():
    with pytest.raises(ValueError):
        DriveConfig(300.0, 0.0)
    with pytest.raises(ValueError):
        DriveConfig(-1.0, 1.0)


def test_with_amplitude_keeps_everything_else():
    d = DriveConfig(300.0, 2 * np.pi * 8e6, {"dc1": 0.3})
    d2 = d.with_amplitude(600.0)
    assert d2.rf_amplitude == 600.0
    assert d2.rf_angular_frequency == d.rf_angular_frequency
    assert d2.dc_voltages == d.dc_voltages


def test_species_from_amu():
    from scipy.constants import atomic_mass, elementary_charge
    assert SR88.mass == pytest.approx(87.9056 * atomic_mass, rel=1e-12)
    assert SR88.charge_coulomb == pytest.approx(elementary_charge, rel=1e-12)
    with pytest.raises(ValueError):
        Species(mass=1e-25, charge=0)
    with pytest.raises(ValueError):
        Species(mass=-1.0, charge=1)


def test_rectilinear_approximation_of_disk():
    theta = np.linspace(0, 2 * np.pi, 257)[:-1]
    R = 1e-3
    circle = np.column_stack([R * np.cos(theta), R * np.sin(theta)])
    poly = rectilinear_approximation(circle, R / 25)
    # boundary must be axis aligned
    d = np.diff(np.vstack([poly, poly[:1]]), axis=0)
    assert np.all((np.abs(d[:, 0]) < 1e-12) | (np.abs(d[:, 1]) < 1e-12))
    # area within a few percent of pi R^2
    from shapely.geometry import Polygon
    assert Polygon(poly).area == pytest.approx(np.pi * R * R, rel=0.05)


def test_bundled_layout_and_drive(bundled_layout, bundled_drive):
    assert validate(bundled_layout) == []
    assert bundled_layout.rf_names()
    assert bundled_drive.rf_amplitude == pytest.approx(300.0)
    assert bundled_drive.rf_angular_frequency == pytest.approx(
        2 * np.pi * 8e6, rel=1e-12)
