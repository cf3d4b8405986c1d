"""Trap layouts, drive configurations, and ion species.

All geometry lives in the z=0 plane and is expressed in meters.  Masses are
accepted in unified atomic mass units and converted to kg once, at ingest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import atomic_mass, elementary_charge
from shapely.geometry import Polygon as _SPolygon

ROLES = ("rf", "dc", "ground")

# interiors may touch along edges; this is the overlap-area floor (m^2)
_OVERLAP_TOL = 1e-16


class LayoutError(ValueError):
    """Raised when a layout file cannot be parsed or fails validation."""


@dataclass(frozen=True)
class Electrode:
    """A named coplanar electrode: one or more simple polygons in z=0."""

    name: str
    role: str
    polygons: tuple[np.ndarray, ...]  # each (n, 2), meters

    def __post_init__(self):
        if self.role not in ROLES:
            raise LayoutError(
                f"electrode {self.name!r}: role {self.role!r} not in {ROLES}")
        polys = tuple(np.asarray(p, dtype=float) for p in self.polygons)
        object.__setattr__(self, "polygons", polys)

    def shapely(self) -> list[_SPolygon]:
        return [_SPolygon(p) for p in self.polygons]

    def area(self) -> float:
        return sum(abs(p.area) for p in self.shapely())


@dataclass(frozen=True)
class TrapLayout:
    """A collection of electrodes plus a bounding extent used for meshing
    and escape-box decisions."""

    name: str
    electrodes: tuple[Electrode, ...]
    extent: tuple[float, float, float, float]  # (xmin, xmax, ymin, ymax), m

    def __post_init__(self):
        object.__setattr__(self, "electrodes", tuple(self.electrodes))
        object.__setattr__(self, "extent", tuple(float(v) for v in self.extent))

    def electrode(self, name: str) -> Electrode:
        for e in self.electrodes:
            if e.name == name:
                return e
        raise KeyError(name)

    def names(self) -> list[str]:
        return [e.name for e in self.electrodes]

    def rf_names(self) -> list[str]:
        return [e.name for e in self.electrodes if e.role == "rf"]

    def dc_names(self) -> list[str]:
        return [e.name for e in self.electrodes if e.role == "dc"]


@dataclass(frozen=True)
class DriveConfig:
    """RF/DC drive: zero-to-peak rf amplitude, angular drive frequency,
    and a dc voltage per named electrode (missing dc electrodes read 0 V)."""

    rf_amplitude: float           # volts, zero-to-peak
    rf_angular_frequency: float   # rad/s
    dc_voltages: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.rf_angular_frequency <= 0:
            raise ValueError("rf_angular_frequency must be > 0")
        if self.rf_amplitude < 0:
            raise ValueError("rf_amplitude must be >= 0")
        object.__setattr__(self, "dc_voltages", dict(self.dc_voltages))

    @classmethod
    def from_dict(cls, d: Mapping) -> "DriveConfig":
        return cls(
            rf_amplitude=float(d["rf_amplitude_volts"]),
            rf_angular_frequency=2.0 * np.pi * float(d["rf_frequency_hz"]),
            dc_voltages={k: float(v) for k, v in d.get("dc_voltages", {}).items()},
        )

    @classmethod
    def from_file(cls, path) -> "DriveConfig":
        with open(path) as f:
            return cls.from_dict(json.load(f))

    def to_dict(self) -> dict:
        return {
            "rf_amplitude_volts": self.rf_amplitude,
            "rf_frequency_hz": self.rf_angular_frequency / (2.0 * np.pi),
            "dc_voltages": dict(self.dc_voltages),
        }

    def with_amplitude(self, vrf: float) -> "DriveConfig":
        return DriveConfig(vrf, self.rf_angular_frequency, self.dc_voltages)


@dataclass(frozen=True)
class Species:
    """Ion species: mass in kg, charge as a signed multiple of e."""

    mass: float    # kg
    charge: int    # units of elementary charge

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("mass must be > 0")
        if self.charge == 0:
            raise ValueError("charge must be nonzero")

    @classmethod
    def from_amu(cls, mass_amu: float, charge: int = 1) -> "Species":
        return cls(mass=mass_amu * atomic_mass, charge=charge)

    @property
    def charge_coulomb(self) -> float:
        return self.charge * elementary_charge


#: default species: Sr-88 singly ionized (standard atomic-mass data)
SR88 = Species.from_amu(87.9056, 1)


# ---------------------------------------------------------------------------
# validation

def validate(layout: TrapLayout) -> list[str]:
    """Check all layout invariants; returns a list of violation strings
    (empty iff the layout is valid)."""
    violations: list[str] = []
    names = [e.name for e in layout.electrodes]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        violations.append(f"duplicate electrode names: {dupes}")

    xmin, xmax, ymin, ymax = layout.extent
    if not (xmax > xmin and ymax > ymin):
        violations.append("extent is not a proper rectangle")

    shapes: list[tuple[str, _SPolygon]] = []
    for e in layout.electrodes:
        for k, poly in enumerate(e.polygons):
            if poly.ndim != 2 or poly.shape[1] != 2 or poly.shape[0] < 3:
                violations.append(
                    f"electrode {e.name!r} polygon {k}: needs >=3 vertices "
                    f"with 2 coordinates each, got shape {poly.shape}")
                continue
            sp = _SPolygon(poly)
            if not sp.is_valid or sp.area <= 0:
                violations.append(
                    f"electrode {e.name!r} polygon {k}: not a simple polygon")
                continue
            if not (poly[:, 0].min() >= xmin - 1e-12 and poly[:, 0].max() <= xmax + 1e-12
                    and poly[:, 1].min() >= ymin - 1e-12 and poly[:, 1].max() <= ymax + 1e-12):
                violations.append(
                    f"electrode {e.name!r} polygon {k}: outside extent")
            shapes.append((e.name, sp))

    for i in range(len(shapes)):
        for j in range(i + 1, len(shapes)):
            ni, si = shapes[i]
            nj, sj = shapes[j]
            if ni == nj:
                continue
            inter = si.intersection(sj)
            if inter.area > _OVERLAP_TOL:
                violations.append(
                    f"electrodes {ni!r} and {nj!r} overlap "
                    f"(shared area {inter.area:.3e} m^2)")

    if not any(e.role == "rf" for e in layout.electrodes):
        violations.append("no rf-role electrode in layout")
    return violations


# ---------------------------------------------------------------------------
# file I/O

def _layout_from_dict(d: Mapping) -> TrapLayout:
    try:
        electrodes = tuple(
            Electrode(
                name=e["name"],
                role=e["role"],
                polygons=tuple(np.asarray(p, dtype=float) for p in e["polygons"]),
            )
            for e in d["electrodes"]
        )
        extent = tuple(float(v) for v in d["extent"])
    except (KeyError, TypeError, ValueError) as exc:
        raise LayoutError(f"malformed geometry document: {exc}") from exc
    return TrapLayout(name=d.get("name", "unnamed"), electrodes=electrodes,
                      extent=extent)


def layout_to_dict(layout: TrapLayout) -> dict:
    return {
        "name": layout.name,
        "extent": list(layout.extent),
        "electrodes": [
            {
                "name": e.name,
                "role": e.role,
                "polygons": [p.tolist() for p in e.polygons],
            }
            for e in layout.electrodes
        ],
    }


def load_layout(path) -> TrapLayout:
    """Load and validate a layout from a JSON geometry file."""
    path = Path(path)
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise LayoutError(f"cannot parse {path}: {exc}") from exc
    layout = _layout_from_dict(doc)
    bad = validate(layout)
    if bad:
        raise LayoutError(f"{path}: " + "; ".join(bad))
    return layout


def save_layout(layout: TrapLayout, path) -> None:
    """Write a layout as JSON.  Vertices are emitted via Python float repr,
    so load_layout(save_layout(x)) reproduces them bit-exactly."""
    with open(path, "w") as f:
        json.dump(layout_to_dict(layout), f, indent=1)


def default_layout() -> TrapLayout:
    """The bundled five-wire layout calibrated for an rf-null height of
    0.8 mm above the electrode plane."""
    from importlib.resources import files

    doc = json.loads(files("surftrap.data").joinpath("default_layout.json")
                     .read_text())
    layout = _layout_from_dict(doc)
    bad = validate(layout)
    if bad:  # bundled data is shipped valid; guard against packaging damage
        raise LayoutError("bundled default layout invalid: " + "; ".join(bad))
    return layout


def default_drive() -> DriveConfig:
    """The bundled drive point: 300 V zero-to-peak at 8 MHz with +0.3 V on
    the outer dc segments for axial confinement."""
    from importlib.resources import files

    doc = json.loads(files("surftrap.data").joinpath("default_drive.json")
                     .read_text())
    return DriveConfig.from_dict(doc)


# ---------------------------------------------------------------------------
# helpers for constructing rectilinear geometry

def rect_polygon(xmin: float, xmax: float, ymin: float, ymax: float) -> np.ndarray:
    return np.array([[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]],
                    dtype=float)


def rectilinear_approximation(polygon: np.ndarray, step: float) -> np.ndarray:
    """Staircase a simple polygon onto an axis-aligned grid of the given
    step, returning the boundary of the union of grid cells whose centers
    fall inside.  Used to feed curved shapes to the rectangle tiler."""
    from shapely.geometry import box
    from shapely.ops import unary_union

    sp = _SPolygon(polygon)
    xmin, ymin, xmax, ymax = sp.bounds
    nx = max(1, int(np.ceil((xmax - xmin) / step)))
    ny = max(1, int(np.ceil((ymax - ymin) / step)))
    # shared grid lines so adjacent cells have bit-identical edges
    gx = xmin + step * np.arange(nx + 1)
    gy = ymin + step * np.arange(ny + 1)
    cells = []
    for i in range(nx):
        for j in range(ny):
            cell = box(gx[i], gy[j], gx[i + 1], gy[j + 1])
            if sp.contains(cell.centroid):
                cells.append(cell)
    if not cells:
        raise LayoutError("staircase approximation produced no cells; "
                          "reduce step")
    merged = unary_union(cells)
    if merged.geom_type != "Polygon":
        raise LayoutError("staircase approximation is disconnected; "
                          "reduce step")
    return np.asarray(merged.exterior.coords[:-1], dtype=float)
