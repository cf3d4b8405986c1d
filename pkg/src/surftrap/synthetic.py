"""Closed-form field bases used as oracles and in demos.

These mimic the BasisSolution evaluation API (potential / field over named
electrodes) so the analysis and dynamics machinery can run against fields
whose secular frequencies, Mathieu parameters, and energies are known
analytically.
"""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np


class SyntheticBasis:
    """Named unit-voltage potentials given as callables.

    potentials[name](points) -> (n,) volts per volt;
    fields[name](points) -> (n, 3) V/m per volt.
    """

    def __init__(self, potentials: Mapping[str, Callable],
                 fields: Mapping[str, Callable]):
        self._phi = dict(potentials)
        self._e = dict(fields)

    def potential(self, voltages: Mapping[str, float], points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros(len(points))
        for name, v in voltages.items():
            out += v * self._phi[name](points)
        return out

    def field(self, voltages: Mapping[str, float], points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.zeros((len(points), 3))
        for name, v in voltages.items():
            out += v * self._e[name](points)
        return out


def quadrupole_basis(r0: float, center=(0.0, 0.0, 0.0)) -> SyntheticBasis:
    """Ideal 3D rf quadrupole: phi_u = (x^2 + y^2 - 2 z^2) / (2 r0^2)
    about the given center (satisfies Laplace; curvatures 1/r0^2,
    1/r0^2, -2/r0^2)."""
    c = np.asarray(center, dtype=float)

    def phi(pts):
        d = pts - c
        return (d[:, 0] ** 2 + d[:, 1] ** 2 - 2.0 * d[:, 2] ** 2) / (2.0 * r0 ** 2)

    def e(pts):
        d = pts - c
        return np.column_stack([-d[:, 0], -d[:, 1], 2.0 * d[:, 2]]) / r0 ** 2

    return SyntheticBasis({"rf": phi}, {"rf": e})


def planar_quadrupole_basis(r0: float, center=(0.0, 0.0, 0.0)) -> SyntheticBasis:
    """2D rf quadrupole phi_u = (x^2 - y^2) / (2 r0^2): the linear-trap
    cross-section oracle (no z dependence)."""
    c = np.asarray(center, dtype=float)

    def phi(pts):
        d = pts - c
        return (d[:, 0] ** 2 - d[:, 1] ** 2) / (2.0 * r0 ** 2)

    def e(pts):
        d = pts - c
        return np.column_stack([-d[:, 0], d[:, 1], np.zeros(len(d))]) / r0 ** 2

    return SyntheticBasis({"rf": phi}, {"rf": e})


def harmonic_well_basis(kx: float, ky: float, kz: float, charge_coulomb: float,
                        center=(0.0, 0.0, 0.0),
                        name: str = "dc") -> SyntheticBasis:
    """Static harmonic well: at 1 V the potential energy of an ion of the
    given charge is (kx x^2 + ky y^2 + kz z^2) / 2 (spring constants in
    N/m).  Not a Laplace solution; a pure oracle."""
    c = np.asarray(center, dtype=float)

    def phi(pts):
        d = pts - c
        return (kx * d[:, 0] ** 2 + ky * d[:, 1] ** 2
                + kz * d[:, 2] ** 2) / (2.0 * charge_coulomb)

    def e(pts):
        d = pts - c
        return -np.column_stack([kx * d[:, 0], ky * d[:, 1], kz * d[:, 2]]) \
            / charge_coulomb

    return SyntheticBasis({name: phi}, {name: e})
