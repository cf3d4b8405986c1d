"""Secular (pseudo)potential analysis: trap minimum, secular frequencies,
Mathieu stability parameters, and trap depth via saddle search.

The secular potential is

    Psi(r) = Q^2 Vrf^2 |E_u(r)|^2 / (4 m Omega^2) + Q Phi_dc(r)

with E_u the unit-amplitude rf field basis and Phi_dc the static potential
of the dc voltage assignment.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import elementary_charge
from scipy.optimize import minimize

from .geometry import DriveConfig, Species

#: Mathieu stability edge for the lowest stability region
MATHIEU_Q_LIMIT = 0.908

#: relative finite-difference step for Hessians (fraction of ion height)
HESSIAN_STEP_FRACTION = 1e-3


class AnalysisError(RuntimeError):
    """Raised on non-convergence or wrong curvature at a stationary point."""


class PseudoField:
    """Time-independent secular potential built from a solved field basis.

    basis must expose potential(voltages, points) and field(voltages, points)
    for named electrodes; rf_names selects the electrodes driven at the rf
    amplitude.
    """

    def __init__(self, basis, drive: DriveConfig, species: Species,
                 rf_names: Sequence[str]):
        self.basis = basis
        self.drive = drive
        self.species = species
        self.rf_names = list(rf_names)
        if not self.rf_names:
            raise ValueError("at least one rf electrode name required")
        self._rf_unit = {name: 1.0 for name in self.rf_names}
        self._dc = dict(drive.dc_voltages)
        q = species.charge_coulomb
        m = species.mass
        om = drive.rf_angular_frequency
        self._rf_prefactor = q * q * drive.rf_amplitude ** 2 / (4.0 * m * om * om)

    def with_amplitude(self, vrf: float) -> "PseudoField":
        return PseudoField(self.basis, self.drive.with_amplitude(vrf),
                           self.species, self.rf_names)

    def rf_unit_field(self, points) -> np.ndarray:
        """Field (V/m per volt of rf amplitude) of the rf electrode group."""
        return self.basis.field(self._rf_unit, points)

    def dc_potential(self, points) -> np.ndarray:
        if not any(self._dc.values()):
            pts = np.atleast_2d(points)
            return np.zeros(len(pts))
        return self.basis.potential(self._dc, points)

    def values(self, points) -> np.ndarray:
        """Psi in joules at an (n, 3) array of points."""
        E = self.rf_unit_field(points)
        rf = self._rf_prefactor * np.einsum("pk,pk->p", E, E)
        return rf + self.species.charge_coulomb * self.dc_potential(points)

    def value(self, point) -> float:
        return float(self.values(np.asarray(point, dtype=float)[None, :])[0])

    def values_ev(self, points) -> np.ndarray:
        return self.values(points) / elementary_charge

    # -- finite-difference derivatives --------------------------------------

    def gradient(self, point, step: float) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        pts = np.repeat(point[None, :], 6, axis=0)
        for i in range(3):
            pts[2 * i, i] += step
            pts[2 * i + 1, i] -= step
        v = self.values(pts)
        return (v[0::2] - v[1::2]) / (2.0 * step)

    def hessian(self, point, step: float) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        H = np.empty((3, 3))
        v0 = self.value(point)
        for i in range(3):
            ei = np.zeros(3)
            ei[i] = step
            H[i, i] = (self.value(point + ei) - 2.0 * v0
                       + self.value(point - ei)) / step ** 2
        for i in range(3):
            for j in range(i + 1, 3):
                ei = np.zeros(3)
                ej = np.zeros(3)
                ei[i] = step
                ej[j] = step
                H[i, j] = H[j, i] = (
                    self.value(point + ei + ej) - self.value(point + ei - ej)
                    - self.value(point - ei + ej) + self.value(point - ei - ej)
                ) / (4.0 * step ** 2)
        return H


@dataclass(frozen=True)
class TrapAnalysis:
    """Full static characterization of one drive configuration."""

    minimum_position: np.ndarray       # m
    secular_frequencies: np.ndarray    # Hz, ascending
    principal_axes: np.ndarray         # rows are unit axes, matching order
    mathieu_q: np.ndarray              # per principal axis
    depth_ev: float
    escape_position: np.ndarray        # m

    @property
    def stable(self) -> bool:
        return bool(np.all(np.abs(self.mathieu_q) < MATHIEU_Q_LIMIT))


def _fd_step(point) -> float:
    # ion height sets the length scale; fall back to 1 mm near the plane
    return HESSIAN_STEP_FRACTION * max(abs(float(point[2])), 1e-3)


def find_minimum(field: PseudoField, guess, *, max_iter: int = 400,
                 grad_tol_rel: float = 1e-3) -> np.ndarray:
    """Locate a local minimum of Psi: simplex descent from the guess, then
    Newton polish on a finite-difference Hessian.

    The gradient norm at the result must fall below
    grad_tol_rel * Psi_scale / ion_height; a non-positive-definite Hessian
    (saddle) is reported as a distinct error.
    """
    guess = np.asarray(guess, dtype=float)
    if guess[2] <= 0:
        raise ValueError("guess must lie in the upper half-space")
    scale = max(abs(guess[2]), 1e-4)

    res = minimize(lambda x: field.value(x * scale), guess / scale,
                   method="Nelder-Mead",
                   options={"maxiter": max_iter, "xatol": 1e-8, "fatol": 0.0})
    x = res.x * scale

    for _ in range(30):
        step = _fd_step(x)
        g = field.gradient(x, step)
        H = field.hessian(x, step)
        try:
            dx = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError:
            break
        if np.linalg.norm(dx) > 0.2 * scale:  # keep Newton inside the basin
            dx *= 0.2 * scale / np.linalg.norm(dx)
        x = x + dx
        if np.linalg.norm(dx) < 1e-9 * scale:
            break

    step = _fd_step(x)
    g = field.gradient(x, step)
    H = field.hessian(x, step)
    psi_scale = max(abs(field.value(x) - field.value(x + [0, 0, x[2]])), 1e-30)
    if np.linalg.norm(g) > grad_tol_rel * psi_scale / abs(x[2]):
        raise AnalysisError(
            f"minimum search did not converge: |grad| = {np.linalg.norm(g):.3e} "
            f"J/m at {x}")
    if np.any(np.linalg.eigvalsh(H) <= 0):
        raise AnalysisError(f"stationary point at {x} is a saddle, not a minimum")
    return x


def secular_frequencies(field: PseudoField, minimum) -> tuple[np.ndarray, np.ndarray]:
    """Secular frequencies (Hz, ascending) and orthonormal principal axes
    from the Hessian of Psi at a verified minimum."""
    minimum = np.asarray(minimum, dtype=float)
    H = field.hessian(minimum, _fd_step(minimum))
    lam, vec = np.linalg.eigh(H)
    if np.any(lam <= 0):
        raise AnalysisError(
            f"Hessian at {minimum} has non-positive eigenvalue {lam.min():.3e}; "
            "not a trapping minimum")
    freqs = np.sqrt(lam / field.species.mass) / (2.0 * np.pi)
    order = np.argsort(freqs, kind="stable")
    return freqs[order], vec.T[order]


def mathieu_q(field: PseudoField, minimum, axes=None) -> np.ndarray:
    """Per-axis Mathieu q: q_i = 2 Q Vrf (d2 phi_u / dx_i^2) / (m Omega^2),
    with phi_u the unit-amplitude rf potential, along the principal axes."""
    minimum = np.asarray(minimum, dtype=float)
    if axes is None:
        _, axes = secular_frequencies(field, minimum)
    step = _fd_step(minimum)

    def phi_u(p):
        return float(field.basis.potential(field._rf_unit, p[None, :])[0])

    qs = np.empty(len(axes))
    for i, a in enumerate(axes):
        d2 = (phi_u(minimum + step * a) - 2.0 * phi_u(minimum)
              + phi_u(minimum - step * a)) / step ** 2
        qs[i] = (2.0 * field.species.charge_coulomb * field.drive.rf_amplitude
                 * d2 / (field.species.mass
                         * field.drive.rf_angular_frequency ** 2))
    return qs


def trap_depth(field: PseudoField, minimum, *, z_max: float | None = None,
               n_scan: int = 400) -> tuple[float, np.ndarray]:
    """Trap depth (eV) and the escape saddle position.

    The barrier is bracketed by a coarse scan of Psi along the vertical ray
    above the minimum (surface-trap barriers open upward), then refined as a
    full 3D saddle: Newton on the gradient, accepting only a stationary
    point whose Hessian has exactly one negative eigenvalue.
    """
    minimum = np.asarray(minimum, dtype=float)
    psi_min = field.value(minimum)
    if z_max is None:
        z_max = 12.0 * minimum[2]
    zs = np.linspace(minimum[2] * 1.01, z_max, n_scan)
    pts = np.repeat(minimum[None, :], n_scan, axis=0)
    pts[:, 2] = zs
    vals = field.values(pts)
    k = int(np.argmax(vals))
    if k == 0 or vals[k] <= psi_min:
        return 0.0, minimum  # untrapped: no barrier above the minimum
    if k == n_scan - 1:
        raise AnalysisError("no barrier maximum found within scan range; "
                            "increase z_max")

    x = pts[k].copy()
    step = _fd_step(x)
    for _ in range(60):
        g = field.gradient(x, step)
        H = field.hessian(x, step)
        try:
            dx = np.linalg.solve(H, -g)
        except np.linalg.LinAlgError as exc:
            raise AnalysisError("saddle refinement: singular Hessian") from exc
        if np.linalg.norm(dx) > 0.25 * minimum[2]:
            dx *= 0.25 * minimum[2] / np.linalg.norm(dx)
        x = x + dx
        if np.linalg.norm(dx) < 1e-8 * minimum[2]:
            break
    else:
        raise AnalysisError("saddle refinement did not converge")

    lam = np.linalg.eigvalsh(field.hessian(x, step))
    if np.sum(lam < 0) != 1:
        raise AnalysisError(
            f"refined stationary point at {x} has {np.sum(lam < 0)} negative "
            "Hessian eigenvalues; expected exactly 1 for an escape saddle")
    depth_ev = (field.value(x) - psi_min) / elementary_charge
    return max(depth_ev, 0.0), x


def analyze(field: PseudoField, guess) -> TrapAnalysis:
    """Minimum, frequencies, Mathieu q's, and depth in one pass."""
    x0 = find_minimum(field, guess)
    freqs, axes = secular_frequencies(field, x0)
    qs = mathieu_q(field, x0, axes)
    depth, esc = trap_depth(field, x0)
    return TrapAnalysis(minimum_position=x0, secular_frequencies=freqs,
                        principal_axes=axes, mathieu_q=qs, depth_ev=depth,
                        escape_position=esc)


SWEEP_HEADER = "Vrf_V,depth_eV,fx_Hz,fy_Hz,fz_Hz,qmax,esc_x_m,esc_y_m,esc_z_m"


def sweep_depth(field: PseudoField, rf_amplitudes: Sequence[float], guess):
    """Depth table over rf amplitudes (ascending); each row is
    (Vrf, depth_eV, f1, f2, f3, qmax, esc_x, esc_y, esc_z) or an error
    marker string for rows whose analysis failed."""
    amps = list(rf_amplitudes)
    if any(a <= 0 for a in amps):
        raise ValueError("rf amplitudes must be positive")
    if amps != sorted(amps):
        raise ValueError("rf amplitudes must be ascending")
    rows = []
    for v in amps:
        try:
            ta = analyze(field.with_amplitude(v), guess)
            rows.append((v, ta.depth_ev, *ta.secular_frequencies,
                         float(np.max(np.abs(ta.mathieu_q))),
                         *ta.escape_position))
        except AnalysisError as exc:
            rows.append((v, f"error: {exc}"))
    return rows
