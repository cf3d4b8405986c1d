"""Full time-dependent ion motion in the rf + dc fields.

The drive is modulated by a voltage timeline that can short all electrodes
to 0 V for a window and recover with a step or exponential waveform.  The
integrator is fixed-step classical RK4 on

    m r'' = Q E(r, t) - m gamma r',
    E(r, t) = env(t) [ Vrf cos(Omega t + phase) E_rf(r) + E_dc(r) ]

with the unit-amplitude rf and dc fields sampled from precomputed regular
grids by trilinear interpolation (exact for fields linear in position, which
the synthetic oracles use).  Outside the grid the field is zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np
from numba import njit
from scipy.constants import elementary_charge

from .geometry import Species

TRACE_HEADER = "t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps"

TRACE_MAX_ROWS = 100_000

# kernel status codes
_UNDECIDED, _CAPTURED, _ESCAPED, _NONFINITE = 0, 1, 2, 3


class IntegrationError(RuntimeError):
    """Raised when the trajectory state becomes non-finite."""

    def __init__(self, msg, last_state=None, last_time=None):
        super().__init__(msg)
        self.last_state = last_state
        self.last_time = last_time


@dataclass(frozen=True)
class VoltageTimeline:
    """Electrode-shorting event: all voltages forced to 0 on
    [t0, t0 + short_duration], then step or exponential recovery."""

    short_duration: float = 0.0      # s
    t0: float = 0.0                  # s
    recovery: str = "step"           # "step" | "exp"
    recovery_tau: float = 0.0        # s, exponential time constant

    def __post_init__(self):
        if self.short_duration < 0:
            raise ValueError("short_duration must be >= 0")
        if self.recovery not in ("step", "exp"):
            raise ValueError("recovery must be 'step' or 'exp'")
        if self.recovery == "exp" and self.recovery_tau <= 0:
            raise ValueError("exponential recovery needs recovery_tau > 0")

    def envelope(self, t: float) -> float:
        """Voltage scale factor in [0, 1] at time t."""
        return float(_envelope(t, self.t0, self.t0 + self.short_duration,
                               1 if self.recovery == "exp" else 0,
                               self.recovery_tau, self.short_duration))


@dataclass(frozen=True)
class IntegratorConfig:
    steps_per_rf_period: int = 200
    max_rf_periods: int = 2000
    damping_rate: float = 0.0            # 1/s
    capture_radius: float = 2e-3         # m
    capture_window_periods: int = 100
    escape_box: tuple = ((-4e-3, 4e-3), (-5.5e-3, 5.5e-3), (5e-5, 6e-3))

    def __post_init__(self):
        if self.steps_per_rf_period < 50:
            raise ValueError("steps_per_rf_period must be >= 50")
        ext = max(hi - lo for lo, hi in self.escape_box)
        if self.capture_radius >= ext:
            raise ValueError("capture_radius must be smaller than the "
                             "escape box extent")


@dataclass(frozen=True)
class TrajectoryOutcome:
    classification: str                   # captured | escaped | undecided
    final_position: np.ndarray            # m
    final_velocity: np.ndarray            # m/s
    final_time: float                     # s
    escape_time: Optional[float] = None
    secular_energy_ev: Optional[float] = None
    trace: Optional[np.ndarray] = None    # (n, 7): t, r, v


@dataclass(frozen=True)
class FieldGrid:
    """Unit-amplitude rf field and static dc field on a regular grid."""

    origin: np.ndarray        # (3,)
    spacing: np.ndarray       # (3,)
    erf: np.ndarray           # (nx, ny, nz, 3), V/m per volt of rf amplitude
    edc: np.ndarray           # (nx, ny, nz, 3), V/m

    @classmethod
    def from_callable(cls, erf_fn: Callable, edc_fn: Optional[Callable],
                      box, shape) -> "FieldGrid":
        """Sample vectorized field callables ((n,3) points -> (n,3) V/m)."""
        axes = [np.linspace(lo, hi, n) for (lo, hi), n in zip(box, shape)]
        X, Y, Z = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
        erf = np.ascontiguousarray(erf_fn(pts).reshape(*shape, 3))
        if edc_fn is None:
            edc = np.zeros_like(erf)
        else:
            edc = np.ascontiguousarray(edc_fn(pts).reshape(*shape, 3))
        origin = np.array([a[0] for a in axes])
        spacing = np.array([a[1] - a[0] if len(a) > 1 else 1.0 for a in axes])
        return cls(origin=origin, spacing=spacing, erf=erf, edc=edc)

    #: far-field cutoff (in patch half-widths) for bulk grid sampling;
    #: field error ~5e-5 of the field scale for the bundled layout
    FAR_FACTOR = 16.0

    @classmethod
    def from_basis(cls, basis, rf_names, dc_voltages: Mapping[str, float],
                   box, shape=(80, 48, 64)) -> "FieldGrid":
        rf_unit = {n: 1.0 for n in rf_names}
        erf_fn = lambda pts: basis.field(rf_unit, pts, far_factor=cls.FAR_FACTOR)
        dc = {k: v for k, v in dc_voltages.items() if v != 0.0}
        edc_fn = (lambda pts: basis.field(dc, pts, far_factor=cls.FAR_FACTOR)) \
            if dc else None
        return cls.from_callable(erf_fn, edc_fn, box, shape)

    def save(self, path) -> None:
        np.savez_compressed(path, origin=self.origin, spacing=self.spacing,
                            erf=self.erf, edc=self.edc)

    @classmethod
    def load(cls, path) -> "FieldGrid":
        with np.load(path) as d:
            return cls(origin=d["origin"], spacing=d["spacing"],
                       erf=np.ascontiguousarray(d["erf"]),
                       edc=np.ascontiguousarray(d["edc"]))


# ---------------------------------------------------------------------------
# numba kernels

@njit(cache=True, inline="always")
def _envelope(t, t0, t_end, exp_mode, tau_rec, duration):
    if duration <= 0.0:
        if exp_mode == 0:
            return 1.0
        if t < t0:
            return 1.0
        return 1.0 - np.exp(-(t - t0) / tau_rec)
    if t < t0:
        return 1.0
    if t < t_end:
        return 0.0
    if exp_mode == 0:
        return 1.0
    return 1.0 - np.exp(-(t - t_end) / tau_rec)


@njit(cache=True, inline="always")
def _sample(grid, origin, inv_sp, x, y, z, out):
    fx = (x - origin[0]) * inv_sp[0]
    fy = (y - origin[1]) * inv_sp[1]
    fz = (z - origin[2]) * inv_sp[2]
    nx, ny, nz = grid.shape[0], grid.shape[1], grid.shape[2]
    i = int(np.floor(fx))
    j = int(np.floor(fy))
    k = int(np.floor(fz))
    if i < 0 or j < 0 or k < 0 or i >= nx - 1 or j >= ny - 1 or k >= nz - 1:
        out[0] = 0.0
        out[1] = 0.0
        out[2] = 0.0
        return
    tx = fx - i
    ty = fy - j
    tz = fz - k
    for c in range(3):
        c00 = grid[i, j, k, c] * (1 - tx) + grid[i + 1, j, k, c] * tx
        c10 = grid[i, j + 1, k, c] * (1 - tx) + grid[i + 1, j + 1, k, c] * tx
        c01 = grid[i, j, k + 1, c] * (1 - tx) + grid[i + 1, j, k + 1, c] * tx
        c11 = grid[i, j + 1, k + 1, c] * (1 - tx) + grid[i + 1, j + 1, k + 1, c] * tx
        c0 = c00 * (1 - ty) + c10 * ty
        c1 = c01 * (1 - ty) + c11 * ty
        out[c] = c0 * (1 - tz) + c1 * tz


@njit(cache=True, inline="always")
def _accel(erf, edc, origin, inv_sp, s, t, qm, vrf, omega, phase, gamma,
           t0, t_end, exp_mode, tau_rec, duration, e1, e2, acc):
    env = _envelope(t, t0, t_end, exp_mode, tau_rec, duration)
    _sample(erf, origin, inv_sp, s[0], s[1], s[2], e1)
    _sample(edc, origin, inv_sp, s[0], s[1], s[2], e2)
    crf = vrf * np.cos(omega * t + phase)
    for c in range(3):
        acc[c] = qm * env * (crf * e1[c] + e2[c]) - gamma * s[3 + c]


@njit(cache=True, nogil=True)
def _integrate_kernel(state, t_start, dt, n_steps,
                      origin, inv_sp, erf, edc,
                      qm, vrf, omega, phase, gamma,
                      t0, t_end, exp_mode, tau_rec, duration,
                      box_lo, box_hi, capc, cap_r2, cap_steps,
                      trace_every, trace_buf):
    """Fixed-step RK4; returns (status, t_final, n_trace_rows).

    state (6,) is advanced in place.  Captured means the ion sat inside the
    capture radius for cap_steps consecutive steps with the drive recovered
    to within 1% of full amplitude; escaped means it left the box.
    """
    e1 = np.empty(3)
    e2 = np.empty(3)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    inside = 0
    n_trace = 0
    t = t_start
    status = _UNDECIDED

    for step in range(n_steps):
        if trace_every > 0 and step % trace_every == 0 and n_trace < trace_buf.shape[0]:
            trace_buf[n_trace, 0] = t
            for c in range(6):
                trace_buf[n_trace, 1 + c] = state[c]
            n_trace += 1

        # RK4 stages
        _accel(erf, edc, origin, inv_sp, state, t, qm, vrf, omega, phase,
               gamma, t0, t_end, exp_mode, tau_rec, duration, e1, e2, k1[3:])
        for c in range(3):
            k1[c] = state[3 + c]
        for c in range(6):
            tmp[c] = state[c] + 0.5 * dt * k1[c]
        _accel(erf, edc, origin, inv_sp, tmp, t + 0.5 * dt, qm, vrf, omega,
               phase, gamma, t0, t_end, exp_mode, tau_rec, duration, e1, e2, k2[3:])
        for c in range(3):
            k2[c] = tmp[3 + c]
        for c in range(6):
            tmp[c] = state[c] + 0.5 * dt * k2[c]
        _accel(erf, edc, origin, inv_sp, tmp, t + 0.5 * dt, qm, vrf, omega,
               phase, gamma, t0, t_end, exp_mode, tau_rec, duration, e1, e2, k3[3:])
        for c in range(3):
            k3[c] = tmp[3 + c]
        for c in range(6):
            tmp[c] = state[c] + dt * k3[c]
        _accel(erf, edc, origin, inv_sp, tmp, t + dt, qm, vrf, omega, phase,
               gamma, t0, t_end, exp_mode, tau_rec, duration, e1, e2, k4[3:])
        for c in range(3):
            k4[c] = tmp[3 + c]
        for c in range(6):
            state[c] = state[c] + (dt / 6.0) * (k1[c] + 2.0 * k2[c]
                                                + 2.0 * k3[c] + k4[c])
        t = t_start + (step + 1) * dt

        ok = True
        for c in range(6):
            if not np.isfinite(state[c]):
                ok = False
        if not ok:
            status = _NONFINITE
            break

        if (state[0] < box_lo[0] or state[0] > box_hi[0]
                or state[1] < box_lo[1] or state[1] > box_hi[1]
                or state[2] < box_lo[2] or state[2] > box_hi[2]):
            status = _ESCAPED
            break

        dx = state[0] - capc[0]
        dy = state[1] - capc[1]
        dz = state[2] - capc[2]
        if dx * dx + dy * dy + dz * dz < cap_r2:
            inside += 1
        else:
            inside = 0
        if inside >= cap_steps and _envelope(
                t, t0, t_end, exp_mode, tau_rec, duration) > 0.99:
            status = _CAPTURED
            break

    return status, t, n_trace


def integrate(state0, grid: FieldGrid, vrf: float, omega: float,
              species: Species, timeline: VoltageTimeline,
              cfg: IntegratorConfig, *, phase: float = 0.0,
              t_start: float = 0.0, capture_center=(0.0, 0.0, 8e-4),
              record_trace: bool = False, trace_every: int = 0,
              backward: bool = False) -> TrajectoryOutcome:
    """Integrate one ion and classify the trajectory.

    phase is the rf phase at t = 0; backward=True integrates with a negative
    time step (used by the reversibility checks).
    """
    state = np.asarray(state0, dtype=float).copy()
    if state.shape != (6,):
        raise ValueError("state0 must be (x, y, z, vx, vy, vz)")
    period = 2.0 * np.pi / omega
    dt = period / cfg.steps_per_rf_period
    if backward:
        dt = -dt
    n_steps = cfg.max_rf_periods * cfg.steps_per_rf_period

    if record_trace and trace_every <= 0:
        trace_every = max(1, n_steps // TRACE_MAX_ROWS)
    trace_buf = np.empty((min(n_steps // trace_every + 1, TRACE_MAX_ROWS), 7)
                         if trace_every > 0 else (0, 7))

    box_lo = np.array([b[0] for b in cfg.escape_box])
    box_hi = np.array([b[1] for b in cfg.escape_box])
    capc = np.asarray(capture_center, dtype=float)
    cap_steps = cfg.capture_window_periods * cfg.steps_per_rf_period

    status, t_final, n_trace = _integrate_kernel(
        state, t_start, dt, n_steps,
        grid.origin, 1.0 / grid.spacing, grid.erf, grid.edc,
        species.charge_coulomb / species.mass, vrf, omega, float(phase),
        cfg.damping_rate,
        timeline.t0, timeline.t0 + timeline.short_duration,
        1 if timeline.recovery == "exp" else 0, timeline.recovery_tau,
        timeline.short_duration,
        box_lo, box_hi, capc, cfg.capture_radius ** 2, cap_steps,
        trace_every if trace_every > 0 else 0, trace_buf)

    if status == _NONFINITE:
        raise IntegrationError("trajectory state became non-finite",
                               last_state=state, last_time=t_final)
    names = {_UNDECIDED: "undecided", _CAPTURED: "captured",
             _ESCAPED: "escaped"}
    return TrajectoryOutcome(
        classification=names[status],
        final_position=state[:3].copy(),
        final_velocity=state[3:].copy(),
        final_time=t_final,
        escape_time=t_final if status == _ESCAPED else None,
        trace=trace_buf[:n_trace].copy() if trace_every > 0 else None,
    )


# ---------------------------------------------------------------------------
# secular-motion diagnostics

def secular_energy(position, velocity, pseudo, psi_min: float) -> float:
    """Secular energy (eV): kinetic energy of the given (already
    rf-phase-averaged) velocity plus Psi(r) - Psi(min)."""
    v = np.asarray(velocity, dtype=float)
    ke = 0.5 * pseudo.species.mass * float(v @ v)
    pe = pseudo.value(np.asarray(position, dtype=float)) - psi_min
    return (ke + pe) / elementary_charge


def secular_energy_from_trace(trace, pseudo, psi_min: float,
                              omega: float) -> float:
    """Secular energy with micromotion removed by averaging position and
    velocity over the last full rf period of the trace."""
    period = 2.0 * np.pi / omega
    t_end = trace[-1, 0]
    window = trace[trace[:, 0] >= t_end - period]
    r = window[:, 1:4].mean(axis=0)
    v = window[:, 4:7].mean(axis=0)
    return secular_energy(r, v, pseudo, psi_min)


def spectral_secular_frequency(trace, omega: float, axes=None) -> np.ndarray:
    """Dominant sub-drive spectral frequency (Hz) of each motion axis.

    trace rows are (t, x, y, z, vx, vy, vz) on a uniform time grid; axes
    (default: coordinate axes) are unit vectors to project positions onto.
    Uses a Hann window and parabolic interpolation of the peak.
    """
    t = trace[:, 0]
    dt = t[1] - t[0]
    if len(t) * dt < 512 * 2.0 * np.pi / omega:
        raise ValueError("trace must cover at least 512 rf periods")
    pos = trace[:, 1:4]
    if axes is not None:
        pos = pos @ np.asarray(axes, dtype=float).T
    n = len(t)
    win = np.hanning(n)
    freqs = np.fft.rfftfreq(n, dt)
    f_drive = omega / (2.0 * np.pi)
    out = np.empty(pos.shape[1])
    for a in range(pos.shape[1]):
        x = pos[:, a] - pos[:, a].mean()
        mag = np.abs(np.fft.rfft(x * win))
        valid = (freqs > 0) & (freqs < 0.5 * f_drive)
        if not np.any(valid) or mag[valid].max() <= 0:
            raise ValueError(f"no spectral peak found for axis {a}")
        k = int(np.argmax(np.where(valid, mag, 0.0)))
        if 0 < k < len(mag) - 1 and mag[k - 1] > 0 and mag[k + 1] > 0:
            la, lb, lc = np.log(mag[k - 1]), np.log(mag[k]), np.log(mag[k + 1])
            denom = la - 2 * lb + lc
            delta = 0.5 * (la - lc) / denom if denom != 0 else 0.0
        else:
            delta = 0.0
        out[a] = (k + delta) / (n * dt)
    return out


def export_trace(trace, path) -> int:
    """Write a trajectory trace as CSV, decimated to TRACE_MAX_ROWS."""
    if len(trace) > TRACE_MAX_ROWS:
        stride = int(np.ceil(len(trace) / TRACE_MAX_ROWS))
        trace = trace[::stride]
    with open(path, "w") as f:
        f.write(TRACE_HEADER + "\n")
        for row in trace:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
    return len(trace)
