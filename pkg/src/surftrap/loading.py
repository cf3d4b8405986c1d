"""Monte Carlo loading experiments.

Two loading channels are contrasted as capture probability versus trap
depth: an ablation plume arriving from a distant source while the electrode
voltages are shorted and recover, and in-trap ionization of a thermal atomic
beam with the drive steady.  Per-trial random streams are derived from
(master seed, depth index, trial index), so results are bit-identical for a
fixed master seed regardless of worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import Optional, Sequence

import numpy as np
from scipy.constants import Boltzmann

from .analysis import PseudoField, analyze
from .dynamics import (FieldGrid, IntegratorConfig, VoltageTimeline,
                       IntegrationError, integrate)
from .geometry import DriveConfig, Species

RESULT_HEADER = "Vrf_V,depth_eV,trials,captured,p_hat,ci_lo,ci_hi"


@dataclass(frozen=True)
class PlumeModel:
    """Ablation-plume ion source.

    The sampled velocities model the slow, capture-relevant subpopulation of
    the plume aimed at the trap: speed is drift plus thermal spread, and the
    direction lies in a narrow cone about the axis.  Fast plume ions carry
    far more kinetic energy than any surface trap is deep and never load, so
    sampling them would only dilute the statistics.
    """

    source_position: tuple = (0.0, -25e-3, 8e-4)   # m
    axis: tuple = (0.0, 1.0, 0.0)                   # unit vector toward trap
    drift_speed: float = 400.0                      # m/s
    temperature: float = 40.0                       # K, longitudinal spread
    cone_half_angle: float = np.deg2rad(0.5)        # rad
    ions_per_pulse: int = 1
    emission_spread: float = 1e-6                   # s

    def __post_init__(self):
        if self.drift_speed < 0:
            raise ValueError("drift_speed must be >= 0")
        if not (0.0 < self.cone_half_angle <= np.pi / 2):
            raise ValueError("cone_half_angle must be in (0, pi/2]")
        if self.ions_per_pulse < 1:
            raise ValueError("ions_per_pulse must be >= 1")
        a = np.asarray(self.axis, dtype=float)
        object.__setattr__(self, "axis", tuple(a / np.linalg.norm(a)))
        object.__setattr__(self, "source_position",
                           tuple(float(v) for v in self.source_position))


@dataclass(frozen=True)
class ThermalSource:
    """In-trap ionization of a thermal atomic beam: ions appear at uniform
    random positions in a box around the trap minimum, inheriting the
    neutral atom's velocity.  Beam atoms are sampled from the flux-weighted
    Maxwell speed distribution (mean kinetic energy 2 kT, not 3/2 kT, since
    faster atoms cross the ionization volume more often) with isotropic
    direction."""

    temperature: float = 650.0                      # K, typical Sr oven
    ionization_halfwidths: tuple = (4.5e-4, 4.5e-4, 4.5e-4)  # m, box half-sizes
    events: int = 500

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")


@dataclass(frozen=True)
class LoadRow:
    vrf: float
    depth_ev: float
    trials: int
    captured: int
    p_hat: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class LoadResult:
    rows: tuple
    master_seed: int
    params: dict

    def depths(self) -> np.ndarray:
        return np.array([r.depth_ev for r in self.rows])

    def to_csv(self, path) -> None:
        with open(path, "w") as f:
            f.write("# surftrap load result\n")
            f.write(f"# master_seed: {self.master_seed}\n")
            for line in json.dumps(self.params, sort_keys=True,
                                   indent=1).splitlines():
                f.write(f"# {line}\n")
            f.write(RESULT_HEADER + "\n")
            for r in self.rows:
                f.write(",".join([
                    repr(float(r.vrf)), repr(float(r.depth_ev)),
                    str(r.trials), str(r.captured),
                    repr(float(r.p_hat)), repr(float(r.ci_lo)),
                    repr(float(r.ci_hi))]) + "\n")

    @classmethod
    def from_csv(cls, path) -> "LoadResult":
        rows = []
        seed = 0
        param_lines = []
        with open(path) as f:
            for line in f:
                line = line.rstrip("\n")
                if line.startswith("# master_seed:"):
                    seed = int(line.split(":", 1)[1])
                elif line.startswith("# "):
                    param_lines.append(line[2:])
                elif line.startswith("#") or line == RESULT_HEADER:
                    continue
                elif line:
                    v, d, n, k, p, lo, hi = line.split(",")
                    rows.append(LoadRow(float(v), float(d), int(n), int(k),
                                        float(p), float(lo), float(hi)))
        try:
            params = json.loads("\n".join(param_lines[1:]))
        except (json.JSONDecodeError, IndexError):
            params = {}
        return cls(rows=tuple(rows), master_seed=seed, params=params)


def wilson_interval(captured: int, trials: int, z: float = 1.959963984540054
                    ) -> tuple[float, float]:
    """Wilson score 95% confidence interval for a binomial proportion."""
    if trials <= 0:
        raise ValueError("trials must be > 0")
    p = captured / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    center = (p + z2 / (2.0 * trials)) / denom
    half = z * np.sqrt(p * (1.0 - p) / trials + z2 / (4.0 * trials ** 2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# sources

def _cone_frame(axis):
    """Two unit vectors completing a right-handed frame with the axis."""
    h = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array(
        [0.0, 1.0, 0.0])
    u = np.cross(axis, h)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def sample_plume(model: PlumeModel, species: Species, rng: np.random.Generator,
                 n: int):
    """Sample n plume ions: positions at the source, emission times uniform
    in [0, emission_spread].

    Speeds are drift_speed plus a thermal spread (normal with the
    Maxwell-Boltzmann per-axis width, resampled to stay positive);
    directions are uniform in solid angle within the cone about the axis.
    At zero temperature and vanishing cone this degenerates to a
    monoenergetic beam along the axis.
    """
    axis = np.asarray(model.axis)
    sigma = np.sqrt(Boltzmann * model.temperature / species.mass)
    speed = model.drift_speed + sigma * rng.standard_normal(n)
    if sigma > 0:
        bad = speed <= 0
        while np.any(bad):
            speed[bad] = model.drift_speed \
                + sigma * rng.standard_normal(int(bad.sum()))
            bad = speed <= 0
    cosang = 1.0 - rng.uniform(0.0, 1.0, n) * (1.0 - np.cos(model.cone_half_angle))
    sinang = np.sqrt(np.maximum(1.0 - cosang ** 2, 0.0))
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    u, v = _cone_frame(axis)
    dirs = (cosang[:, None] * axis
            + (sinang * np.cos(phi))[:, None] * u
            + (sinang * np.sin(phi))[:, None] * v)
    vel = speed[:, None] * dirs
    pos = np.tile(np.asarray(model.source_position), (n, 1))
    t_emit = rng.uniform(0.0, model.emission_spread, size=n) \
        if model.emission_spread > 0 else np.zeros(n)
    return pos, vel, t_emit


def sample_beam_velocity(source: ThermalSource, species: Species,
                         rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """Velocities of beam atoms crossing the ionization volume: speed from
    the flux-weighted Maxwell distribution (pdf ~ v^3 exp(-v^2/2 sigma^2),
    i.e. sigma * sqrt(2 G) with G ~ Gamma(2)), direction isotropic."""
    sigma = np.sqrt(Boltzmann * source.temperature / species.mass)
    speed = sigma * np.sqrt(2.0 * rng.gamma(2.0, size=n))
    d = rng.standard_normal((n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return speed[:, None] * d


def _ballistic_entry(pos, vel, t_emit, box):
    """Advance a free ion from the source to its entry into the escape box.

    Returns (state6, t_entry) or None if the straight path misses the box.
    """
    lo = np.array([b[0] for b in box])
    hi = np.array([b[1] for b in box])
    t_in, t_out = 0.0, np.inf
    for k in range(3):
        if vel[k] == 0.0:
            if pos[k] < lo[k] or pos[k] > hi[k]:
                return None
            continue
        ta = (lo[k] - pos[k]) / vel[k]
        tb = (hi[k] - pos[k]) / vel[k]
        if ta > tb:
            ta, tb = tb, ta
        t_in = max(t_in, ta)
        t_out = min(t_out, tb)
    if t_in > t_out or t_out < 0:
        return None
    t_in = max(t_in, 0.0)
    state = np.concatenate([pos + vel * t_in, vel])
    # nudge inside so the kernel does not immediately flag an escape
    state[:3] += vel * 1e-12
    return state, t_emit + t_in


# ---------------------------------------------------------------------------
# loaders

def prepare_field_grid(basis, layout, dc_voltages, box,
                       shape=(72, 48, 48), cache_dir=None) -> FieldGrid:
    """Sampled field grid for the integrator, disk-cached when cache_dir is
    given (keyed by layout hash, dc assignment, box, and shape)."""
    if cache_dir is None:
        return FieldGrid.from_basis(basis, layout.rf_names(), dc_voltages,
                                    box, shape)
    import hashlib
    from pathlib import Path
    from .fieldsolver import layout_hash

    doc = {
        "layout": layout_hash(layout, basis.mesh.n_patches),
        "dc": {k: float(v) for k, v in sorted(dc_voltages.items())
               if v != 0.0},
        "box": [[float(a), float(b)] for a, b in box],
        "shape": list(shape),
        "far_factor": FieldGrid.FAR_FACTOR,
    }
    key = hashlib.sha256(
        json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]
    path = Path(cache_dir) / f"grid_{key}.npz"
    if path.exists():
        return FieldGrid.load(path)
    grid = FieldGrid.from_basis(basis, layout.rf_names(), dc_voltages,
                                box, shape)
    path.parent.mkdir(parents=True, exist_ok=True)
    grid.save(path)
    return grid

def _depth_table(basis, layout, drive: DriveConfig, amplitudes, species,
                 guess):
    """Analyze each amplitude once; returns (analysis, pseudo) per V_rf."""
    out = []
    pf = PseudoField(basis, drive, species, layout.rf_names())
    for v in amplitudes:
        pfv = pf.with_amplitude(v)
        out.append((analyze(pfv, guess), pfv))
    return out


def _run_trials(sim_one, n_trials: int, workers: int):
    """Run per-trial closures, deterministically ordered by trial index."""
    if workers <= 1:
        return [sim_one(j) for j in range(n_trials)]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(sim_one, range(n_trials)))


def run_ablation_load(basis, layout, drive: DriveConfig,
                      rf_amplitudes: Sequence[float], plume: PlumeModel,
                      timeline: VoltageTimeline, cfg: IntegratorConfig,
                      species: Species, seed: int, *, trials: int = 500,
                      workers: int = 1, guess=(0.0, 0.0, 8e-4),
                      grid_shape=(72, 48, 48), grid: FieldGrid = None
                      ) -> LoadResult:
    """Plume loading through the shorting/recovery event.

    For each rf amplitude: trials pulses of ions_per_pulse ions are flown
    ballistically from the source into the escape box and then integrated
    through the timeline; p_hat is the per-ion capture probability.
    Integrator failures are counted separately, never silently dropped.
    """
    amplitudes = list(rf_amplitudes)
    if grid is None:
        grid = FieldGrid.from_basis(basis, layout.rf_names(),
                                    drive.dc_voltages, cfg.escape_box,
                                    grid_shape)
    omega = drive.rf_angular_frequency
    table = _depth_table(basis, layout, drive, amplitudes, species, guess)

    rows = []
    failures = 0
    for d_idx, (vrf, (ta, _)) in enumerate(zip(amplitudes, table)):
        capc = ta.minimum_position

        def sim_one(trial_idx, _vrf=vrf, _capc=capc, _d=d_idx):
            rng = np.random.default_rng([seed, _d, trial_idx])
            pos, vel, t_emit = sample_plume(plume, species, rng,
                                            plume.ions_per_pulse)
            phases = rng.uniform(0.0, 2.0 * np.pi, size=plume.ions_per_pulse)
            cap = 0
            fail = 0
            for i in range(plume.ions_per_pulse):
                entry = _ballistic_entry(pos[i], vel[i], t_emit[i],
                                         cfg.escape_box)
                if entry is None:
                    continue
                state0, t_entry = entry
                try:
                    out = integrate(state0, grid, _vrf, omega, species,
                                    timeline, cfg, phase=phases[i],
                                    t_start=t_entry, capture_center=_capc)
                except IntegrationError:
                    fail += 1
                    continue
                if out.classification == "captured":
                    cap += 1
            return cap, fail

        results = _run_trials(sim_one, trials, workers)
        captured = sum(c for c, _ in results)
        failures += sum(f for _, f in results)
        total = trials * plume.ions_per_pulse
        lo, hi = wilson_interval(captured, total)
        rows.append(LoadRow(vrf, ta.depth_ev, total, captured,
                            captured / total, lo, hi))

    params = {
        "loader": "ablation",
        "plume": asdict(plume),
        "timeline": asdict(timeline),
        "integrator": asdict(cfg),
        "drive": drive.to_dict(),
        "species": {"mass_kg": species.mass, "charge_e": species.charge},
        "trials": trials,
        "integrator_failures": failures,
    }
    return LoadResult(rows=tuple(rows), master_seed=seed, params=params)


def run_eimpact_load(basis, layout, drive: DriveConfig,
                     rf_amplitudes: Sequence[float], source: ThermalSource,
                     cfg: IntegratorConfig, species: Species, seed: int, *,
                     trials: Optional[int] = None, workers: int = 1,
                     guess=(0.0, 0.0, 8e-4), grid_shape=(72, 48, 48),
                     grid: FieldGrid = None) -> LoadResult:
    """Electron-impact loading: ions created at rest-frame thermal-beam
    velocities inside the ionization volume with the drive steady."""
    amplitudes = list(rf_amplitudes)
    if trials is None:
        trials = source.events
    if grid is None:
        grid = FieldGrid.from_basis(basis, layout.rf_names(),
                                    drive.dc_voltages, cfg.escape_box,
                                    grid_shape)
    omega = drive.rf_angular_frequency
    timeline = VoltageTimeline()  # steady drive, no event
    table = _depth_table(basis, layout, drive, amplitudes, species, guess)
    hw = np.asarray(source.ionization_halfwidths)

    rows = []
    failures = 0
    for d_idx, (vrf, (ta, _)) in enumerate(zip(amplitudes, table)):
        capc = ta.minimum_position

        def sim_one(trial_idx, _vrf=vrf, _capc=capc, _d=d_idx):
            rng = np.random.default_rng([seed, _d, trial_idx])
            pos = _capc + rng.uniform(-1.0, 1.0, size=3) * hw
            vel = sample_beam_velocity(source, species, rng)[0]
            phase = rng.uniform(0.0, 2.0 * np.pi)
            state0 = np.concatenate([pos, vel])
            try:
                out = integrate(state0, grid, _vrf, omega, species, timeline,
                                cfg, phase=phase, capture_center=_capc)
            except IntegrationError:
                return 0, 1
            return (1 if out.classification == "captured" else 0), 0

        results = _run_trials(sim_one, trials, workers)
        captured = sum(c for c, _ in results)
        failures += sum(f for _, f in results)
        lo, hi = wilson_interval(captured, trials)
        rows.append(LoadRow(vrf, ta.depth_ev, trials, captured,
                            captured / trials, lo, hi))

    params = {
        "loader": "eimpact",
        "source": asdict(source),
        "integrator": asdict(cfg),
        "drive": drive.to_dict(),
        "species": {"mass_kg": species.mass, "charge_e": species.charge},
        "trials": trials,
        "integrator_failures": failures,
    }
    return LoadResult(rows=tuple(rows), master_seed=seed, params=params)


# ---------------------------------------------------------------------------
# threshold extraction

def min_loadable_depth(result: LoadResult, p_min: float) -> Optional[float]:
    """Smallest depth whose Wilson lower bound reaches p_min, with linear
    interpolation between the bracketing rows; None if never reached."""
    rows = sorted(result.rows, key=lambda r: r.depth_ev)
    if len(rows) < 2:
        raise ValueError("need at least 2 depth rows")
    for k, r in enumerate(rows):
        if r.ci_lo >= p_min:
            if k == 0:
                return r.depth_ev
            prev = rows[k - 1]
            span = r.ci_lo - prev.ci_lo
            if span <= 0:
                return r.depth_ev
            frac = (p_min - prev.ci_lo) / span
            return prev.depth_ev + frac * (r.depth_ev - prev.depth_ev)
    return None


def threshold_ratio(ablation: LoadResult, eimpact: LoadResult,
                    p_min: float) -> float:
    """min_loadable_depth(eimpact) / min_loadable_depth(ablation)."""
    da = min_loadable_depth(ablation, p_min)
    de = min_loadable_depth(eimpact, p_min)
    if da is None or de is None:
        raise ValueError(
            f"threshold undefined: ablation={da}, eimpact={de} at "
            f"p_min={p_min}")
    return de / da
