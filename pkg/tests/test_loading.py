import numpy as np
import pytest
from scipy.constants import Boltzmann
from scipy.stats import gamma as gamma_dist
from scipy.stats import kstest, norm

from surftrap.dynamics import IntegratorConfig, VoltageTimeline
from surftrap.geometry import SR88
from surftrap.loading import (LoadResult, LoadRow, PlumeModel, ThermalSource,
                              _ballistic_entry, min_loadable_depth,
                              run_ablation_load, run_eimpact_load,
                              sample_beam_velocity, sample_plume,
                              threshold_ratio, wilson_interval)


# ---------------------------------------------------------------------------
# plume sampling

def test_plume_speed_distribution():
    model = PlumeModel()
    rng = np.random.default_rng(1)
    _, vel, _ = sample_plume(model, SR88, rng, 20000)
    speeds = np.linalg.norm(vel, axis=1)
    sigma = np.sqrt(Boltzmann * model.temperature / SR88.mass)
    # truncation at 0 is ~6.5 sigma away: plain normal is the reference
    stat = kstest(speeds, norm(loc=model.drift_speed, scale=sigma).cdf)
    assert stat.pvalue > 0.01
    assert np.all(speeds > 0)


def test_plume_directions_uniform_in_cone():
    model = PlumeModel(cone_half_angle=np.deg2rad(5.0))
    rng = np.random.default_rng(2)
    _, vel, _ = sample_plume(model, SR88, rng, 20000)
    axis = np.asarray(model.axis)
    cosang = vel @ axis / np.linalg.norm(vel, axis=1)
    cmin = np.cos(model.cone_half_angle)
    assert np.all(cosang >= cmin - 1e-12)
    # uniform in solid angle means cos(angle) uniform on [cos(delta), 1]
    u = (1.0 - cosang) / (1.0 - cmin)
    assert kstest(u, "uniform").pvalue > 0.01


def test_plume_cold_narrow_limit_is_monoenergetic_beam():
    model = PlumeModel(temperature=0.0, cone_half_angle=1e-9)
    rng = np.random.default_rng(3)
    pos, vel, t_emit = sample_plume(model, SR88, rng, 50)
    assert np.allclose(vel, model.drift_speed * np.asarray(model.axis),
                       atol=1e-6)
    assert np.allclose(pos, model.source_position)
    assert np.all((t_emit >= 0) & (t_emit <= model.emission_spread))


def test_plume_model_validation():
    with pytest.raises(ValueError):
        PlumeModel(drift_speed=-1.0)
    with pytest.raises(ValueError):
        PlumeModel(cone_half_angle=0.0)
    with pytest.raises(ValueError):
        PlumeModel(ions_per_pulse=0)
    m = PlumeModel(axis=(0.0, 2.0, 0.0))
    assert np.allclose(m.axis, (0.0, 1.0, 0.0))


# ---------------------------------------------------------------------------
# thermal-beam sampling

def test_beam_speed_is_flux_weighted_maxwell():
    src = ThermalSource()
    rng = np.random.default_rng(4)
    v = sample_beam_velocity(src, SR88, rng, 20000)
    sigma = np.sqrt(Boltzmann * src.temperature / SR88.mass)
    u = np.sum(v ** 2, axis=1) / (2.0 * sigma ** 2)
    # pdf ~ v^3 exp(-v^2 / 2 sigma^2)  <=>  v^2/(2 sigma^2) ~ Gamma(2)
    assert kstest(u, gamma_dist(2.0).cdf).pvalue > 0.01
    # flux weighting gives mean kinetic energy 2 kT, not 3/2 kT
    ke = 0.5 * SR88.mass * np.sum(v ** 2, axis=1)
    assert ke.mean() == pytest.approx(2.0 * Boltzmann * src.temperature,
                                      rel=0.03)


def test_beam_direction_isotropic():
    src = ThermalSource()
    rng = np.random.default_rng(5)
    v = sample_beam_velocity(src, SR88, rng, 20000)
    d = v / np.linalg.norm(v, axis=1, keepdims=True)
    assert np.linalg.norm(d.mean(axis=0)) < 0.02


def test_thermal_source_validation():
    with pytest.raises(ValueError):
        ThermalSource(temperature=0.0)


# ---------------------------------------------------------------------------
# statistics helpers

def test_wilson_interval_reference_values():
    lo, hi = wilson_interval(8, 10)
    assert lo == pytest.approx(0.4901, abs=2e-4)
    assert hi == pytest.approx(0.9433, abs=2e-4)


def test_wilson_interval_edges_and_monotonicity():
    assert wilson_interval(0, 20)[0] == 0.0
    assert wilson_interval(20, 20)[1] == 1.0
    los = [wilson_interval(k, 20)[0] for k in range(21)]
    assert los == sorted(los)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def _rows(depths, ci_los):
    return tuple(LoadRow(100.0 + i, d, 100, int(50), 0.5, lo, min(1.0, lo + 0.2))
                 for i, (d, lo) in enumerate(zip(depths, ci_los)))


def test_min_loadable_depth_interpolates():
    res = LoadResult(rows=_rows([1.0, 2.0, 3.0], [0.0, 0.1, 0.3]),
                     master_seed=0, params={})
    assert min_loadable_depth(res, 0.2) == pytest.approx(2.5)
    assert min_loadable_depth(res, 0.05) == pytest.approx(1.5)
    assert min_loadable_depth(res, 0.1) == pytest.approx(2.0)
    assert min_loadable_depth(res, 0.4) is None
    # already loadable at the shallowest depth
    assert min_loadable_depth(res, 0.0) == 1.0


def test_min_loadable_depth_needs_rows():
    res = LoadResult(rows=_rows([1.0], [0.5]), master_seed=0, params={})
    with pytest.raises(ValueError):
        min_loadable_depth(res, 0.1)


def test_threshold_ratio():
    abl = LoadResult(rows=_rows([1.0, 2.0, 3.0], [0.0, 0.2, 0.4]),
                     master_seed=0, params={})
    eim = LoadResult(rows=_rows([1.0, 2.0, 3.0], [0.0, 0.0, 0.2]),
                     master_seed=0, params={})
    # ablation reaches 0.2 at depth 2, eimpact at depth 3
    assert threshold_ratio(abl, eim, 0.2) == pytest.approx(1.5)
    with pytest.raises(ValueError):
        threshold_ratio(abl, eim, 0.5)


def test_load_result_csv_round_trip_bit_exact(tmp_path):
    res = LoadResult(rows=_rows([0.1234567890123, 2.0, 3.0],
                                [0.0, 0.1, 0.3]),
                     master_seed=42, params={"loader": "ablation", "n": 3})
    p1 = tmp_path / "a.csv"
    p2 = tmp_path / "b.csv"
    res.to_csv(p1)
    back = LoadResult.from_csv(p1)
    assert back.master_seed == 42
    assert back.params == res.params
    back.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()


# ---------------------------------------------------------------------------
# ballistic entry

BOX = ((-4e-3, 4e-3), (-5.5e-3, 5.5e-3), (5e-5, 6e-3))


def test_ballistic_entry_hits_box():
    pos = np.array([0.0, -25e-3, 8e-4])
    vel = np.array([0.0, 400.0, 0.0])
    state, t = _ballistic_entry(pos, vel, 1e-6, BOX)
    assert state[1] == pytest.approx(-5.5e-3, abs=1e-8)
    assert t == pytest.approx(1e-6 + (25e-3 - 5.5e-3) / 400.0, rel=1e-9)
    assert np.array_equal(state[3:], vel)


def test_ballistic_entry_misses_box():
    pos = np.array([0.0, -25e-3, 8e-4])
    assert _ballistic_entry(pos, np.array([400.0, 0.0, 0.0]), 0.0, BOX) is None
    assert _ballistic_entry(pos, np.array([0.0, -400.0, 0.0]), 0.0, BOX) is None
    # aimed too high: exits above before reaching the trap
    assert _ballistic_entry(pos, np.array([0.0, 400.0, 200.0]), 0.0,
                            BOX) is None


def test_ballistic_entry_starting_inside():
    pos = np.array([0.0, 0.0, 8e-4])
    state, t = _ballistic_entry(pos, np.array([0.0, 100.0, 0.0]), 0.0, BOX)
    assert t == 0.0
    assert np.allclose(state[:3], pos, atol=1e-9)


# ---------------------------------------------------------------------------
# worker-count determinism (small scale; full scale in the acceptance suite)

_FAST_CFG = IntegratorConfig(steps_per_rf_period=100, max_rf_periods=600,
                             damping_rate=2e4)
_TIMELINE = VoltageTimeline(short_duration=10e-6, t0=40e-6, recovery="exp",
                            recovery_tau=30e-6)


def test_ablation_load_worker_invariance(bundled_basis, bundled_layout,
                                         bundled_drive, bundled_grid,
                                         tmp_path):
    args = (bundled_basis, bundled_layout, bundled_drive, [250.0, 400.0],
            PlumeModel(), _TIMELINE, _FAST_CFG, SR88, 7)
    r1 = run_ablation_load(*args, trials=8, workers=1, grid=bundled_grid)
    r3 = run_ablation_load(*args, trials=8, workers=3, grid=bundled_grid)
    p1, p3 = tmp_path / "w1.csv", tmp_path / "w3.csv"
    r1.to_csv(p1)
    r3.to_csv(p3)
    assert p1.read_bytes() == p3.read_bytes()


def test_eimpact_load_worker_invariance(bundled_basis, bundled_layout,
                                        bundled_drive, bundled_grid,
                                        tmp_path):
    args = (bundled_basis, bundled_layout, bundled_drive, [250.0, 400.0],
            ThermalSource(), _FAST_CFG, SR88, 7)
    r1 = run_eimpact_load(*args, trials=8, workers=1, grid=bundled_grid)
    r2 = run_eimpact_load(*args, trials=8, workers=4, grid=bundled_grid)
    p1, p2 = tmp_path / "w1.csv", tmp_path / "w2.csv"
    r1.to_csv(p1)
    r2.to_csv(p2)
    assert p1.read_bytes() == p2.read_bytes()
    row = r1.rows[0]
    assert 0 <= row.ci_lo <= row.p_hat <= row.ci_hi <= 1
