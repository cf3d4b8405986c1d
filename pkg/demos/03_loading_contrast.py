"""Loading-channel contrast: ablation plume vs in-trap ionization.

An ablation pulse shorts the electrodes for ~10 us (plume electrons arrive
first); slow plume ions that reach the trap while the voltages recover can
be captured in wells far shallower than what in-trap ionization of a hot
thermal beam requires.  This demo runs a reduced-statistics version of the
contrast (the acceptance suite runs 500 trials per depth) and reports the
minimum loadable depth of each channel.

Expect a few minutes of runtime; the solved basis and field grid are
cached under .cache/ for reruns.
"""
import numpy as np

import surftrap as st


def main():
    layout = st.default_layout()
    drive = st.default_drive()
    basis = st.solve_layout(layout, resolution=6, cache_dir=".cache")

    cfg = st.IntegratorConfig(steps_per_rf_period=100, max_rf_periods=2400,
                              damping_rate=2e4)
    timeline = st.VoltageTimeline(short_duration=10e-6, t0=40e-6,
                                  recovery="exp", recovery_tau=30e-6)
    grid = st.prepare_field_grid(basis, layout, drive.dc_voltages,
                                 cfg.escape_box, cache_dir=".cache")

    volts = list(np.linspace(100.0, 600.0, 6))
    trials = 100
    print(f"{trials} trials per depth over rf amplitudes "
          f"{[round(v) for v in volts]} V")

    abl = st.run_ablation_load(basis, layout, drive, volts, st.PlumeModel(),
                               timeline, cfg, st.SR88, seed=11,
                               trials=trials, grid=grid)
    eim = st.run_eimpact_load(basis, layout, drive, volts,
                              st.ThermalSource(), cfg, st.SR88, seed=11,
                              trials=trials, grid=grid)

    print(f"\n{'depth (meV)':>12} {'p(ablation)':>14} {'p(e-impact)':>14}")
    for ra, re in zip(abl.rows, eim.rows):
        print(f"{ra.depth_ev * 1e3:>12.1f} "
              f"{ra.p_hat:>7.3f} [{ra.ci_lo:.2f},{ra.ci_hi:.2f}] "
              f"{re.p_hat:>7.3f} [{re.ci_lo:.2f},{re.ci_hi:.2f}]")

    p_min = 0.12
    da = st.min_loadable_depth(abl, p_min)
    de = st.min_loadable_depth(eim, p_min)
    print(f"\nminimum loadable depth at p >= {p_min}:")
    print(f"  ablation : {da * 1e3:.1f} meV" if da else "  ablation : none")
    print(f"  e-impact : {de * 1e3:.1f} meV" if de else "  e-impact : none")
    if da and de:
        print(f"  ratio    : {de / da:.1f}x "
              "(ablation loads much shallower traps)")

    abl.to_csv("load_ablation_demo.csv")
    eim.to_csv("load_eimpact_demo.csv")
    print("\ntables written to load_ablation_demo.csv / "
          "load_eimpact_demo.csv")


if __name__ == "__main__":
    main()
