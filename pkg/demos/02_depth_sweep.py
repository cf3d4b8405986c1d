"""Trap depth and secular frequencies versus rf amplitude.

With no dc contribution the pseudopotential scales exactly as the square of
the rf amplitude, so depth quadruples when the amplitude doubles; the small
dc endcap voltages in the bundled drive perturb this slightly.
"""
import numpy as np

import surftrap as st


def main():
    layout = st.default_layout()
    drive = st.default_drive()
    basis = st.solve_layout(layout, resolution=6, cache_dir=".cache")
    pf = st.PseudoField(basis, drive, st.SR88, layout.rf_names())

    amplitudes = np.linspace(200.0, 600.0, 9)
    rows = st.sweep_depth(pf, amplitudes, guess=(0.0, 0.0, 8e-4))

    print(f"{'Vrf (V)':>8} {'depth (meV)':>12} {'f_ax (kHz)':>11} "
          f"{'f_rad (kHz)':>12} {'q_max':>7}")
    for row in rows:
        if isinstance(row[-1], str):
            print(f"{row[0]:>8.0f}  {row[1]}")
            continue
        v, depth, fx, fy, fz, qmax = row[:6]
        print(f"{v:>8.0f} {depth * 1e3:>12.1f} {fx / 1e3:>11.1f} "
              f"{fz / 1e3:>12.1f} {qmax:>7.3f}")

    d = {row[0]: row[1] for row in rows if not isinstance(row[-1], str)}
    if 200.0 in d and 400.0 in d:
        print(f"\ndepth(400 V) / depth(200 V) = {d[400.0] / d[200.0]:.3f} "
              "(pure-rf scaling predicts 4)")


if __name__ == "__main__":
    main()
