"""Solve the bundled five-wire layout and locate the rf null.

The trap is a center rf-grounded strip flanked by two rf rails, with
segmented dc electrodes outside.  Solving the unit-voltage charge bases
once gives potential and field anywhere above the plane; the rf null (the
pseudopotential minimum) sits where the rf field amplitude vanishes.
"""
import numpy as np

import surftrap as st


def main():
    layout = st.default_layout()
    drive = st.default_drive()
    print(f"layout {layout.name!r}: electrodes {layout.names()}")

    basis = st.solve_layout(layout, resolution=6, cache_dir=".cache")
    print(f"solved: {basis.mesh.n_patches} patches, "
          f"boundary residual {basis.residual:.2e} V")

    pf = st.PseudoField(basis, drive, st.SR88, layout.rf_names())
    ta = st.analyze(pf, guess=(0.0, 0.0, 8e-4))
    x, y, z = ta.minimum_position
    print(f"\nrf amplitude {drive.rf_amplitude:.0f} V zero-to-peak at "
          f"{drive.rf_angular_frequency / 2e6 / np.pi:.1f} MHz")
    print(f"rf null at ({x * 1e3:.4f}, {y * 1e3:.4f}, {z * 1e3:.4f}) mm "
          "above the electrode plane")
    print("secular frequencies: "
          + ", ".join(f"{f / 1e3:.1f} kHz" for f in ta.secular_frequencies))
    print(f"Mathieu q: {np.round(ta.mathieu_q, 4)} (stable: {ta.stable})")
    print(f"trap depth: {ta.depth_ev * 1e3:.1f} meV, escape saddle at "
          f"z = {ta.escape_position[2] * 1e3:.3f} mm")

    # vertical cut of the pseudopotential through the null
    zs = np.linspace(0.2e-3, 4e-3, 120)
    pts = np.column_stack([np.full_like(zs, x), np.full_like(zs, y), zs])
    psi = pf.values_ev(pts) * 1e3
    print("\npseudopotential along the vertical through the null (meV):")
    for zi, vi in list(zip(zs, psi))[::12]:
        bar = "#" * int(60 * vi / psi.max())
        print(f"  z = {zi * 1e3:5.2f} mm  {vi:8.2f}  {bar}")


if __name__ == "__main__":
    main()
