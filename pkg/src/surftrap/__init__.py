"""Electrostatics, pseudopotential analysis, and loading Monte Carlo for
surface-electrode rf ion traps."""

from .geometry import (SR88, DriveConfig, Electrode, LayoutError, Species,
                       TrapLayout, default_drive, default_layout, load_layout,
                       save_layout, validate)
from .mesh import MeshError, PatchMesh, mesh
from .fieldsolver import (BasisSolution, SolverError, export_grid,
                          patch_field, patch_potential, solve_basis,
                          solve_layout)
from .analysis import (AnalysisError, PseudoField, TrapAnalysis, analyze,
                       find_minimum, mathieu_q, secular_frequencies,
                       sweep_depth, trap_depth)
from .dynamics import (FieldGrid, IntegrationError, IntegratorConfig,
                       TrajectoryOutcome, VoltageTimeline, export_trace,
                       integrate, secular_energy, secular_energy_from_trace,
                       spectral_secular_frequency)
from .synthetic import (SyntheticBasis, harmonic_well_basis,
                        planar_quadrupole_basis, quadrupole_basis)
from .loading import (LoadResult, LoadRow, PlumeModel, ThermalSource,
                      min_loadable_depth, prepare_field_grid,
                      run_ablation_load, run_eimpact_load, sample_beam_velocity,
                      sample_plume, threshold_ratio, wilson_interval)
from .fitting import (DecayFit, FitError, PHOTONS_PER_MS_PER_ION, ShotSeries,
                      fit_target_decay)

__version__ = "0.1.0"

__all__ = [
    "SR88", "DriveConfig", "Electrode", "LayoutError", "Species",
    "TrapLayout", "default_drive", "default_layout", "load_layout",
    "save_layout", "validate",
    "MeshError", "PatchMesh", "mesh",
    "BasisSolution", "SolverError", "export_grid", "patch_field",
    "patch_potential", "solve_basis", "solve_layout",
    "AnalysisError", "PseudoField", "TrapAnalysis", "analyze",
    "find_minimum", "mathieu_q", "secular_frequencies", "sweep_depth",
    "trap_depth",
    "FieldGrid", "IntegrationError", "IntegratorConfig", "TrajectoryOutcome",
    "VoltageTimeline", "export_trace", "integrate", "secular_energy",
    "secular_energy_from_trace", "spectral_secular_frequency",
    "SyntheticBasis", "harmonic_well_basis", "planar_quadrupole_basis",
    "quadrupole_basis",
    "LoadResult", "LoadRow", "PlumeModel", "ThermalSource",
    "min_loadable_depth", "prepare_field_grid", "run_ablation_load",
    "run_eimpact_load", "sample_beam_velocity", "sample_plume",
    "threshold_ratio", "wilson_interval",
    "DecayFit", "FitError", "PHOTONS_PER_MS_PER_ION", "ShotSeries",
    "fit_target_decay",
    "__version__",
]
