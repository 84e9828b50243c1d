"""Transient incompressible finite-volume solver for the vessel proxy."""

from .physics import (
    EPS_FLOOR,
    K_FLOOR,
    FlowState,
    FluidProps,
    PorousCoeffs,
    StructDiagnostics,
    SwirlBC,
    TurbConstants,
    axial_speed_from_mass_flow,
    default_eps_reg,
    eddy_production,
    forchheimer_resistance,
    inlet_cell_velocities,
    inlet_turbulence,
    swirl_inlet_velocity,
    turbulence_sources,
    velocity_gradient_invariants,
)
from .simple import (
    Diverged,
    ResidualRow,
    SolverParams,
    TransientSolver,
    run_transient,
    write_residual_csv,
)

__all__ = [
    "Diverged", "EPS_FLOOR", "FlowState", "FluidProps", "K_FLOOR",
    "PorousCoeffs", "ResidualRow", "SolverParams", "StructDiagnostics",
    "SwirlBC", "TransientSolver", "TurbConstants",
    "axial_speed_from_mass_flow", "default_eps_reg", "eddy_production",
    "forchheimer_resistance", "inlet_cell_velocities", "inlet_turbulence",
    "run_transient", "swirl_inlet_velocity", "turbulence_sources",
    "velocity_gradient_invariants", "write_residual_csv",
]
