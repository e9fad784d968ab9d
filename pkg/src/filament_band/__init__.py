"""Simulation and bifurcation analysis of a filament-band model of cell protrusions."""

from .model import (
    BandState,
    DensityError,
    DomainError,
    ModelParams,
    NormalFormCoeffs,
    PressurePair,
    beta0,
    bifurcating_branch_prediction,
    normal_form_coeffs,
    pressure_kernels,
    trivial_state,
)
from .discretization import rhs, reconstruct_edges
from .integrate import IntegratorConfig, Trajectory, integrate

__all__ = [
    "BandState",
    "DensityError",
    "DomainError",
    "IntegratorConfig",
    "ModelParams",
    "NormalFormCoeffs",
    "PressurePair",
    "Trajectory",
    "beta0",
    "bifurcating_branch_prediction",
    "integrate",
    "normal_form_coeffs",
    "pressure_kernels",
    "reconstruct_edges",
    "rhs",
    "trivial_state",
]
