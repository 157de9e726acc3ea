"""Numerical laboratory for phi-geodesics on steady gradient Ricci solitons."""

from .errors import (
    ConfigError,
    ConstructionError,
    DataError,
    DomainError,
    GeometryError,
    InsufficientDataError,
    IntegrationError,
    NonConvergenceError,
    SolitonLabError,
    SpecError,
    UsageError,
)
from .geodesic import PhiSpec, integrate_phi_geodesic, minimize_j, riemann_distance, shoot_bvp, solve_minimizer
from .models import ModelSpec, build_model

__version__ = "0.1.0"
