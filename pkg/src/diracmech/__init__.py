"""Lagrange-Dirac mechanics: forward-mode autodiff, constrained integration,
Dirac-Hamilton-Jacobi verification and Chaplygin reduction."""

from . import autodiff, chaplygin, geometry, hamilton_jacobi, integrator, systems
from .errors import (
    BlowUp,
    ConfigError,
    DiracMechError,
    DomainError,
    InconsistentState,
    NotChaplygin,
    RankError,
    ShapeError,
    SingularAlmostSymplectic,
    SingularKKT,
    SingularReducedLegendre,
)

__all__ = [
    "autodiff",
    "chaplygin",
    "geometry",
    "hamilton_jacobi",
    "integrator",
    "systems",
    "BlowUp",
    "ConfigError",
    "DiracMechError",
    "DomainError",
    "InconsistentState",
    "NotChaplygin",
    "RankError",
    "ShapeError",
    "SingularAlmostSymplectic",
    "SingularKKT",
    "SingularReducedLegendre",
]
