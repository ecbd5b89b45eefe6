"""Finite-element lab for second-order equations with drift on the unit disk."""

from .diskmesh import TriMesh, build_disk_mesh
from .drifts import DriftSpec, default_catalog, make_drift
from .fem import CellVectorField, CompatibilityError, DomainError, ScalarField, SolverError
from .hodge import HodgeParts, hodge_decompose
from .riviere import ConvergenceError, RiviereDecomp, decompose

__all__ = [
    "CellVectorField",
    "CompatibilityError",
    "ConvergenceError",
    "DomainError",
    "DriftSpec",
    "HodgeParts",
    "RiviereDecomp",
    "ScalarField",
    "SolverError",
    "TriMesh",
    "build_disk_mesh",
    "decompose",
    "default_catalog",
    "hodge_decompose",
    "make_drift",
]

__version__ = "0.1.0"
