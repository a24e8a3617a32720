"""Smallest eigenvalue of symmetric elliptic operators by Newton's method on the
shifted Schur complement of a non-overlapping domain decomposition."""

from .assembly import Coefficient, assemble, assemble_full, rayleigh_quotient
from .eigensolvers import (
    EigRequest,
    EigResult,
    coarse_rho0,
    interface_gap,
    reference_volume_eig,
    smallest_interface_eig,
)
from .errors import (
    AssemblyError,
    ConfigurationError,
    ConvergenceError,
    NewtonSchurError,
    ShiftTooLargeError,
)
from .mesh import DomainSpec, Mesh, build_mesh, coarse_mesh
from .newton import NewtonConfig, NewtonTrace, convergence_factor, newton_identity_check, run_newton
from .partition import BlockView, Partition, blocks, coercivity_threshold, partition
from .schur import InterfaceMass, SchurContext, apply_schur, extend, extension_norm_ratio, make_context

__all__ = [
    "AssemblyError",
    "BlockView",
    "Coefficient",
    "ConfigurationError",
    "ConvergenceError",
    "DomainSpec",
    "EigRequest",
    "EigResult",
    "InterfaceMass",
    "Mesh",
    "NewtonConfig",
    "NewtonSchurError",
    "NewtonTrace",
    "Partition",
    "SchurContext",
    "ShiftTooLargeError",
    "apply_schur",
    "assemble",
    "assemble_full",
    "blocks",
    "build_mesh",
    "coarse_mesh",
    "coarse_rho0",
    "coercivity_threshold",
    "convergence_factor",
    "extend",
    "extension_norm_ratio",
    "interface_gap",
    "make_context",
    "newton_identity_check",
    "partition",
    "rayleigh_quotient",
    "reference_volume_eig",
    "run_newton",
    "smallest_interface_eig",
]
