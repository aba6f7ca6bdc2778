"""Crouzeix-Raviart Stokes and Navier-Stokes solvers with enriched and
MPFA-reconstructed pressure gradients."""

from .cases import case_names, get_case
from .harness import run_convergence, run_viscosity_sweep
from .mesh import Triangulation, generate_kershaw, generate_structured, read_mesh, validate, write_mesh
from .navier_stokes import run_transient
from .stokes import SchemeKind, assemble_stokes, solve_stokes

__version__ = "0.1.0"

__all__ = [
    "SchemeKind",
    "Triangulation",
    "assemble_stokes",
    "case_names",
    "generate_kershaw",
    "generate_structured",
    "get_case",
    "read_mesh",
    "run_convergence",
    "run_transient",
    "run_viscosity_sweep",
    "solve_stokes",
    "validate",
    "write_mesh",
]
