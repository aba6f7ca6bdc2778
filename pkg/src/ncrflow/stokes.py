"""Steady Stokes solvers: CR-P0, CR-(P0+P1) and CR-P0 with MPFA gradient."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import fem, mpfa
from .fem import DofField, Layout
from .linalg import Factorization, LinearSystem, bordered_saddle, solve_system
from .mesh import Triangulation, validate

__all__ = [
    "SchemeKind",
    "SchemeOperators",
    "StokesSystem",
    "StokesSolution",
    "assemble_stokes",
    "solve_stokes",
]


class SchemeKind(enum.Enum):
    CR_P0 = "crp0"
    TRIO = "trio"
    MPS = "mps"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"cr": "crp0", "crp0": "crp0", "p1ncp0": "crp0",
                   "trio": "trio", "triop0p1": "trio", "p0p1": "trio",
                   "mps": "mps", "mpfa": "mps"}
        if key not in aliases:
            raise ValueError(f"unknown scheme {value!r}; expected one of crp0, trio, mps")
        return cls(aliases[key])

    @property
    def pressure_layout(self) -> Layout:
        return Layout.P0_PLUS_P1 if self is SchemeKind.TRIO else Layout.P0

    @property
    def label(self) -> str:
        return {"crp0": "CrP0", "trio": "TrioP0P1", "mps": "Mps"}[self.value]


class SchemeOperators:
    """Lazily assembled, reusable operators of one mesh."""

    def __init__(self, tri: Triangulation):
        self.tri = tri
        self._saddles: dict = {}
        self._factors: dict = {}

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        return fem.assemble_stiffness(self.tri, vector=True)

    @cached_property
    def mass(self) -> sp.csr_matrix:
        return fem.assemble_mass(self.tri, vector=True)

    @cached_property
    def lumped_mass(self) -> sp.csr_matrix:
        return fem.assemble_mass(self.tri, lumped=True, vector=True)

    @cached_property
    def divergence(self) -> sp.csr_matrix:
        return fem.assemble_divergence(self.tri)

    @cached_property
    def p1_coupling(self) -> sp.csr_matrix:
        return fem.assemble_p1_gradient_coupling(self.tri)

    @cached_property
    def mpfa(self) -> mpfa.MpfaOperator:
        return mpfa.assemble_mpfa(self.tri)

    @cached_property
    def half_edges(self) -> mpfa.HalfEdgeQuadrature:
        return mpfa.half_edge_quadrature(self.tri)

    @cached_property
    def validation(self):
        return validate(self.tri)

    @cached_property
    def boundary_dofs(self) -> np.ndarray:
        bf = self.tri.boundary_facets
        return np.concatenate([bf, bf + self.tri.nfacets])

    @cached_property
    def interior_dofs(self) -> np.ndarray:
        mask = np.ones(2 * self.tri.nfacets, dtype=bool)
        mask[self.boundary_dofs] = False
        return np.flatnonzero(mask)

    def gradient(self, scheme: SchemeKind) -> sp.csr_matrix:
        """Momentum-side pressure coupling, ``2 nf x npressure``."""
        if scheme is SchemeKind.CR_P0:
            return -self.divergence.T.tocsr()
        if scheme is SchemeKind.TRIO:
            return sp.hstack([-self.divergence.T, self.p1_coupling.T], format="csr")
        return self.mpfa.gmat

    def continuity(self, scheme: SchemeKind) -> sp.csr_matrix:
        """Mass-conservation rows, ``npressure x 2 nf``."""
        if scheme is SchemeKind.TRIO:
            return sp.vstack([-self.divergence, self.p1_coupling], format="csr")
        return -self.divergence

    def continuity_rhs(self, scheme: SchemeKind, g) -> np.ndarray:
        """Boundary terms of the mass-conservation rows for Dirichlet data ``g``.

        The P1 rows of the enriched scheme test ``(u, grad q)``, which equals
        ``-int q div u`` only up to ``int_{boundary} q g . n``.
        """
        npr = self.tri.ncells + (self.tri.nvertices if scheme is SchemeKind.TRIO else 0)
        out = np.zeros(npr)
        if scheme is SchemeKind.TRIO and g is not None:
            out[self.tri.ncells:] = fem.p1_boundary_flux(self.tri, g)
        return out

    def zero_mean_weights(self, scheme: SchemeKind) -> np.ndarray:
        """Columns are the weights of ``int p = 0``, one per pressure block."""
        areas = self.tri.areas
        if scheme is SchemeKind.TRIO:
            w = np.zeros((self.tri.ncells + self.tri.nvertices, 2))
            w[:self.tri.ncells, 0] = areas
            w[self.tri.ncells:, 1] = fem.p1_weights(self.tri)
            return w
        return areas[:, None].copy()

    def saddle(self, scheme: SchemeKind, nu: float) -> LinearSystem:
        """Bordered Stokes matrix on interior velocity dofs (zero right-hand side)."""
        key = (scheme, float(nu))
        if key not in self._saddles:
            inner = self.interior_dofs
            self._saddles[key] = self.bordered(scheme, nu * self.stiffness[inner][:, inner])
        return self._saddles[key]

    def bordered(self, scheme: SchemeKind, velocity_block) -> LinearSystem:
        inner = self.interior_dofs
        return bordered_saddle(velocity_block, self.gradient(scheme)[inner],
                               self.continuity(scheme)[:, inner], np.zeros(len(inner)),
                               sp.csr_matrix(self.zero_mean_weights(scheme)))

    def factorization(self, scheme: SchemeKind, nu: float) -> Factorization:
        key = (scheme, float(nu))
        if key not in self._factors:
            self._factors[key] = Factorization(self.saddle(scheme, nu).matrix)
        return self._factors[key]

    def boundary_values(self, g) -> np.ndarray:
        """Facet means of a vector function on the boundary dofs."""
        if g is None:
            return np.zeros(len(self.boundary_dofs))
        return fem.interpolate_cr_vector(self.tri, g, facets=self.tri.boundary_facets)


@dataclass
class StokesSystem:
    scheme: SchemeKind
    nu: float
    system: LinearSystem
    operators: SchemeOperators
    boundary_values: np.ndarray
    boundary_flux: np.ndarray | None = None

    @property
    def matrix(self) -> sp.csr_matrix:
        return self.system.matrix


@dataclass
class StokesSolution:
    velocity: DofField
    pressure: DofField
    scheme: SchemeKind
    tri: Triangulation
    nu: float
    multipliers: np.ndarray = field(default_factory=lambda: np.zeros(0))
    boundary_flux: np.ndarray | None = None

    def divergence_residual(self, operators: SchemeOperators | None = None) -> np.ndarray:
        D = (operators or SchemeOperators(self.tri)).divergence
        return D @ self.velocity.values


def assemble_stokes(tri: Triangulation, scheme, nu: float, f, dirichlet=None,
                    boundary_flux=None, operators: SchemeOperators | None = None) -> StokesSystem:
    """Bordered saddle-point system of one scheme.

    Boundary velocity dofs are eliminated: they take the facet means of
    ``dirichlet`` (zero if omitted) and move to the right-hand side.  For the
    MPFA scheme the boundary half-edge fluxes default to ``int f . n``.
    """
    scheme = SchemeKind.parse(scheme)
    if nu <= 0:
        raise ValueError("viscosity must be positive")
    ops = operators or SchemeOperators(tri)
    if scheme is SchemeKind.TRIO:
        report = ops.validation
        if not report.hypothesis_41:
            warnings.warn(f"mesh violates the one-boundary-edge hypothesis at cells "
                          f"{list(report.hypothesis_41_violations)[:8]}; the P0+P1 pressure may be unstable",
                          stacklevel=2)
    inner, bnd = ops.interior_dofs, ops.boundary_dofs
    ub = ops.boundary_values(dirichlet)
    K = ops.stiffness
    cont = ops.continuity(scheme)
    rhs = fem.load_vector(tri, f)
    flux = None
    if scheme is SchemeKind.MPS:
        flux = mpfa.half_edge_flux(tri, f, quad=ops.half_edges) if boundary_flux is None \
            else np.asarray(boundary_flux, dtype=float)
        rhs = rhs - ops.mpfa.boundary_forcing(flux)
    template = ops.saddle(scheme, nu)
    full_rhs = np.zeros(template.size)
    nu_dofs = template.n_velocity
    full_rhs[:nu_dofs] = rhs[inner] - nu * (K[inner][:, bnd] @ ub)
    full_rhs[nu_dofs:nu_dofs + template.n_pressure] = ops.continuity_rhs(scheme, dirichlet) - cont[:, bnd] @ ub
    system = LinearSystem(template.matrix, full_rhs, template.n_velocity, template.n_pressure,
                          template.n_constraints, template.meta)
    return StokesSystem(scheme, float(nu), system, ops, ub, flux)


def _scatter(ops: SchemeOperators, interior_values, boundary_values) -> np.ndarray:
    u = np.zeros(2 * ops.tri.nfacets)
    u[ops.interior_dofs] = interior_values
    u[ops.boundary_dofs] = boundary_values
    return u


def solve_assembled(assembled: StokesSystem) -> StokesSolution:
    ops = assembled.operators
    lu = ops.factorization(assembled.scheme, assembled.nu)
    sol = solve_system(assembled.system, lu)
    u = _scatter(ops, sol.velocity, assembled.boundary_values)
    return StokesSolution(
        velocity=DofField(Layout.CR_VECTOR, u),
        pressure=DofField(assembled.scheme.pressure_layout, sol.pressure),
        scheme=assembled.scheme,
        tri=ops.tri,
        nu=assembled.nu,
        multipliers=sol.multipliers,
        boundary_flux=assembled.boundary_flux,
    )


def solve_stokes(tri: Triangulation, scheme, nu: float, case, operators: SchemeOperators | None = None,
                 **kwargs) -> StokesSolution:
    """Solve with forcing and Dirichlet data of a manufactured ``case``.

    Time-dependent cases are evaluated at ``t = 0``.
    """
    f = case.forcing_fn(nu)
    g = None if case.zero_velocity else case.velocity_fn()
    return solve_assembled(assemble_stokes(tri, scheme, nu, f, dirichlet=g, operators=operators, **kwargs))
