"""Transient Navier-Stokes by prediction-correction.

One step from ``(U^n, P^n)``:

1. prediction with the old pressure and explicit convection,
   ``Mt U* = M U^n + dt (F^n - L(U^n) U^n - G P^n)``, ``Mt = M + dt nu K``;
2. pressure increment from ``dt D Mt^{-1} G dP = D U*``, solved as the
   bordered saddle system ``[[Mt, G], [D, 0]] [w, dt dP] = [0, -D U*]``;
3. correction ``U^{n+1} = U* + w = U* - dt Mt^{-1} G dP``, which makes
   ``D U^{n+1} = 0``.

``G`` and ``D`` are the coupling and continuity blocks of the chosen scheme
(see :class:`ncrflow.stokes.SchemeOperators`).  Boundary velocity dofs hold
the facet means of the Dirichlet data at ``t^{n+1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import fem
from .fem import DofField, Layout
from .linalg import Factorization, SolverError, compress, direct_solve, split_solution
from .mesh import Triangulation
from .mpfa import half_edge_flux
from .stokes import SchemeKind, SchemeOperators, StokesSolution

__all__ = [
    "TransientBlowUp",
    "TransientState",
    "TransientReport",
    "ProjectionSolver",
    "assemble_convection",
    "project_pressure",
    "time_step",
    "run_transient",
]

BLOW_UP = 1e6
CLOSURES = ("residual", "literal")


class TransientBlowUp(SolverError):
    pass


def assemble_convection(tri: Triangulation, w: np.ndarray, skew: bool = False) -> sp.csr_matrix:
    """Cellwise ``sum_K int_K (w . grad u) . v`` on CR vector fields.

    With CR orthogonality ``int_K w psi_g = |K| w_g / 3``, so the local entry
    is ``L_K[g, f] = w_g . S_f / 3`` for each velocity component.  With
    ``skew`` the result is ``(L - L^T) / 2`` so that ``u^T L u = 0``; the
    facet jumps of CR fields make that form inconsistent, so the time
    stepper uses the plain form.
    """
    nf = tri.nfacets
    w = np.asarray(w, dtype=float)
    wc = np.stack([w[:nf][tri.cell_facets], w[nf:][tri.cell_facets]], axis=-1)  # (nc, 3, 2)
    local = np.einsum("cgd,cfd->cgf", wc, tri.normals) / 3.0
    rows = np.repeat(tri.cell_facets, 3, axis=1).ravel()
    cols = np.tile(tri.cell_facets, (1, 3)).ravel()
    scalar = compress(rows, cols, local.ravel(), (nf, nf))
    L = sp.block_diag([scalar, scalar], format="csr")
    if skew:
        L = ((L - L.T) * 0.5).tocsr()
    return L


@dataclass
class TransientState:
    velocity: np.ndarray
    pressure: np.ndarray
    t: float
    dt: float
    step: int = 0
    flux: np.ndarray | None = None


@dataclass
class TransientReport:
    dt: float
    nsteps: int
    t_final: float
    max_divergence: list = field(default_factory=list)
    kinetic_energy: list = field(default_factory=list)
    boundary_error: list = field(default_factory=list)


def time_step(h: float, t_max: float, cfl: float) -> tuple[float, int]:
    """Largest ``dt < cfl * h`` dividing ``t_max`` into whole steps."""
    if t_max < 0 or cfl <= 0 or h <= 0:
        raise ValueError("need t_max >= 0, cfl > 0 and h > 0")
    if t_max == 0:
        return 0.0, 0
    nsteps = math.floor(t_max / (cfl * h)) + 1
    # the quotient can round below an integer and leave dt == cfl * h
    while t_max / nsteps >= cfl * h:
        nsteps += 1
    return t_max / nsteps, nsteps


def _l2_projection(tri: Triangulation, scheme: SchemeKind, p) -> np.ndarray:
    """L2 projection of a scalar function onto the zero-mean pressure space."""
    rule = fem.TRIANGLE_DEG5
    pts = fem.cell_points(tri, rule)
    vals = np.broadcast_to(p(pts[..., 0], pts[..., 1]), pts.shape[:-1])
    cell_int = tri.areas * (vals @ rule.weights)
    if scheme is not SchemeKind.TRIO:
        means = cell_int / tri.areas
        return means - np.dot(tri.areas, means) / tri.areas.sum()
    nc, nv = tri.ncells, tri.nvertices
    hat_int = np.zeros(nv)
    local = tri.areas[:, None] * np.einsum("q,cq,qk->ck", rule.weights, vals, rule.points)
    np.add.at(hat_int, tri.cells.ravel(), local.ravel())
    m00 = sp.diags(tri.areas)
    m01 = compress(np.repeat(np.arange(nc), 3), tri.cells.ravel(),
                       np.repeat(tri.areas / 3.0, 3), (nc, nv))
    m11 = fem.assemble_p1_mass(tri)
    w0 = sp.csr_matrix(tri.areas[:, None])
    w1 = sp.csr_matrix(fem.p1_weights(tri)[:, None])
    mat = sp.bmat([[m00, m01, w0, None], [m01.T, m11, None, w1],
                   [w0.T, None, None, None], [None, w1.T, None, None]], format="csc")
    x = direct_solve(mat, np.concatenate([cell_int, hat_int, [0.0, 0.0]]))
    return x[:nc + nv]


def _cr_at_points(tri: Triangulation, values: np.ndarray, cells: np.ndarray, pts: np.ndarray):
    """Vector CR field and its cell gradient at points ``pts[h, q]`` of ``cells[h]``."""
    nf = tri.nfacets
    grads = tri.barycentric_gradients()[cells]  # (nh, 3, 2)
    centre = tri.barycentres[cells]
    lam = 1.0 / 3.0 + np.einsum("hqd,hkd->hqk", pts - centre[:, None, :], grads)
    psi = 1.0 - 2.0 * lam
    fac = tri.cell_facets[cells]
    u = np.stack([np.einsum("hqk,hk->hq", psi, values[:nf][fac]),
                  np.einsum("hqk,hk->hq", psi, values[nf:][fac])], axis=-1)
    g = fem.cr_cell_gradients(tri, values)[cells]  # (nh, 2, 2) with [i, j] = d_j u_i
    return u, g


class ProjectionSolver:
    """Prediction-correction time stepping for one mesh, scheme and time step.

    ``closure`` selects the boundary flux data of the MPFA gradient:
    ``"residual"`` uses ``f - (U* - U^n)/dt - (U^n . grad) U^n``, the normal
    component of the pressure gradient implied by the momentum equation
    without its viscous term; ``"literal"`` flips the signs of the time and
    convection terms.
    """

    def __init__(self, tri: Triangulation, scheme, nu: float, forcing, dirichlet, dt: float,
                 lumped: bool = False, closure: str = "residual",
                 operators: SchemeOperators | None = None, convection: bool = True):
        if dt <= 0:
            raise ValueError("time step must be positive")
        if closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}")
        self.tri = tri
        self.scheme = SchemeKind.parse(scheme)
        self.nu = float(nu)
        self.forcing = forcing
        self.dirichlet = dirichlet
        self.dt = float(dt)
        self.lumped = lumped
        self.closure = closure
        self.convection = convection
        self.ops = ops = operators or SchemeOperators(tri)
        inner = self.inner = ops.interior_dofs
        self.bnd = ops.boundary_dofs
        self.M = ops.mass
        self.Mt = (ops.mass + self.dt * self.nu * ops.stiffness).tocsr()
        self.G = ops.gradient(self.scheme)
        self.D = ops.continuity(self.scheme)
        self._pred = Factorization(self.Mt[inner][:, inner].tocsc())
        proj_mass = ops.lumped_mass if lumped else self.Mt
        self._proj_mass_inner = proj_mass[inner][:, inner]
        self.projection = ops.bordered(self.scheme, self._proj_mass_inner)
        self._proj = Factorization(self.projection.matrix)
        self.is_mps = self.scheme is SchemeKind.MPS
        if self.is_mps:
            self.H = ops.mpfa.flux_operator
            self.quad = ops.half_edges

    # -- data -----------------------------------------------------------
    def boundary_values(self, t: float) -> np.ndarray:
        return self.ops.boundary_values(self.dirichlet(t) if self.dirichlet else None)

    def load(self, t: float) -> np.ndarray:
        return fem.load_vector(self.tri, self.forcing(t))

    def gradient_action(self, pressure, flux) -> np.ndarray:
        out = self.G @ pressure
        if self.is_mps and flux is not None:
            out = out + self.H @ flux
        return out

    def closure_flux(self, u_star, u_old, t) -> np.ndarray:
        """Half-edge fluxes of the boundary closure of the MPFA gradient."""
        q = self.quad
        f = self.forcing(t)
        pts = q.points
        fv = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float), (2,) + pts.shape[:-1])
        fv = np.moveaxis(fv, 0, -1)
        us, _ = _cr_at_points(self.tri, u_star, q.cells, pts)
        uo, go = _cr_at_points(self.tri, u_old, q.cells, pts)
        dudt = (us - uo) / self.dt
        conv = np.einsum("hqj,hij->hqi", uo, go) if self.convection else 0.0
        if self.closure == "residual":
            vec = fv - dudt - conv
        else:
            vec = fv + dudt + conv
        fn = np.einsum("hqd,hd->hq", vec, q.normals)
        return np.einsum("hq,hq->h", q.weights, fn)

    def initial_flux(self, grad_p) -> np.ndarray | None:
        if not self.is_mps:
            return None
        return half_edge_flux(self.tri, grad_p, quad=self.quad)

    # -- step -----------------------------------------------------------
    def predict(self, state: TransientState, t_next: float):
        inner = self.inner
        ub = self.boundary_values(t_next)
        rhs = self.M @ state.velocity + self.dt * (self.load(state.t) - self.gradient_action(state.pressure, state.flux))
        if self.convection:
            rhs -= self.dt * (assemble_convection(self.tri, state.velocity) @ state.velocity)
        u_star = np.zeros_like(state.velocity)
        u_star[self.bnd] = ub
        r = rhs[inner] - self.Mt[inner][:, self.bnd] @ ub
        u_star[inner] = self._pred.solve(r)
        return u_star

    def pressure_update(self, u_star, flux_change=None, t=None):
        """Solve for ``w = U^{n+1} - U*`` and the increment ``dP``."""
        sys_ = self.projection
        rhs = np.zeros(sys_.size)
        if flux_change is not None:
            rhs[:sys_.n_velocity] = -self.dt * (self.H @ flux_change)[self.inner]
        g = self.dirichlet(t) if (self.dirichlet is not None and t is not None) else None
        rhs[sys_.n_velocity:sys_.n_velocity + sys_.n_pressure] = \
            self.ops.continuity_rhs(self.scheme, g) - self.D @ u_star
        sys_.rhs = rhs
        sol = split_solution(sys_, self._proj.solve(rhs))
        return sol.velocity, sol.pressure / self.dt

    def correct(self, u_star, w):
        u = u_star.copy()
        u[self.inner] += w
        return u

    def step(self, state: TransientState) -> TransientState:
        t_next = state.t + self.dt
        u_star = self.predict(state, t_next)
        flux_new = None
        change = None
        if self.is_mps:
            flux_new = self.closure_flux(u_star, state.velocity, state.t)
            change = flux_new - state.flux
        w, dp = self.pressure_update(u_star, change, t_next)
        u_new = self.correct(u_star, w)
        norm = np.abs(u_new).max()
        if not np.isfinite(norm) or norm > BLOW_UP:
            raise TransientBlowUp(f"velocity reached {norm:.3e} at step {state.step + 1} (t = {t_next:.6g})")
        return TransientState(u_new, state.pressure + dp, t_next, self.dt, state.step + 1, flux_new)


def project_pressure(tri: Triangulation, scheme, p) -> np.ndarray:
    return _l2_projection(tri, SchemeKind.parse(scheme), p)


def run_transient(tri: Triangulation, scheme, nu: float, case, t_max: float, cfl: float = 0.5,
                  lumped: bool = False, closure: str = "residual", h: float | None = None,
                  operators: SchemeOperators | None = None):
    """Integrate a time-dependent manufactured case up to ``t_max``.

    Returns ``(solution, report)``; ``solution`` holds the fields at
    ``t_max``.  The time step is the largest ``dt < cfl * h`` dividing
    ``t_max``; ``h`` defaults to the nominal mesh size.
    """
    scheme = SchemeKind.parse(scheme)
    h = tri.h if h is None else h
    dt, nsteps = time_step(h, t_max, cfl)
    ops = operators or SchemeOperators(tri)
    u0 = fem.interpolate_cr_vector(tri, case.velocity_fn(0.0))
    p0 = project_pressure(tri, scheme, case.pressure_fn(0.0))
    report = TransientReport(dt=dt, nsteps=nsteps, t_final=t_max)
    M = ops.mass
    report.kinetic_energy.append(0.5 * float(u0 @ (M @ u0)))
    flux0 = None
    if nsteps == 0:
        if scheme is SchemeKind.MPS:
            flux0 = half_edge_flux(tri, case.pressure_gradient_fn(0.0), quad=ops.half_edges)
        state = TransientState(u0, p0, 0.0, 0.0, 0, flux0)
    else:
        solver = ProjectionSolver(tri, scheme, nu, lambda t: case.forcing_fn(nu, t),
                                  case.velocity_fn, dt, lumped=lumped, closure=closure,
                                  operators=ops, convection=case.navier_stokes)
        state = TransientState(u0, p0, 0.0, dt, 0, solver.initial_flux(case.pressure_gradient_fn(0.0)))
        for _ in range(nsteps):
            state = solver.step(state)
            div = np.abs(ops.divergence @ state.velocity).max()
            report.max_divergence.append(float(div))
            report.kinetic_energy.append(0.5 * float(state.velocity @ (M @ state.velocity)))
            exact_b = solver.boundary_values(state.t)
            report.boundary_error.append(float(np.abs(state.velocity[ops.boundary_dofs] - exact_b).max()))
    sol = StokesSolution(
        velocity=DofField(Layout.CR_VECTOR, state.velocity),
        pressure=DofField(scheme.pressure_layout, state.pressure),
        scheme=scheme,
        tri=tri,
        nu=float(nu),
        boundary_flux=state.flux,
    )
    return sol, report
