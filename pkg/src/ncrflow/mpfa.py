"""MPFA pressure gradient on the quadrangle subdivision of a triangulation.

Every cell is split into three quadrangles ``(S_0, M_i, G, M_{i+1})``, one per
vertex.  Around each vertex the P0 pressure is extended by auxiliary values
on the fan edges, which are eliminated locally by normal-flux continuity
across interior edges and, on the boundary, by prescribing the normal flux
of the reconstructed gradient on the two boundary half-edges.  The result
is a piecewise-constant gradient on quadrangles that is affine in the cell
values and in the boundary flux data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .fem import FACET_GAUSS2, TRIANGLE_DEG5, get_rule
from .linalg import SolverError, compress
from .mesh import MacroElement, Triangulation

__all__ = [
    "reconstructed_l2_error",
    "NearSingularLocalSystem",
    "COND_LIMIT",
    "LocalReconstruction",
    "FanTable",
    "HalfEdgeQuadrature",
    "MpfaOperator",
    "QuadrangleGradients",
    "local_gradient_formula",
    "eliminate_interior",
    "eliminate_boundary",
    "build_fan_table",
    "half_edge_quadrature",
    "half_edge_flux",
    "assemble_mpfa",
    "reconstruct_field",
]

COND_LIMIT = 1e12
# barycentric coordinates of a quadrangle centroid (centre vertex, then the other two)
QUAD_CENTROID = (11.0 / 18.0, 7.0 / 36.0)
# CR basis value at that centroid: facet opposite the centre vertex, other facets
PSI_OPPOSITE = 1.0 - 2.0 * QUAD_CENTROID[0]
PSI_ADJACENT = 1.0 - 2.0 * QUAD_CENTROID[1]


class NearSingularLocalSystem(SolverError):
    def __init__(self, vertex: int, cond: float, detail: str = ""):
        self.vertex = int(vertex)
        self.cond = float(cond)
        msg = f"local MPFA system at vertex {vertex} has condition number {cond:.3e}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


def _check_cond(vertex, cond, detail=""):
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise NearSingularLocalSystem(vertex, cond, detail)


def _fan_detail(macro: MacroElement) -> str:
    return (f"{'boundary' if macro.is_boundary else 'interior'} fan of {macro.ncells} cells, "
            f"min area {macro.cell_areas.min():.3e}")


# --------------------------------------------------------------------------
# single macro-element
# --------------------------------------------------------------------------

def local_gradient_formula(macro: MacroElement, i: int, qtilde_i: float, qtilde_next: float,
                           qbar_i: float) -> np.ndarray:
    """Gradient on quadrangle ``i`` from its two edge values and cell value."""
    a = 1.5 / macro.cell_areas[i]
    return a * (qtilde_i * macro.normal_in[i] + qtilde_next * macro.normal_out[i]
                + qbar_i * macro.normal_opp[i])


@dataclass(frozen=True)
class LocalReconstruction:
    """Eliminated gradient of one macro-element.

    ``coeff[i, l]`` is the gradient on quadrangle ``i`` per unit pressure in
    fan cell ``l``; ``flux_coeff[i, k]`` the gradient per unit flux through
    boundary half-edge ``k``; ``g0[i]`` the flux-induced part for the given
    data and ``gradients[i] = coeff[i] @ cell_values + g0[i]``.
    """

    macro: MacroElement
    coeff: np.ndarray
    flux_coeff: np.ndarray
    g0: np.ndarray
    gradients: np.ndarray
    aux_values: np.ndarray
    local_matrix: np.ndarray
    cond: float


def _eliminate(macro: MacroElement, cell_values, flux_data) -> LocalReconstruction:
    qb = np.asarray(cell_values, dtype=float)
    if qb.shape != (macro.ncells,):
        raise ValueError(f"expected {macro.ncells} cell values, got shape {qb.shape}")
    flux = np.zeros(2) if flux_data is None else np.asarray(flux_data, dtype=float)
    if flux.shape != (2,):
        raise ValueError("boundary fans need exactly two half-edge fluxes")
    args = (np.ascontiguousarray(macro.cell_areas), np.ascontiguousarray(macro.normal_in),
            np.ascontiguousarray(macro.normal_out), np.ascontiguousarray(macro.normal_opp),
            bool(macro.is_boundary))
    A, R, F = kernels.local_system(*args)
    coeff, flux_coeff, cond = kernels.eliminate_fan(*args)
    _check_cond(macro.center_vertex, cond, _fan_detail(macro))
    aux = np.linalg.solve(A, R @ qb + F @ flux)
    g0 = flux_coeff @ flux if macro.is_boundary else np.zeros((macro.ncells, 2))
    grads = np.einsum("ild,l->id", coeff, qb) + g0
    return LocalReconstruction(macro, coeff, flux_coeff, g0, grads, aux, A, float(cond))


def eliminate_interior(macro: MacroElement, cell_values) -> LocalReconstruction:
    """Flux-continuity elimination around an interior vertex."""
    if macro.is_boundary:
        raise ValueError(f"vertex {macro.center_vertex} lies on the boundary")
    return _eliminate(macro, cell_values, None)


def eliminate_boundary(macro: MacroElement, cell_values, flux_data) -> LocalReconstruction:
    """Elimination around a boundary vertex.

    ``flux_data[0]`` and ``flux_data[1]`` are the integrals of ``f . n`` over
    the halves of the first and last fan edges adjacent to the centre.
    """
    if not macro.is_boundary:
        raise ValueError(f"vertex {macro.center_vertex} is interior")
    return _eliminate(macro, cell_values, flux_data)


# --------------------------------------------------------------------------
# flattened fans for the whole mesh
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FanTable:
    """All macro-elements of a mesh laid out as flat arrays.

    Position ``p`` in ``fan_ptr[v]:fan_ptr[v+1]`` is quadrangle ``p - fan_ptr[v]``
    of vertex ``v``.  ``half_edge[p]`` holds the ids of the two boundary
    half-edges of the fan (``-1`` for interior fans).
    """

    fan_ptr: np.ndarray
    coef_ptr: np.ndarray
    vertex: np.ndarray
    cells: np.ndarray
    local_center: np.ndarray
    areas: np.ndarray
    normal_in: np.ndarray
    normal_out: np.ndarray
    normal_opp: np.ndarray
    is_boundary: np.ndarray
    half_edge: np.ndarray
    centroids: np.ndarray

    @property
    def npositions(self) -> int:
        return len(self.cells)


def half_edge_id(tri: Triangulation, facet: int, vertex: int) -> int:
    """Id of the half of boundary ``facet`` touching ``vertex``."""
    b = int(np.searchsorted(tri.boundary_facets, facet))
    if b >= len(tri.boundary_facets) or tri.boundary_facets[b] != facet:
        raise ValueError(f"facet {facet} is not on the boundary")
    return 2 * b + (0 if tri.facets[facet, 0] == vertex else 1)


def build_fan_table(tri: Triangulation) -> FanTable:
    macros = [tri.macro(j) for j in range(tri.nvertices)]
    sizes = np.array([m.ncells for m in macros], dtype=np.int64)
    fan_ptr = np.concatenate([[0], np.cumsum(sizes)])
    coef_ptr = np.concatenate([[0], np.cumsum(sizes ** 2)])
    half = np.full((fan_ptr[-1], 2), -1, dtype=np.int64)
    for m in macros:
        if m.is_boundary:
            s, e = fan_ptr[m.center_vertex], fan_ptr[m.center_vertex + 1]
            half[s:e, 0] = half_edge_id(tri, m.edges[0], m.center_vertex)
            half[s:e, 1] = half_edge_id(tri, m.edges[-1], m.center_vertex)
    cat = np.concatenate
    return FanTable(
        fan_ptr=fan_ptr,
        coef_ptr=coef_ptr,
        vertex=np.repeat(np.arange(tri.nvertices), sizes),
        cells=cat([m.cells for m in macros]).astype(np.int64),
        local_center=cat([m.local_center for m in macros]).astype(np.int64),
        areas=np.ascontiguousarray(cat([m.cell_areas for m in macros])),
        normal_in=np.ascontiguousarray(cat([m.normal_in for m in macros])),
        normal_out=np.ascontiguousarray(cat([m.normal_out for m in macros])),
        normal_opp=np.ascontiguousarray(cat([m.normal_opp for m in macros])),
        is_boundary=np.array([m.is_boundary for m in macros]),
        half_edge=half,
        centroids=cat([m.quad_centroids for m in macros]),
    )


@dataclass(frozen=True)
class HalfEdgeQuadrature:
    """Gauss points on every boundary half-edge.

    Half-edge ``2 b + s`` is the half of boundary facet ``boundary_facets[b]``
    adjacent to its vertex ``facets[., s]``.  ``weights`` include the
    half-edge length; ``normals`` are unit outward normals.
    """

    facets: np.ndarray
    vertices: np.ndarray
    cells: np.ndarray
    points: np.ndarray
    weights: np.ndarray
    normals: np.ndarray

    @property
    def size(self) -> int:
        return len(self.facets)


def half_edge_quadrature(tri: Triangulation, rule=FACET_GAUSS2) -> HalfEdgeQuadrature:
    rule = get_rule(rule)
    bf = tri.boundary_facets
    facets = np.repeat(bf, 2)
    side = np.tile([0, 1], len(bf))
    verts = tri.facets[facets, side]
    start = tri.vertices[verts]
    end = tri.facet_midpoints[facets]
    pts = np.einsum("q,hd->hqd", rule.points[:, 0], start) + np.einsum("q,hd->hqd", rule.points[:, 1], end)
    lengths = 0.5 * tri.facet_lengths[facets]
    return HalfEdgeQuadrature(
        facets=facets,
        vertices=verts,
        cells=tri.facet_cells[facets, 0],
        points=pts,
        weights=lengths[:, None] * rule.weights[None, :],
        normals=tri.facet_normals[facets],
    )


def half_edge_flux(tri: Triangulation, f, rule=FACET_GAUSS2, quad: HalfEdgeQuadrature | None = None):
    """``int f . n`` over every boundary half-edge for a vector function ``f``."""
    quad = half_edge_quadrature(tri, rule) if quad is None else quad
    pts = quad.points
    fv = np.broadcast_to(np.asarray(f(pts[..., 0], pts[..., 1]), dtype=float), (2,) + pts.shape[:-1])
    fn = fv[0] * quad.normals[:, 0, None] + fv[1] * quad.normals[:, 1, None]
    return np.einsum("hq,hq->h", quad.weights, fn)


# --------------------------------------------------------------------------
# global operator
# --------------------------------------------------------------------------

@dataclass
class MpfaOperator:
    """Velocity-tested MPFA gradient.

    ``g_h(v, q) = v^T (gmat @ q + flux_operator @ flux)`` where ``flux`` holds
    the boundary half-edge data.  ``g0vec`` is ``flux_operator @ flux`` for
    the data given at assembly (zeros if none).
    """

    gmat: sp.csr_matrix
    flux_operator: sp.csr_matrix
    g0vec: np.ndarray
    table: FanTable
    coef: np.ndarray
    flux_coef: np.ndarray
    cond: np.ndarray
    flux: np.ndarray

    def boundary_forcing(self, flux) -> np.ndarray:
        return self.flux_operator @ np.asarray(flux, dtype=float)

    def apply(self, pressure, flux=None) -> np.ndarray:
        out = self.gmat @ np.asarray(pressure, dtype=float)
        if flux is not None:
            out = out + self.flux_operator @ np.asarray(flux, dtype=float)
        return out


def _eliminate_table(table: FanTable):
    npos = table.npositions
    coef = np.zeros((table.coef_ptr[-1], 2))
    flux_coef = np.zeros((npos, 2, 2))
    cond = np.zeros(len(table.fan_ptr) - 1)
    kernels.eliminate_all(table.fan_ptr, table.coef_ptr, table.areas, table.normal_in,
                          table.normal_out, table.normal_opp, table.is_boundary,
                          coef, flux_coef, cond)
    bad = np.flatnonzero(~np.isfinite(cond) | (cond > COND_LIMIT))
    if len(bad):
        v = int(bad[0])
        s, e = table.fan_ptr[v], table.fan_ptr[v + 1]
        kind = "boundary" if table.is_boundary[v] else "interior"
        raise NearSingularLocalSystem(
            v, cond[v], f"{kind} fan of {e - s} cells, min area {table.areas[s:e].min():.3e}")
    return coef, flux_coef, cond


def _quad_test_weights(tri: Triangulation, table: FanTable):
    """``int_Q psi_k`` for the three local facets of each quadrangle's cell."""
    k = np.arange(3)[None, :]
    psi = np.where(k == table.local_center[:, None], PSI_OPPOSITE, PSI_ADJACENT)
    return (table.areas / 3.0)[:, None] * psi, tri.cell_facets[table.cells]


def assemble_mpfa(tri: Triangulation, f=None, flux=None, table: FanTable | None = None) -> MpfaOperator:
    """Eliminate every macro-element and assemble the global gradient.

    ``f`` (vector function) or ``flux`` (one value per boundary half-edge)
    supplies the boundary data for ``g0vec``; both may be omitted.
    """
    table = build_fan_table(tri) if table is None else table
    coef, flux_coef, cond = _eliminate_table(table)
    nf = tri.nfacets
    sizes = np.diff(table.fan_ptr)
    fan_of_row = np.repeat(np.arange(len(sizes)), sizes ** 2)
    local = np.arange(len(coef)) - table.coef_ptr[fan_of_row]
    m = sizes[fan_of_row]
    pos = table.fan_ptr[fan_of_row] + local // m
    col = table.cells[table.fan_ptr[fan_of_row] + local % m]
    wq, dofs = _quad_test_weights(tri, table)

    rows, cols, vals = [], [], []
    for comp in range(2):
        for k in range(3):
            rows.append(comp * nf + dofs[pos, k])
            cols.append(col)
            vals.append(wq[pos, k] * coef[:, comp])
    gmat = compress(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                    (2 * nf, tri.ncells))

    nhe = 2 * len(tri.boundary_facets)
    bpos = np.flatnonzero(table.half_edge[:, 0] >= 0)
    rows, cols, vals = [], [], []
    for comp in range(2):
        for k in range(3):
            for side in range(2):
                rows.append(comp * nf + dofs[bpos, k])
                cols.append(table.half_edge[bpos, side])
                vals.append(wq[bpos, k] * flux_coef[bpos, side, comp])
    flux_op = compress(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals),
                       (2 * nf, nhe))

    if flux is None:
        flux = half_edge_flux(tri, f) if f is not None else np.zeros(nhe)
    flux = np.asarray(flux, dtype=float)
    if flux.shape != (nhe,):
        raise ValueError(f"expected {nhe} half-edge fluxes, got shape {flux.shape}")
    return MpfaOperator(gmat, flux_op, flux_op @ flux, table, coef, flux_coef, cond, flux)


@dataclass(frozen=True)
class QuadrangleGradients:
    vertex: np.ndarray
    cell: np.ndarray
    areas: np.ndarray
    centroids: np.ndarray
    gradients: np.ndarray


def reconstruct_field(tri: Triangulation, pressure, f=None, flux=None,
                      operator: MpfaOperator | None = None) -> QuadrangleGradients:
    """Evaluate the reconstructed gradient on every quadrangle."""
    if operator is None:
        op = assemble_mpfa(tri, f=f, flux=flux)
        flux = op.flux
    else:
        op = operator
        if flux is None:
            flux = half_edge_flux(tri, f) if f is not None else op.flux
        flux = np.asarray(flux, dtype=float)
    t = op.table
    grads = kernels.apply_coefficients(t.fan_ptr, t.coef_ptr, t.cells, op.coef, op.flux_coef,
                                       t.half_edge, np.asarray(pressure, dtype=float), flux)
    return QuadrangleGradients(t.vertex, t.cells, t.areas / 3.0, t.centroids, grads)


def reconstructed_l2_error(tri: Triangulation, pressure, exact, f=None, flux=None,
                           operator: MpfaOperator | None = None, rule=TRIANGLE_DEG5) -> float:
    """L2 error of the piecewise-affine pressure ``q_l + G_i . (x - x_l)``.

    On quadrangle ``i`` of cell ``l`` the pressure is the cell value plus the
    reconstructed gradient times the offset from the cell barycentre.  Each
    quadrangle ``(S, M_a, x_l, M_b)`` is integrated as the two triangles
    ``(S, M_a, x_l)`` and ``(S, x_l, M_b)``.
    """
    rule = get_rule(rule)
    pressure = np.asarray(pressure, dtype=float)
    if operator is None:
        operator = assemble_mpfa(tri, f=f, flux=flux)
    rec = reconstruct_field(tri, pressure, f=f, flux=flux, operator=operator)
    t = operator.table
    pos = np.arange(t.npositions)
    cells = tri.cells[t.cells]
    s0 = tri.vertices[t.vertex]
    a = tri.vertices[cells[pos, (t.local_center + 1) % 3]]
    b = tri.vertices[cells[pos, (t.local_center + 2) % 3]]
    centre = tri.barycentres[t.cells]
    total = 0.0
    for tri_pts in ((s0, 0.5 * (s0 + a), centre), (s0, centre, 0.5 * (s0 + b))):
        corners = np.stack(tri_pts, axis=1)  # (npos, 3, 2)
        e1 = corners[:, 1] - corners[:, 0]
        e2 = corners[:, 2] - corners[:, 0]
        area = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        pts = np.einsum("qk,pkd->pqd", rule.points, corners)
        ph = pressure[t.cells][:, None] + np.einsum("pqd,pd->pq", pts - centre[:, None, :], rec.gradients)
        ex = np.broadcast_to(exact(pts[..., 0], pts[..., 1]), ph.shape)
        total += float(np.sum(area * (((ph - ex) ** 2) @ rule.weights)))
    return float(np.sqrt(total))
