"""Crouzeix-Raviart P1-nonconforming building blocks.

On a cell with scaled outward normals ``S_k`` (length = facet length) the CR
basis function attached to the facet opposite local vertex ``k`` is
``psi_k = 1 - 2 lambda_k`` with constant gradient ``S_k / |K|``.  Vector CR
fields are stored as two stacked scalar blocks, x then y: the dof of facet
``f`` and component ``c`` is ``c * nfacets + f``.

User functions are called as ``g(x, y)`` on numpy arrays.  Scalar functions
return an array shaped like ``x``; vector functions return a pair
``(gx, gy)`` or an array of shape ``(2,) + x.shape``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .linalg import compress
from .mesh import Triangulation

__all__ = [
    "Layout",
    "DofField",
    "QuadratureRule",
    "FACET_GAUSS2",
    "FACET_GAUSS3",
    "TRIANGLE_DEG2",
    "TRIANGLE_DEG5",
    "TRIANGLE_BARYCENTRE",
    "cr_basis",
    "cr_basis_gradient",
    "interpolate_cr",
    "interpolate_cr_vector",
    "facet_means",
    "assemble_stiffness",
    "assemble_mass",
    "assemble_divergence",
    "assemble_p1_gradient_coupling",
    "assemble_p1_mass",
    "p1_weights",
    "load_vector",
    "evaluate_cr",
    "broken_norm",
    "l2_norm",
    "l2_error",
]


class Layout(enum.Enum):
    CR_SCALAR = "CR_scalar"
    CR_VECTOR = "CR_vector"
    P0 = "P0"
    P1 = "P1"
    P0_PLUS_P1 = "P0plusP1"


def layout_size(tri: Triangulation, layout: Layout) -> int:
    return {
        Layout.CR_SCALAR: tri.nfacets,
        Layout.CR_VECTOR: 2 * tri.nfacets,
        Layout.P0: tri.ncells,
        Layout.P1: tri.nvertices,
        Layout.P0_PLUS_P1: tri.ncells + tri.nvertices,
    }[layout]


@dataclass
class DofField:
    """Degree-of-freedom vector tagged with its layout."""

    layout: Layout
    values: np.ndarray

    def __post_init__(self):
        self.layout = Layout(self.layout)
        self.values = np.asarray(self.values, dtype=float)

    def check(self, tri: Triangulation) -> "DofField":
        expected = layout_size(tri, self.layout)
        if self.values.shape != (expected,):
            raise ValueError(f"{self.layout.value} field on this mesh needs {expected} values, "
                             f"got shape {self.values.shape}")
        return self

    def components(self, tri: Triangulation):
        """Split into per-component blocks (CR vector) or (P0, P1) parts."""
        if self.layout is Layout.CR_VECTOR:
            return self.values[:tri.nfacets], self.values[tri.nfacets:]
        if self.layout is Layout.P0_PLUS_P1:
            return self.values[:tri.ncells], self.values[tri.ncells:]
        return (self.values,)


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference simplex, in barycentric coordinates.

    Weights sum to one; multiply by the measure of the actual simplex.
    """

    name: str
    points: np.ndarray
    weights: np.ndarray
    degree: int


def _gauss_segment(npts):
    t, w = np.polynomial.legendre.leggauss(npts)
    s = 0.5 * (t + 1.0)
    return np.column_stack([1.0 - s, s]), 0.5 * w


FACET_GAUSS2 = QuadratureRule("facet-gauss2", *_gauss_segment(2), degree=3)
FACET_GAUSS3 = QuadratureRule("facet-gauss3", *_gauss_segment(3), degree=5)

TRIANGLE_BARYCENTRE = QuadratureRule(
    "triangle-barycentre", np.array([[1.0, 1.0, 1.0]]) / 3.0, np.array([1.0]), degree=1)

TRIANGLE_DEG2 = QuadratureRule(
    "triangle-deg2",
    np.array([[2 / 3, 1 / 6, 1 / 6], [1 / 6, 2 / 3, 1 / 6], [1 / 6, 1 / 6, 2 / 3]]),
    np.full(3, 1.0 / 3.0),
    degree=2,
)


def _dunavant5():
    r15 = np.sqrt(15.0)
    a, b = (6.0 - r15) / 21.0, (6.0 + r15) / 21.0
    wa, wb = (155.0 - r15) / 1200.0, (155.0 + r15) / 1200.0
    pts = [[1 / 3, 1 / 3, 1 / 3]]
    wts = [9.0 / 40.0]
    for c, w in ((a, wa), (b, wb)):
        pts += [[1 - 2 * c, c, c], [c, 1 - 2 * c, c], [c, c, 1 - 2 * c]]
        wts += [w, w, w]
    return np.array(pts), np.array(wts)


TRIANGLE_DEG5 = QuadratureRule("triangle-deg5", *_dunavant5(), degree=5)

_RULES = {r.name: r for r in (FACET_GAUSS2, FACET_GAUSS3, TRIANGLE_BARYCENTRE,
                              TRIANGLE_DEG2, TRIANGLE_DEG5)}


def get_rule(rule) -> QuadratureRule:
    if isinstance(rule, QuadratureRule):
        return rule
    aliases = {"deg5": "triangle-deg5", "exact": "triangle-deg5", "deg2": "triangle-deg2",
               "barycentre": "triangle-barycentre", "barycenter": "triangle-barycentre"}
    return _RULES[aliases.get(rule, rule)]


def _vec(values, shape):
    arr = np.asarray(values, dtype=float)
    if arr.shape == (2,):
        arr = np.broadcast_to(arr.reshape((2,) + (1,) * len(shape)), (2,) + shape)
    return np.broadcast_to(arr, (2,) + shape)


def _scalar(values, shape):
    return np.broadcast_to(np.asarray(values, dtype=float), shape)


def cell_points(tri: Triangulation, rule: QuadratureRule) -> np.ndarray:
    """Physical quadrature points, shape ``(nc, nq, 2)``."""
    return np.einsum("qk,ckd->cqd", rule.points, tri.vertices[tri.cells])


def facet_points(tri: Triangulation, rule: QuadratureRule, facets=None) -> np.ndarray:
    facets = np.arange(tri.nfacets) if facets is None else np.asarray(facets)
    return np.einsum("qk,fkd->fqd", rule.points, tri.vertices[tri.facets[facets]])


# --------------------------------------------------------------------------
# basis and interpolation
# --------------------------------------------------------------------------

def barycentric(tri: Triangulation, cell: int, x) -> np.ndarray:
    """Barycentric coordinates of point(s) ``x`` in ``cell``."""
    x = np.asarray(x, dtype=float)
    grads = tri.barycentric_gradients()[cell]
    p = tri.vertices[tri.cells[cell]]
    return 1.0 / 3.0 + (x - p.mean(axis=0)) @ grads.T


def cr_basis(tri: Triangulation, cell: int, k: int, x) -> np.ndarray:
    """Value at ``x`` of the CR function of local facet ``k`` of ``cell``."""
    return 1.0 - 2.0 * barycentric(tri, cell, x)[..., k]


def cr_basis_gradient(tri: Triangulation, cell: int, k: int) -> np.ndarray:
    return tri.normals[cell, k] / tri.areas[cell]


def facet_means(tri: Triangulation, g, rule=FACET_GAUSS3, facets=None) -> np.ndarray:
    """Facet averages of a scalar function."""
    rule = get_rule(rule)
    pts = facet_points(tri, rule, facets)
    vals = _scalar(g(pts[..., 0], pts[..., 1]), pts.shape[:-1])
    return vals @ rule.weights


def interpolate_cr(tri: Triangulation, g) -> np.ndarray:
    """CR interpolant of a scalar function: facet means by 3-point Gauss."""
    return facet_means(tri, g)


def interpolate_cr_vector(tri: Triangulation, g, rule=FACET_GAUSS3, facets=None) -> np.ndarray:
    rule = get_rule(rule)
    pts = facet_points(tri, rule, facets)
    vals = _vec(g(pts[..., 0], pts[..., 1]), pts.shape[:-1])
    means = vals @ rule.weights
    return means.reshape(-1)


def evaluate_cr(tri: Triangulation, values: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Evaluate a CR field at barycentric points ``bary`` of shape ``(nq, 3)``.

    ``values`` is a scalar CR vector (``nfacets``) or a vector CR field
    (``2 * nfacets``).  Returns ``(nc, nq)`` or ``(nc, nq, 2)``.
    """
    psi = 1.0 - 2.0 * np.asarray(bary)  # (nq, 3)
    nf = tri.nfacets
    if values.shape[0] == nf:
        return np.einsum("qk,ck->cq", psi, values[tri.cell_facets])
    vx = values[:nf][tri.cell_facets]
    vy = values[nf:][tri.cell_facets]
    return np.stack([np.einsum("qk,ck->cq", psi, vx), np.einsum("qk,ck->cq", psi, vy)], axis=-1)


def cr_cell_gradients(tri: Triangulation, values: np.ndarray) -> np.ndarray:
    """Cellwise gradients: ``(nc, 2)`` for scalar fields, ``(nc, 2, 2)`` for
    vector fields with ``[c, i, j] = d_j u_i``."""
    grad_psi = tri.normals / tri.areas[:, None, None]
    nf = tri.nfacets
    if values.shape[0] == nf:
        return np.einsum("ck,ckd->cd", values[tri.cell_facets], grad_psi)
    return np.stack([np.einsum("ck,ckd->cd", values[:nf][tri.cell_facets], grad_psi),
                     np.einsum("ck,ckd->cd", values[nf:][tri.cell_facets], grad_psi)], axis=1)


# --------------------------------------------------------------------------
# assembly
# --------------------------------------------------------------------------

def _block_diag2(mat):
    return sp.block_diag([mat, mat], format="csr")


def _cell_pairs(tri):
    rows = np.repeat(tri.cell_facets, 3, axis=1)
    cols = np.tile(tri.cell_facets, (1, 3))
    return rows, cols


def assemble_stiffness(tri: Triangulation, vector: bool = False) -> sp.csr_matrix:
    """Broken H1 stiffness ``K[f, g] = sum_K int_K grad psi_f . grad psi_g``."""
    local = np.einsum("cad,cbd->cab", tri.normals, tri.normals) / tri.areas[:, None, None]
    rows, cols = _cell_pairs(tri)
    mat = compress(rows.ravel(), cols.ravel(), local.reshape(len(local), -1).ravel(),
                   (tri.nfacets, tri.nfacets))
    return _block_diag2(mat) if vector else mat


def assemble_mass(tri: Triangulation, lumped: bool = False, vector: bool = False,
                  rule=TRIANGLE_DEG2) -> sp.csr_matrix:
    """CR mass matrix, integrated with a degree-2 rule (exact)."""
    rule = get_rule(rule)
    psi = 1.0 - 2.0 * rule.points  # (nq, 3)
    ref = np.einsum("q,qa,qb->ab", rule.weights, psi, psi)
    local = tri.areas[:, None, None] * ref[None]
    rows, cols = _cell_pairs(tri)
    mat = compress(rows.ravel(), cols.ravel(), local.reshape(len(local), -1).ravel(),
                   (tri.nfacets, tri.nfacets))
    if lumped:
        mat = sp.diags(np.asarray(mat.sum(axis=1)).ravel(), format="csr")
    return _block_diag2(mat) if vector else mat


def assemble_divergence(tri: Triangulation) -> sp.csr_matrix:
    """``D[l, c*nf + f] = int_{K_l} d_c psi_f``; ``b_h(v, q) = -q^T D v``."""
    nc, nf = tri.ncells, tri.nfacets
    rows = np.repeat(np.arange(nc), 6)
    cols = np.concatenate([tri.cell_facets, tri.cell_facets + nf], axis=1).ravel()
    vals = np.concatenate([tri.normals[..., 0], tri.normals[..., 1]], axis=1).ravel()
    return compress(rows, cols, vals, (nc, 2 * nf))


def assemble_p1_gradient_coupling(tri: Triangulation) -> sp.csr_matrix:
    """``B[j, c*nf + f] = int v . grad phi_j`` for continuous P1 hats ``phi_j``.

    The cell integral of a CR basis function is ``|K|/3`` and the hat
    gradient is ``-S_j / (2|K|)``, so each cell contributes ``-S_j[c] / 6``.
    """
    nf = tri.nfacets
    vals = -tri.normals / 6.0  # (nc, 3 vertices, 2)
    rows = np.broadcast_to(tri.cells[:, :, None], (tri.ncells, 3, 3))
    cols = np.broadcast_to(tri.cell_facets[:, None, :], (tri.ncells, 3, 3))
    vx = np.broadcast_to(vals[:, :, None, 0], (tri.ncells, 3, 3))
    vy = np.broadcast_to(vals[:, :, None, 1], (tri.ncells, 3, 3))
    return compress(np.concatenate([rows.ravel(), rows.ravel()]),
                    np.concatenate([cols.ravel(), cols.ravel() + nf]),
                    np.concatenate([vx.ravel(), vy.ravel()]),
                    (tri.nvertices, 2 * nf))


def assemble_p1_mass(tri: Triangulation) -> sp.csr_matrix:
    ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    local = tri.areas[:, None, None] * ref[None]
    rows = np.repeat(tri.cells, 3, axis=1)
    cols = np.tile(tri.cells, (1, 3))
    return compress(rows.ravel(), cols.ravel(), local.reshape(len(local), -1).ravel(),
                    (tri.nvertices, tri.nvertices))


def p1_weights(tri: Triangulation) -> np.ndarray:
    """``int phi_j`` for every vertex hat function."""
    w = np.zeros(tri.nvertices)
    np.add.at(w, tri.cells.ravel(), np.repeat(tri.areas / 3.0, 3))
    return w


def load_vector(tri: Triangulation, f, rule=TRIANGLE_DEG5) -> np.ndarray:
    """``F[c*nf + g] = int f_c psi_g`` for a vector source ``f``."""
    rule = get_rule(rule)
    pts = cell_points(tri, rule)
    fv = _vec(f(pts[..., 0], pts[..., 1]), pts.shape[:-1])  # (2, nc, nq)
    psi = 1.0 - 2.0 * rule.points
    local = np.einsum("q,cq,qk,ecq->eck", rule.weights, np.broadcast_to(tri.areas[:, None],
                      pts.shape[:-1]), psi, fv)
    out = np.zeros(2 * tri.nfacets)
    nf = tri.nfacets
    np.add.at(out, tri.cell_facets.ravel(), local[0].ravel())
    np.add.at(out, tri.cell_facets.ravel() + nf, local[1].ravel())
    return out


# --------------------------------------------------------------------------
# norms
# --------------------------------------------------------------------------

def p1_boundary_flux(tri: Triangulation, g, rule=FACET_GAUSS3) -> np.ndarray:
    """``int_{boundary} phi_j g . n`` for every vertex hat function ``phi_j``."""
    rule = get_rule(rule)
    bf = tri.boundary_facets
    pts = facet_points(tri, rule, bf)
    vals = _vec(g(pts[..., 0], pts[..., 1]), pts.shape[:-1])
    normal = tri.facet_normals[bf]
    gn = vals[0] * normal[:, 0, None] + vals[1] * normal[:, 1, None]
    local = tri.facet_lengths[bf, None] * np.einsum("q,fq,qk->fk", rule.weights, gn, rule.points)
    out = np.zeros(tri.nvertices)
    np.add.at(out, tri.facets[bf].ravel(), local.ravel())
    return out


def broken_norm(tri: Triangulation, values: np.ndarray) -> float:
    """Broken H1 seminorm of a scalar or vector CR field (exact)."""
    g = cr_cell_gradients(tri, np.asarray(values, dtype=float))
    sq = (g ** 2).reshape(tri.ncells, -1).sum(axis=1)
    return float(np.sqrt(np.dot(tri.areas, sq)))


def _field_at(tri, values, layout, rule):
    layout = Layout(layout)
    nq = len(rule.weights)
    if layout in (Layout.CR_SCALAR, Layout.CR_VECTOR):
        return evaluate_cr(tri, values, rule.points)
    if layout is Layout.P0:
        return np.broadcast_to(values[:, None], (tri.ncells, nq))
    if layout is Layout.P1:
        return np.einsum("qk,ck->cq", rule.points, values[tri.cells])
    if layout is Layout.P0_PLUS_P1:
        p0, p1 = values[:tri.ncells], values[tri.ncells:]
        return p0[:, None] + np.einsum("qk,ck->cq", rule.points, p1[tri.cells])
    raise ValueError(layout)


def l2_norm(tri: Triangulation, values, layout, rule=TRIANGLE_DEG5) -> float:
    rule = get_rule(rule)
    v = _field_at(tri, np.asarray(values, dtype=float), layout, rule)
    sq = v ** 2 if v.ndim == 2 else (v ** 2).sum(axis=-1)
    return float(np.sqrt(np.einsum("c,q,cq->", tri.areas, rule.weights, sq)))


def l2_error(tri: Triangulation, values, layout, exact_fn, rule=TRIANGLE_DEG5) -> float:
    """``||field - exact||_{L2}`` with the given cell quadrature.

    ``rule="barycentre"`` gives the discrete norm
    ``sqrt(sum_K |K| |field(G_K) - exact(G_K)|^2)``.
    """
    rule = get_rule(rule)
    layout = Layout(layout)
    v = _field_at(tri, np.asarray(values, dtype=float), layout, rule)
    pts = cell_points(tri, rule)
    ex = exact_fn(pts[..., 0], pts[..., 1])
    if layout is Layout.CR_VECTOR:
        diff = v - np.moveaxis(_vec(ex, pts.shape[:-1]), 0, -1)
        sq = (diff ** 2).sum(axis=-1)
    else:
        sq = (v - _scalar(ex, pts.shape[:-1])) ** 2
    return float(np.sqrt(np.einsum("c,q,cq->", tri.areas, rule.weights, sq)))
