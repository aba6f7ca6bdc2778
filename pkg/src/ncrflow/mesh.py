"""Triangulations of 2D polygonal domains.

A :class:`Triangulation` stores vertices and counterclockwise cells together
with the derived facet connectivity, boundary classification, vertex
adjacency and the geometric quantities every discretization in this package
needs.  Local numbering convention: local facet ``k`` of a cell is the edge
opposite its local vertex ``k``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "MeshError",
    "MeshFormatError",
    "Triangulation",
    "MacroElement",
    "ValidationReport",
    "build_connectivity",
    "generate_structured",
    "generate_kershaw",
    "macro_element",
    "validate",
    "read_mesh",
    "write_mesh",
]


class MeshError(ValueError):
    """Invalid mesh input (degenerate cell, non-manifold facet, bad generator args)."""


class MeshFormatError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Simplicial mesh with connectivity and geometry caches.

    Attributes
    ----------
    vertices : (nv, 2) float array
    cells : (nc, 3) int array, counterclockwise
    facets : (nf, 2) int array, sorted vertex pairs
    facet_cells : (nf, 2) int array
        Incident cells; column 1 is ``-1`` on boundary facets.  The facet
        normal points out of ``facet_cells[f, 0]``.
    facet_local : (nf, 2) int array
        Local facet index of ``f`` inside each incident cell (``-1`` if none).
    cell_facets : (nc, 3) int array
        ``cell_facets[c, k]`` is the facet opposite local vertex ``k``.
    areas : (nc,) float array
    barycentres : (nc, 2) float array
    normals : (nc, 3, 2) float array
        Scaled outward normal of the facet opposite local vertex ``k``;
        its length equals the facet length.
    facet_lengths, facet_midpoints, facet_normals
        Facet geometry; normals have unit length.
    boundary_facet : (nf,) bool array
    boundary_vertex : (nv,) bool array
    vertex_cell_ptr, vertex_cell_idx : CSR adjacency vertex -> cells
    vertex_vertex_ptr, vertex_vertex_idx : CSR adjacency vertex -> neighbours
    nominal_h : float or None
        Grid spacing for generated meshes; used as the reported mesh size.
    """

    vertices: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    facet_local: np.ndarray
    cell_facets: np.ndarray
    areas: np.ndarray
    barycentres: np.ndarray
    normals: np.ndarray
    facet_lengths: np.ndarray
    facet_midpoints: np.ndarray
    facet_normals: np.ndarray
    boundary_facet: np.ndarray
    boundary_vertex: np.ndarray
    vertex_cell_ptr: np.ndarray
    vertex_cell_idx: np.ndarray
    vertex_vertex_ptr: np.ndarray
    vertex_vertex_idx: np.ndarray
    nominal_h: float | None = None
    _macro_cache: dict = field(default_factory=dict, repr=False)

    @property
    def nvertices(self) -> int:
        return len(self.vertices)

    @property
    def ncells(self) -> int:
        return len(self.cells)

    @property
    def nfacets(self) -> int:
        return len(self.facets)

    @property
    def interior_facets(self) -> np.ndarray:
        return np.flatnonzero(~self.boundary_facet)

    @property
    def boundary_facets(self) -> np.ndarray:
        return np.flatnonzero(self.boundary_facet)

    @property
    def diameter(self) -> float:
        """Largest cell diameter."""
        return float(self.facet_lengths.max())

    @property
    def h(self) -> float:
        """Reported mesh size: grid spacing if known, else the largest diameter."""
        return self.nominal_h if self.nominal_h is not None else self.diameter

    def vertex_cells(self, j: int) -> np.ndarray:
        return self.vertex_cell_idx[self.vertex_cell_ptr[j]:self.vertex_cell_ptr[j + 1]]

    def vertex_neighbours(self, j: int) -> np.ndarray:
        return self.vertex_vertex_idx[self.vertex_vertex_ptr[j]:self.vertex_vertex_ptr[j + 1]]

    def barycentric_gradients(self) -> np.ndarray:
        """``(nc, 3, 2)`` gradients of the barycentric coordinates."""
        return -self.normals / (2.0 * self.areas[:, None, None])

    def macro(self, j: int) -> "MacroElement":
        return macro_element(self, j)


def _csr(groups_src, groups_dst, n):
    order = np.lexsort((groups_dst, groups_src))
    src = groups_src[order]
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, src + 1, 1)
    return np.cumsum(ptr), groups_dst[order].astype(np.int64)


def build_connectivity(vertices, cells, nominal_h=None) -> Triangulation:
    """Build a :class:`Triangulation` from raw vertex coordinates and cells.

    Clockwise cells are reoriented.  Raises :class:`MeshError` on degenerate
    cells, duplicate cells, out-of-range indices or non-manifold facets.
    """
    vertices = np.ascontiguousarray(vertices, dtype=float)
    cells = np.array(cells, dtype=np.int64, copy=True)
    if vertices.ndim != 2 or vertices.shape[1] != 2:
        raise MeshError("vertices must have shape (nv, 2)")
    if cells.ndim != 2 or cells.shape[1] != 3:
        raise MeshError("cells must have shape (nc, 3)")
    nv, nc = len(vertices), len(cells)
    if nc == 0:
        raise MeshError("mesh has no cells")
    if cells.min() < 0 or cells.max() >= nv:
        raise MeshError("cell references a vertex index out of range")
    if np.any(cells[:, 0] == cells[:, 1]) or np.any(cells[:, 1] == cells[:, 2]) \
            or np.any(cells[:, 0] == cells[:, 2]):
        raise MeshError("cell with repeated vertex")
    keys = np.sort(cells, axis=1)
    if len(np.unique(keys, axis=0)) != nc:
        raise MeshError("duplicate cells")

    p = vertices[cells]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    scale = np.maximum(np.einsum("ij,ij->i", e1, e1), np.einsum("ij,ij->i", e2, e2))
    degenerate = np.abs(signed) <= 1e-14 * scale
    if degenerate.any():
        bad = int(np.flatnonzero(degenerate)[0])
        raise MeshError(f"degenerate (zero-area) cell {bad}")
    cw = signed < 0
    cells[cw] = cells[cw][:, [0, 2, 1]]
    areas = np.abs(signed)

    p = vertices[cells]
    # normal opposite local vertex k: rotate the edge (k+1 -> k+2) clockwise
    nxt = p[:, [1, 2, 0]]
    nxt2 = p[:, [2, 0, 1]]
    edge = nxt2 - nxt
    normals = np.stack([edge[..., 1], -edge[..., 0]], axis=-1)
    barycentres = p.mean(axis=1)

    local_pairs = np.stack([cells[:, [1, 2, 0]], cells[:, [2, 0, 1]]], axis=-1)  # (nc,3,2)
    pair_keys = np.sort(local_pairs.reshape(-1, 2), axis=1)
    facets, inverse, counts = np.unique(pair_keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    if counts.max() > 2:
        bad = int(np.flatnonzero(counts > 2)[0])
        raise MeshError(f"non-manifold facet {tuple(facets[bad])} shared by {counts[bad]} cells")
    nf = len(facets)
    cell_facets = inverse.reshape(nc, 3)

    owner = np.repeat(np.arange(nc), 3)
    local = np.tile(np.arange(3), nc)
    order = np.lexsort((owner, inverse))
    facet_cells = -np.ones((nf, 2), dtype=np.int64)
    facet_local = -np.ones((nf, 2), dtype=np.int64)
    first = np.ones(len(order), dtype=bool)
    sorted_f = inverse[order]
    first[1:] = sorted_f[1:] != sorted_f[:-1]
    facet_cells[sorted_f[first], 0] = owner[order][first]
    facet_local[sorted_f[first], 0] = local[order][first]
    facet_cells[sorted_f[~first], 1] = owner[order][~first]
    facet_local[sorted_f[~first], 1] = local[order][~first]

    boundary_facet = facet_cells[:, 1] < 0
    boundary_vertex = np.zeros(nv, dtype=bool)
    boundary_vertex[facets[boundary_facet].ravel()] = True

    fv = vertices[facets]
    facet_lengths = np.linalg.norm(fv[:, 1] - fv[:, 0], axis=1)
    facet_midpoints = fv.mean(axis=1)
    own_normals = normals[facet_cells[:, 0], facet_local[:, 0]]
    facet_normals = own_normals / facet_lengths[:, None]

    vc_ptr, vc_idx = _csr(cells.ravel(), owner, nv)
    src = np.concatenate([facets[:, 0], facets[:, 1]])
    dst = np.concatenate([facets[:, 1], facets[:, 0]])
    vv_ptr, vv_idx = _csr(src, dst, nv)

    used = np.zeros(nv, dtype=bool)
    used[cells.ravel()] = True
    if not used.all():
        raise MeshError(f"vertex {int(np.flatnonzero(~used)[0])} is not used by any cell")

    return Triangulation(
        vertices=vertices,
        cells=cells,
        facets=facets.astype(np.int64),
        facet_cells=facet_cells,
        facet_local=facet_local,
        cell_facets=cell_facets.astype(np.int64),
        areas=areas,
        barycentres=barycentres,
        normals=normals,
        facet_lengths=facet_lengths,
        facet_midpoints=facet_midpoints,
        facet_normals=facet_normals,
        boundary_facet=boundary_facet,
        boundary_vertex=boundary_vertex,
        vertex_cell_ptr=vc_ptr,
        vertex_cell_idx=vc_idx,
        vertex_vertex_ptr=vv_ptr,
        vertex_vertex_idx=vv_idx,
        nominal_h=nominal_h,
    )


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def _alternating_parity(n):
    idx = np.arange(n)
    # for odd n, shift the parity in the upper halves so all four corners
    # get a diagonal through the corner vertex
    shift = (n % 2) * (idx > n // 2)
    return idx + shift


def _diagonals(n, mode):
    if mode == "uniform":
        return np.ones((n, n), dtype=bool)
    if mode == "alternating":
        pi = _alternating_parity(n)
        return (pi[:, None] + pi[None, :]) % 2 == 1
    raise MeshError(f"unknown diagonal mode {mode!r}")


def _split_grid(xy, n, anti):
    """Split the ``n x n`` quads of a logically rectangular grid into triangles.

    ``anti[i, j]`` selects the diagonal joining the lower-right and upper-left
    corners of quad ``(i, j)``; otherwise lower-left to upper-right is used.
    """
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    i, j, anti = i.ravel(), j.ravel(), anti.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    t1 = np.where(anti[:, None], np.stack([v00, v10, v01], 1), np.stack([v00, v10, v11], 1))
    t2 = np.where(anti[:, None], np.stack([v10, v11, v01], 1), np.stack([v00, v11, v01], 1))
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = t1
    cells[1::2] = t2
    return build_connectivity(xy, cells, nominal_h=1.0 / n)


def _grid_points(n):
    s = np.linspace(0.0, 1.0, n + 1)
    x, y = np.meshgrid(s, s, indexing="xy")
    return np.column_stack([x.ravel(), y.ravel()])


def generate_structured(n: int, diagonal_mode: str = "alternating") -> Triangulation:
    """Uniform triangulation of the unit square with ``n`` intervals per side.

    ``diagonal_mode="uniform"`` cuts every square along the same
    (lower-right to upper-left) diagonal, which leaves the corner triangles at
    (0, 0) and (1, 1) with two boundary edges.  ``"alternating"`` flips the
    diagonal with the cell parity so that no triangle has two boundary edges.
    """
    if int(n) != n or n < 2:
        raise MeshError(f"structured mesh needs n >= 2, got {n}")
    n = int(n)
    return _split_grid(_grid_points(n), n, _diagonals(n, diagonal_mode))


def generate_kershaw(n: int, distortion: float, diagonal_mode: str = "uniform") -> Triangulation:
    """Kershaw-type z-sheared grid of the unit square, cut into triangles.

    Vertical positions are displaced by ``distortion * tent(y) * z(x)`` where
    ``z`` is a z-shaped profile with breakpoints at x = 1/4 and 3/4 and the
    tent vanishes on the bottom and top boundaries.  Every quadrilateral is
    split with the same diagonal pattern as :func:`generate_structured` in
    the given ``diagonal_mode``, so ``distortion=0`` reproduces that mesh
    exactly.  The default ``"uniform"`` split violates the one-boundary-edge
    condition at two corners; use ``"alternating"`` with the P0+P1 scheme.
    """
    if int(n) != n or n < 4 or n % 4:
        raise MeshError(f"Kershaw mesh needs n >= 4 divisible by 4, got {n}")
    if not (0.0 <= distortion < 1.0):
        raise MeshError(f"distortion must lie in [0, 1), got {distortion}")
    n = int(n)
    xy = _grid_points(n)
    xi, eta = xy[:, 0], xy[:, 1]
    z = np.interp(xi, [0.0, 0.25, 0.75, 1.0], [-0.5, -0.5, 0.5, 0.5])
    tent = 2.0 * np.minimum(eta, 1.0 - eta)
    xy[:, 1] = eta + distortion * tent * z
    return _split_grid(xy, n, _diagonals(n, diagonal_mode))


# --------------------------------------------------------------------------
# macro-elements
# --------------------------------------------------------------------------

# barycentric coordinates of the centroid of the quadrangle (S0, M_i, G, M_i+1)
_QUAD_CENTROID_BARY = np.array([11.0 / 18.0, 7.0 / 36.0, 7.0 / 36.0])


@dataclass(frozen=True, eq=False)
class MacroElement:
    """Fan of cells around one vertex ``S_0`` with its quadrangle subdivision.

    Fan position ``i`` (0-based) is the cell ``K_i = (S_0, S_i, S_{i+1})``
    with edges ``F_i = S_0 S_i`` and ``F_{i+1}``.  For an interior vertex the
    fan is cyclic and ``len(edges) == len(cells)``; for a boundary vertex
    ``len(edges) == len(cells) + 1`` and the first and last edges lie on the
    boundary.

    ``normal_in[i]`` is the scaled outward normal of ``K_i`` at ``F_i``,
    ``normal_out[i]`` the one at ``F_{i+1}`` and ``normal_opp[i]`` the one at
    the edge opposite ``S_0``.
    """

    center_vertex: int
    is_boundary: bool
    cells: np.ndarray
    local_center: np.ndarray
    edge_vertices: np.ndarray
    edges: np.ndarray
    edge_midpoints: np.ndarray
    normal_in: np.ndarray
    normal_out: np.ndarray
    normal_opp: np.ndarray
    cell_areas: np.ndarray
    cell_barycentres: np.ndarray
    quad_areas: np.ndarray
    quad_centroids: np.ndarray

    @property
    def ncells(self) -> int:
        return len(self.cells)

    @property
    def nedges(self) -> int:
        return len(self.edges)

    def quad_vertices(self, i: int, tri: Triangulation) -> np.ndarray:
        """Corners ``(S_0, M_i, G_i, M_{i+1})`` of quadrangle ``i``."""
        s0 = tri.vertices[self.center_vertex]
        nxt = (i + 1) % self.nedges
        return np.array([s0, self.edge_midpoints[i], self.cell_barycentres[i],
                         self.edge_midpoints[nxt]])


def _fan(tri: Triangulation, j: int):
    cells = tri.vertex_cells(j)
    if len(cells) == 0:
        raise MeshError(f"vertex {j} has no incident cells")
    loc = np.array([int(np.flatnonzero(tri.cells[c] == j)[0]) for c in cells])
    s_in = tri.cells[cells, (loc + 1) % 3]
    s_out = tri.cells[cells, (loc + 2) % 3]
    by_in = {}
    for k, s in enumerate(s_in):
        if s in by_in:
            raise MeshError(f"non-manifold fan around vertex {j}")
        by_in[int(s)] = k
    out_set = set(int(s) for s in s_out)
    starts = [k for k, s in enumerate(s_in) if int(s) not in out_set]
    if tri.boundary_vertex[j]:
        if len(starts) != 1:
            raise MeshError(f"non-manifold fan around boundary vertex {j}")
        start = starts[0]
    else:
        if starts:
            raise MeshError(f"inconsistent fan around interior vertex {j}")
        # start from the incident edge with the smallest facet index
        first_edges = tri.cell_facets[cells, (loc + 2) % 3]  # edge S0-S_in is opposite s_out
        start = int(np.argmin(first_edges))
    order = [start]
    while len(order) < len(cells):
        nxt = by_in.get(int(s_out[order[-1]]))
        if nxt is None or nxt == start:
            raise MeshError(f"non-manifold fan around vertex {j}")
        order.append(nxt)
    if not tri.boundary_vertex[j] and int(s_out[order[-1]]) != int(s_in[start]):
        raise MeshError(f"open fan around interior vertex {j}")
    order = np.array(order)
    return cells[order], loc[order], s_in[order], s_out[order]


def macro_element(tri: Triangulation, j: int) -> MacroElement:
    """Ordered fan and quadrangle subdivision around vertex ``j``."""
    j = int(j)
    if not 0 <= j < tri.nvertices:
        raise MeshError(f"vertex index {j} out of range")
    cached = tri._macro_cache.get(j)
    if cached is not None:
        return cached
    cells, loc, s_in, s_out = _fan(tri, j)
    is_b = bool(tri.boundary_vertex[j])
    edge_vertices = s_in if not is_b else np.append(s_in, s_out[-1])
    # F_i = S0 S_i is opposite S_{i+1} in K_i; the last boundary edge is opposite S_m
    edges = tri.cell_facets[cells, (loc + 2) % 3]
    if is_b:
        edges = np.append(edges, tri.cell_facets[cells[-1], (loc[-1] + 1) % 3])
    s0 = tri.vertices[j]
    mids = 0.5 * (s0 + tri.vertices[edge_vertices])
    normal_in = tri.normals[cells, (loc + 2) % 3]
    normal_out = tri.normals[cells, (loc + 1) % 3]
    normal_opp = tri.normals[cells, loc]
    areas = tri.areas[cells]
    bary = tri.barycentres[cells]
    pts = np.stack([np.broadcast_to(s0, (len(cells), 2)), tri.vertices[s_in], tri.vertices[s_out]], 1)
    centroids = np.einsum("k,ikd->id", _QUAD_CENTROID_BARY, pts)
    macro = MacroElement(
        center_vertex=j,
        is_boundary=is_b,
        cells=cells,
        local_center=loc,
        edge_vertices=edge_vertices,
        edges=edges,
        edge_midpoints=mids,
        normal_in=normal_in,
        normal_out=normal_out,
        normal_opp=normal_opp,
        cell_areas=areas,
        cell_barycentres=bary,
        quad_areas=areas / 3.0,
        quad_centroids=centroids,
    )
    tri._macro_cache[j] = macro
    return macro


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------

@dataclass
class ValidationReport:
    orientation_ok: bool
    euler_ok: bool
    euler_characteristic: int
    manifold_ok: bool
    normals_closed: bool
    hypothesis_41: bool
    hypothesis_41_violations: list
    messages: list

    @property
    def structural_ok(self) -> bool:
        return self.orientation_ok and self.euler_ok and self.manifold_ok and self.normals_closed

    def summary(self) -> str:
        lines = [
            f"orientation: {'pass' if self.orientation_ok else 'FAIL'}",
            f"euler: {'pass' if self.euler_ok else 'FAIL'} (V-F+C = {self.euler_characteristic})",
            f"manifold: {'pass' if self.manifold_ok else 'FAIL'}",
            f"normals: {'pass' if self.normals_closed else 'FAIL'}",
            f"hypothesis_41: {'pass' if self.hypothesis_41 else 'FAIL'}"
            + (f" (cells {self.hypothesis_41_violations})" if self.hypothesis_41_violations else ""),
        ]
        return "\n".join(lines + self.messages)


def validate(tri: Triangulation) -> ValidationReport:
    """Report structural checks and the one-boundary-edge-per-cell condition."""
    messages = []
    p = tri.vertices[tri.cells]
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    signed = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    orientation_ok = bool(np.all(signed > 0))
    if not orientation_ok:
        messages.append(f"{int(np.sum(signed <= 0))} cells not counterclockwise")
    chi = tri.nvertices - tri.nfacets + tri.ncells
    euler_ok = chi == 1
    manifold_ok = True
    try:
        for j in range(tri.nvertices):
            macro_element(tri, j)
    except MeshError as exc:
        manifold_ok = False
        messages.append(str(exc))
    perim = tri.facet_lengths[tri.cell_facets].sum(axis=1)
    closure = np.abs(tri.normals.sum(axis=1)).max(axis=1)
    normals_closed = bool(np.all(closure <= 1e-14 * perim))
    nb = tri.boundary_facet[tri.cell_facets].sum(axis=1)
    violations = [int(c) for c in np.flatnonzero(nb >= 2)]
    return ValidationReport(
        orientation_ok=orientation_ok,
        euler_ok=euler_ok,
        euler_characteristic=int(chi),
        manifold_ok=manifold_ok,
        normals_closed=normals_closed,
        hypothesis_41=not violations,
        hypothesis_41_violations=violations,
        messages=messages,
    )


# --------------------------------------------------------------------------
# file IO
# --------------------------------------------------------------------------

MESH_MAGIC = "ncr-mesh 1"


def write_mesh(tri: Triangulation, path) -> None:
    lines = [MESH_MAGIC, f"{tri.nvertices} {tri.ncells}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in tri.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in tri.cells]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> Triangulation:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != MESH_MAGIC:
        raise MeshFormatError(f"expected header {MESH_MAGIC!r}", 1)
    if len(text) < 2:
        raise MeshFormatError("missing size line", 2)
    try:
        nv, nc = (int(t) for t in text[1].split())
    except ValueError:
        raise MeshFormatError("size line must be '<nvertices> <ncells>'", 2) from None
    if nv <= 0 or nc <= 0:
        raise MeshFormatError("counts must be positive", 2)
    if len(text) < 2 + nv + nc:
        raise MeshFormatError(f"expected {nv} vertices and {nc} cells, file too short", len(text))
    vertices = np.empty((nv, 2))
    for k in range(nv):
        lineno = 3 + k
        parts = text[lineno - 1].split()
        try:
            if len(parts) != 2:
                raise ValueError
            vertices[k] = [float(parts[0]), float(parts[1])]
        except ValueError:
            raise MeshFormatError("vertex line must be 'x y'", lineno) from None
        if not np.all(np.isfinite(vertices[k])):
            raise MeshFormatError("non-finite coordinate", lineno)
    cells = np.empty((nc, 3), dtype=np.int64)
    for k in range(nc):
        lineno = 3 + nv + k
        parts = text[lineno - 1].split()
        try:
            if len(parts) != 3:
                raise ValueError
            cells[k] = [int(t) for t in parts]
        except ValueError:
            raise MeshFormatError("cell line must be 'i j k'", lineno) from None
        if cells[k].min() < 0 or cells[k].max() >= nv:
            raise MeshFormatError(f"vertex index out of range [0, {nv})", lineno)
    for extra in text[2 + nv + nc:]:
        if extra.strip():
            raise MeshFormatError("trailing data", 3 + nv + nc)
    return build_connectivity(vertices, cells)
