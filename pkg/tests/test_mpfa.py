import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncrflow import _jit, fem, kernels, mesh, mpfa


def _rot(v):
    """Clockwise rotation: scaled outward normal of a ccw edge vector."""
    return np.array([v[1], -v[0]])


def random_fan(rng, boundary):
    """Random star-shaped fan around the origin.

    Returns the rim points ``P_0 .. P_{ne-1}`` and the kernel inputs.  Cell
    ``i`` is ``(0, P_i, P_{i+1})`` in counter-clockwise order.
    """
    if boundary:
        m = int(rng.integers(1, 6))
        total = rng.uniform(np.pi / 3, np.pi)
        gaps = rng.dirichlet(np.full(m, 4.0)) * total
        ang = np.concatenate([[0.0], np.cumsum(gaps)])
    else:
        m = int(rng.integers(3, 9))
        while True:
            gaps = rng.dirichlet(np.full(m, 4.0)) * 2 * np.pi
            if gaps.max() < 0.9 * np.pi:
                break
        ang = np.concatenate([[0.0], np.cumsum(gaps)[:-1]])
    ang = ang + rng.uniform(0, 2 * np.pi)
    rim = rng.uniform(0.3, 1.5, len(ang))[:, None] * np.column_stack([np.cos(ang), np.sin(ang)])
    ne = len(rim)
    s_in, s_out, s_opp, area = [], [], [], []
    for i in range(m):
        a, b = rim[i], rim[(i + 1) % ne]
        s_in.append(_rot(a))          # edge 0 -> P_i
        s_out.append(_rot(-b))        # edge P_{i+1} -> 0
        s_opp.append(_rot(b - a))     # edge P_i -> P_{i+1}
        area.append(0.5 * (a[0] * b[1] - a[1] * b[0]))
    arr = lambda x: np.ascontiguousarray(np.array(x, dtype=float))
    return rim, (arr(area), arr(s_in), arr(s_out), arr(s_opp), bool(boundary))


def brute_force(rim, boundary):
    """Independent elimination through explicit 3-point affine interpolation.

    On cell ``i`` the pressure is the affine function through the edge
    one-third points ``P_i / 3`` and ``P_{i+1} / 3`` (auxiliary values) and
    the barycentre (cell value).  Interior edges carry continuity of the
    normal gradient with unit normals; boundary half-edges prescribe
    ``G . n |F| / 2``.  Returns ``C[i, l]`` and ``E[i, k]``.
    """
    ne = len(rim)
    m = ne - 1 if boundary else ne
    nxt = lambda i: (i + 1) % ne

    # P[i]: 2x3 map from (qt_i, qt_{i+1}, qb_i) to the gradient
    P = []
    for i in range(m):
        pts = np.array([rim[i] / 3, rim[nxt(i)] / 3, (rim[i] + rim[nxt(i)]) / 3])
        V = np.column_stack([np.ones(3), pts])
        P.append(np.linalg.inv(V)[1:])

    def grad_rows(i):
        # gradient of cell i as linear maps on qt (ne) and qb (m)
        gq = np.zeros((2, ne))
        gb = np.zeros((2, m))
        gq[:, i] += P[i][:, 0]
        gq[:, nxt(i)] += P[i][:, 1]
        gb[:, i] += P[i][:, 2]
        return gq, gb

    A = np.zeros((ne, ne))
    R = np.zeros((ne, m))
    F = np.zeros((ne, 2))
    edges = range(1, m) if boundary else range(m)
    for e in edges:
        left, right = (e - 1) % m, e
        n = _rot(rim[e]) / np.linalg.norm(rim[e])
        gq1, gb1 = grad_rows(left)
        gq2, gb2 = grad_rows(right)
        A[e] = n @ (gq1 - gq2)
        R[e] = -n @ (gb1 - gb2)
    if boundary:
        for row, cell, edge, k in ((0, 0, 0, 0), (m, m - 1, m, 1)):
            length = np.linalg.norm(rim[edge])
            n = _rot(rim[edge]) / length
            inside = (rim[cell] + rim[nxt(cell)]) / 3
            if n @ inside > 0:
                n = -n
            gq, gb = grad_rows(cell)
            A[row] = 0.5 * length * (n @ gq)
            R[row] = -0.5 * length * (n @ gb)
            F[row, k] = 1.0
    X = np.linalg.solve(A, np.hstack([R, F]))
    C = np.zeros((m, m, 2))
    E = np.zeros((m, 2, 2))
    for i in range(m):
        gq, gb = grad_rows(i)
        full = gq @ X
        C[i] = (full[:, :m] + gb).T
        E[i] = full[:, m:].T
    return C, E


@pytest.mark.parametrize("boundary", [False, True])
def test_elimination_matches_brute_force_on_random_fans(boundary):
    rng = np.random.default_rng(2024 + boundary)
    worst = 0.0
    for _ in range(50):
        rim, args = random_fan(rng, boundary)
        C, E, cond = kernels.eliminate_fan(*args)
        Cb, Eb = brute_force(rim, boundary)
        scale = max(1.0, np.abs(Cb).max())
        worst = max(worst, np.abs(C - Cb).max() / scale)
        if boundary:
            worst = max(worst, np.abs(E - Eb).max() / max(1.0, np.abs(Eb).max()))
        else:
            assert np.all(E == 0.0)
    assert worst <= 1e-12


def test_local_gradient_formula_is_three_point_interpolation():
    rng = np.random.default_rng(5)
    rim, args = random_fan(rng, False)
    area, s_in, s_out, s_opp, _ = args
    q = rng.standard_normal(3)
    for i in range(len(area)):
        a, b = rim[i], rim[(i + 1) % len(rim)]
        V = np.column_stack([np.ones(3), np.array([a / 3, b / 3, (a + b) / 3])])
        expected = np.linalg.solve(V, q)[1:]
        got = 1.5 / area[i] * (q[0] * s_in[i] + q[1] * s_out[i] + q[2] * s_opp[i])
        np.testing.assert_allclose(got, expected, atol=1e-12)


@pytest.mark.skipif(not _jit.USE_NUMBA, reason="numba disabled")
def test_jit_and_python_kernels_agree():
    rng = np.random.default_rng(9)
    for boundary in (False, True):
        for _ in range(10):
            _, args = random_fan(rng, boundary)
            C1, E1, c1 = kernels.eliminate_fan(*args)
            C2, E2, c2 = _jit.py_func(kernels.eliminate_fan)(*args)
            np.testing.assert_allclose(C1, C2, atol=1e-13)
            np.testing.assert_allclose(E1, E2, atol=1e-13)
            assert c1 == pytest.approx(c2, rel=1e-10)


def _affine_data(tri, a, b, c):
    p = lambda x, y: a + b * x + c * y
    grad = lambda x, y: (b + 0 * x, c + 0 * y)
    cell = p(tri.barycentres[:, 0], tri.barycentres[:, 1])
    return cell, mpfa.half_edge_flux(tri, grad), np.array([b, c])


@pytest.mark.parametrize("make", [lambda: mesh.generate_structured(6, "alternating"),
                                  lambda: mesh.generate_kershaw(8, 0.6, "alternating"),
                                  lambda: mesh.generate_structured(5, "uniform")])
def test_affine_gradient_reconstructed_exactly(make):
    tri = make()
    cell, flux, g = _affine_data(tri, 0.3, -1.7, 2.4)
    rec = mpfa.reconstruct_field(tri, cell, flux=flux)
    assert np.abs(rec.gradients - g).max() <= 1e-11


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_affine_exactness_property(a, b, c):
    tri = mesh.generate_kershaw(8, 0.5, "alternating")
    cell, flux, g = _affine_data(tri, a, b, c)
    rec = mpfa.reconstruct_field(tri, cell, flux=flux)
    assert np.abs(rec.gradients - g).max() <= 1e-11 * max(1.0, abs(b), abs(c))


def test_flux_continuity_residuals(kershaw_mesh, rng):
    tri = kershaw_mesh
    pressure = rng.standard_normal(tri.ncells)
    op = mpfa.assemble_mpfa(tri)
    rec = mpfa.reconstruct_field(tri, pressure, operator=op)
    t = op.table
    worst = 0.0
    for v in range(tri.nvertices):
        macro = tri.macro(v)
        s = t.fan_ptr[v]
        g = rec.gradients[s:s + macro.ncells]
        m = macro.ncells
        pairs = range(m - 1) if macro.is_boundary else range(m)
        for i in pairs:
            j = (i + 1) % m
            worst = max(worst, abs(g[i] @ macro.normal_out[i] + g[j] @ macro.normal_in[j]))
    assert worst < 1e-11


def test_boundary_half_edge_flux_is_honoured(kershaw_mesh, rng):
    tri = kershaw_mesh
    flux = rng.standard_normal(2 * len(tri.boundary_facets))
    op = mpfa.assemble_mpfa(tri, flux=flux)
    rec = mpfa.reconstruct_field(tri, rng.standard_normal(tri.ncells), operator=op)
    t = op.table
    for v in np.flatnonzero(tri.boundary_vertex):
        macro = tri.macro(v)
        s = t.fan_ptr[v]
        g0, g1 = rec.gradients[s], rec.gradients[s + macro.ncells - 1]
        assert 0.5 * g0 @ macro.normal_in[0] == pytest.approx(flux[t.half_edge[s, 0]], abs=1e-11)
        assert 0.5 * g1 @ macro.normal_out[-1] == pytest.approx(flux[t.half_edge[s, 1]], abs=1e-11)


def _shoelace(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * (x @ np.roll(y, -1) - y @ np.roll(x, -1))


def test_quadrangles_tile_every_cell(kershaw_mesh):
    tri = kershaw_mesh
    covered = np.zeros(tri.ncells)
    for v in range(tri.nvertices):
        macro = tri.macro(v)
        for i, c in enumerate(macro.cells):
            area = _shoelace(macro.quad_vertices(i, tri))
            assert area > 0
            assert area == pytest.approx(macro.quad_areas[i], rel=1e-12)
            covered[c] += area
    np.testing.assert_allclose(covered, tri.areas, rtol=1e-12)


def test_gmat_matches_quadrangle_quadrature(kershaw_mesh, rng):
    # independent route: integrate psi_f against the gradient on each quadrangle
    # split into two triangles with a degree-2 rule
    tri = kershaw_mesh
    pressure = rng.standard_normal(tri.ncells)
    op = mpfa.assemble_mpfa(tri)
    rec = mpfa.reconstruct_field(tri, pressure, operator=op)
    nf = tri.nfacets
    out = np.zeros(2 * nf)
    rule = fem.TRIANGLE_DEG2
    t = op.table
    for p in range(t.npositions):
        c = t.cells[p]
        loc = t.local_center[p]
        verts = tri.vertices[tri.cells[c]]
        s0 = verts[loc]
        a, b = verts[(loc + 1) % 3], verts[(loc + 2) % 3]
        g = tri.barycentres[c]
        for corners in ((s0, 0.5 * (s0 + a), g), (s0, g, 0.5 * (s0 + b))):
            corners = np.array(corners)
            area = abs(_shoelace(corners))
            pts = rule.points @ corners
            for k in range(3):
                psi = [fem.cr_basis(tri, c, k, x) for x in pts]
                integral = area * np.dot(rule.weights, psi)
                f = tri.cell_facets[c, k]
                out[f] += integral * rec.gradients[p, 0]
                out[nf + f] += integral * rec.gradients[p, 1]
    np.testing.assert_allclose(op.apply(pressure), out, atol=1e-12)


def test_gmat_annihilates_constants(kershaw_mesh):
    op = mpfa.assemble_mpfa(kershaw_mesh)
    np.testing.assert_allclose(op.gmat @ np.ones(kershaw_mesh.ncells), 0.0, atol=1e-12)


def test_macro_elimination_wrappers(small_mesh, rng):
    interior = next(v for v in range(small_mesh.nvertices) if not small_mesh.boundary_vertex[v])
    bnd = next(v for v in range(small_mesh.nvertices) if small_mesh.boundary_vertex[v])
    mi, mb = small_mesh.macro(interior), small_mesh.macro(bnd)
    rec = mpfa.eliminate_interior(mi, rng.standard_normal(mi.ncells))
    assert rec.gradients.shape == (mi.ncells, 2)
    recb = mpfa.eliminate_boundary(mb, rng.standard_normal(mb.ncells), [0.1, -0.2])
    assert recb.g0.shape == (mb.ncells, 2)
    with pytest.raises(ValueError):
        mpfa.eliminate_interior(mb, np.zeros(mb.ncells))
    with pytest.raises(ValueError):
        mpfa.eliminate_boundary(mb, np.zeros(mb.ncells + 1), [0.0, 0.0])


def test_reconstructed_error_is_exact_for_affine_pressure():
    tri = mesh.generate_kershaw(8, 0.6, "alternating")
    cell, flux, _ = _affine_data(tri, 0.0, 1.0, 1.0)
    exact = lambda x, y: x + y
    assert mpfa.reconstructed_l2_error(tri, cell, exact, flux=flux) < 1e-12


def test_near_singular_fan_is_reported():
    # a sliver cell makes the local matrix numerically singular
    rim = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 1e-13], [0.0, -1.0]])
    area, s_in, s_out, s_opp = [], [], [], []
    for i in range(4):
        a, b = rim[i], rim[(i + 1) % 4]
        s_in.append(_rot(a))
        s_out.append(_rot(-b))
        s_opp.append(_rot(b - a))
        area.append(0.5 * (a[0] * b[1] - a[1] * b[0]))
    area[1] = 1e-16
    _, _, cond = kernels.eliminate_fan(np.array(area), np.array(s_in), np.array(s_out),
                                       np.array(s_opp), False)
    assert not np.isfinite(cond) or cond > mpfa.COND_LIMIT
    with pytest.raises(mpfa.NearSingularLocalSystem, match="vertex 7"):
        mpfa._check_cond(7, cond)
