import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncrflow import mesh
from ncrflow.mesh import MeshError, MeshFormatError


@pytest.mark.parametrize("mode", ["alternating", "uniform"])
@pytest.mark.parametrize("n", [2, 3, 8])
def test_structured_counts(n, mode):
    tri = mesh.generate_structured(n, mode)
    assert tri.nvertices == (n + 1) ** 2
    assert tri.ncells == 2 * n * n
    assert tri.nfacets == 3 * n * n + 2 * n
    assert len(tri.boundary_facets) == 4 * n
    assert np.isclose(tri.areas.sum(), 1.0, atol=1e-14)
    assert tri.h == pytest.approx(1.0 / n)


def test_alternating_mesh_satisfies_one_boundary_edge_condition():
    for n in (2, 4, 10):
        report = mesh.validate(mesh.generate_structured(n, "alternating"))
        assert report.structural_ok
        assert report.hypothesis_41


def test_uniform_mesh_violates_condition_at_a_corner():
    report = mesh.validate(mesh.generate_structured(4, "uniform"))
    assert report.structural_ok
    assert not report.hypothesis_41
    assert len(report.hypothesis_41_violations) == 2


def test_kershaw_zero_distortion_is_structured():
    a = mesh.generate_kershaw(8, 0.0, "alternating")
    b = mesh.generate_structured(8, "alternating")
    np.testing.assert_allclose(a.vertices, b.vertices, atol=1e-15)
    np.testing.assert_array_equal(a.cells, b.cells)


@pytest.mark.parametrize("d", [0.3, 0.6, 0.8])
def test_kershaw_is_valid(d):
    tri = mesh.generate_kershaw(16, d, "alternating")
    report = mesh.validate(tri)
    assert report.structural_ok
    assert np.all(tri.areas > 0)
    assert np.isclose(tri.areas.sum(), 1.0, atol=1e-13)


def test_normals_close_and_point_outward(kershaw_mesh):
    tri = kershaw_mesh
    np.testing.assert_allclose(tri.normals.sum(axis=1), 0.0, atol=1e-14)
    # outward: normal opposite vertex k points away from that vertex
    p = tri.vertices[tri.cells]
    for k in range(3):
        mid = 0.5 * (p[:, (k + 1) % 3] + p[:, (k + 2) % 3])
        assert np.all(np.einsum("cd,cd->c", tri.normals[:, k], mid - p[:, k]) > 0)


def test_boundary_facet_normals_point_out_of_the_square():
    tri = mesh.generate_structured(5)
    bf = tri.boundary_facets
    centre = np.array([0.5, 0.5])
    assert np.all(np.einsum("fd,fd->f", tri.facet_normals[bf], tri.facet_midpoints[bf] - centre) > 0)


def test_macro_element_fans(kershaw_mesh):
    tri = kershaw_mesh
    for j in range(tri.nvertices):
        m = tri.macro(j)
        assert m.nedges == m.ncells + (1 if m.is_boundary else 0)
        s0 = tri.vertices[j]
        # consecutive cells share edge i + 1
        for i in range(m.ncells - (1 if m.is_boundary else 0)):
            nxt = (i + 1) % m.ncells
            np.testing.assert_allclose(m.normal_out[i], -m.normal_in[nxt], atol=1e-15)
        # quadrangle corners are counterclockwise around S0
        for i in range(m.ncells):
            q = m.quad_vertices(i, tri) - s0
            area = 0.5 * sum(q[k, 0] * q[(k + 1) % 4, 1] - q[k, 1] * q[(k + 1) % 4, 0] for k in range(4))
            assert area == pytest.approx(m.quad_areas[i], rel=1e-12)


def test_quadrangles_tile_each_cell(kershaw_mesh):
    tri = kershaw_mesh
    total = np.zeros(tri.ncells)
    for j in range(tri.nvertices):
        m = tri.macro(j)
        np.add.at(total, m.cells, m.quad_areas)
    np.testing.assert_allclose(total, tri.areas, rtol=1e-13)


def test_quadrangle_centroid_matches_polygon_formula(kershaw_mesh):
    tri = kershaw_mesh
    m = tri.macro(tri.nvertices // 2)
    for i in range(m.ncells):
        q = m.quad_vertices(i, tri)
        x, y = q[:, 0], q[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = 0.5 * cross.sum()
        c = np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6 * a)
        np.testing.assert_allclose(m.quad_centroids[i], c, atol=1e-14)


def test_roundtrip(tmp_path, kershaw_mesh):
    path = tmp_path / "m.txt"
    mesh.write_mesh(kershaw_mesh, path)
    back = mesh.read_mesh(path)
    np.testing.assert_array_equal(back.vertices, kershaw_mesh.vertices)
    np.testing.assert_array_equal(back.cells, kershaw_mesh.cells)


@pytest.mark.parametrize("text,line", [
    ("bogus\n", 1),
    ("ncr-mesh 1\n3\n", 2),
    ("ncr-mesh 1\n3 1\n0 0\n1 0\n0 x\n0 1 2\n", 5),
    ("ncr-mesh 1\n3 1\n0 0\n1 0\n0 1\n0 1 7\n", 6),
])
def test_read_errors_carry_line_numbers(tmp_path, text, line):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(MeshFormatError) as err:
        mesh.read_mesh(path)
    assert err.value.lineno == line


def test_clockwise_cell_is_reoriented():
    tri = mesh.build_connectivity(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 2, 1]]))
    assert mesh.validate(tri).orientation_ok
    assert tri.areas[0] == pytest.approx(0.5)


@pytest.mark.parametrize("n,d", [(1, 0.0), (6, 0.3), (8, 1.0)])
def test_kershaw_rejects_bad_arguments(n, d):
    with pytest.raises(MeshError):
        mesh.generate_kershaw(n, d)


def test_degenerate_cell_rejected():
    with pytest.raises(MeshError):
        mesh.build_connectivity(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([[0, 1, 2]]))


def test_vertex_index_out_of_range():
    with pytest.raises(MeshError):
        mesh.macro_element(mesh.generate_structured(2), 99)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 12), st.sampled_from(["alternating", "uniform"]))
def test_euler_characteristic(n, mode):
    tri = mesh.generate_structured(n, mode)
    assert tri.nvertices - tri.nfacets + tri.ncells == 1
    assert mesh.validate(tri).euler_ok
