import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asfem.mesh import (MeshError, TriangleMesh, all_patches, builtin_mesh,
                        mesh_stats, read_mesh, refine_bisection,
                        uniform_refine, vertex_patch, write_mesh)


def cross_mesh():
    mesh, _ = uniform_refine(builtin_mesh("unit_square", 1), 1)
    return mesh


class TestBuiltinMesh:
    def test_unit_square_n1(self):
        m = builtin_mesh("unit_square", 1)
        assert m.num_vertices == 4
        assert m.num_triangles == 2
        assert len(m.edges) == 5

    def test_l_shape_n1(self):
        m = builtin_mesh("l_shape", 1)
        assert m.num_vertices == 8
        assert m.num_triangles == 6

    def test_unit_square_n2(self):
        # hand count: 2x2 grid of cells, each split in two
        m = builtin_mesh("unit_square", 2)
        assert m.num_vertices == 9
        assert m.num_triangles == 8

    def test_checkerboard_regions(self):
        m = builtin_mesh("checkerboard_square", 2)
        assert sorted(set(int(r) for r in m.region_id)) == [0, 1, 2, 3]
        # mesh aligned with the quadrant boundaries: no triangle straddles 0.5
        cent = m.vertices[m.triangles].mean(axis=1)
        for t, c in enumerate(cent):
            verts = m.vertices[m.triangles[t]]
            assert (verts[:, 0] <= 0.5 + 1e-15).all() or \
                   (verts[:, 0] >= 0.5 - 1e-15).all()

    def test_unknown_domain(self):
        with pytest.raises(ValueError, match="unknown domain"):
            builtin_mesh("hexagon", 1)

    def test_bad_n0(self):
        with pytest.raises(ValueError):
            builtin_mesh("unit_square", 0)

    def test_orientation_positive(self):
        for dom in ("unit_square", "l_shape", "checkerboard_square"):
            m = builtin_mesh(dom, 2)
            assert (m.signed_areas() > 0).all()


class TestRefinement:
    def test_marked_one_forces_neighbor(self):
        # shared diagonal is the refinement edge of both triangles
        m = builtin_mesh("unit_square", 1)
        r = refine_bisection(m, {0})
        assert r.num_triangles == 4
        assert r.num_vertices == 5
        r.validate(deep=True)

    def test_empty_marking_returns_unchanged(self):
        m = builtin_mesh("unit_square", 1)
        assert refine_bisection(m, set()) is m

    def test_out_of_range(self):
        m = builtin_mesh("unit_square", 1)
        with pytest.raises(IndexError):
            refine_bisection(m, {7})

    def test_min_angle_bound(self):
        # repeated full refinement: min angle never below half the initial
        m = builtin_mesh("unit_square", 1)
        m = refine_bisection(m, {0, 1})
        initial = builtin_mesh("unit_square", 1).min_angles().min()
        for _ in range(3):
            m = refine_bisection(m, range(m.num_triangles))
            assert m.min_angles().min() >= initial / 2 - 1e-12

    def test_invariants_after_random_markings(self):
        rng = np.random.default_rng(7)
        m = builtin_mesh("l_shape", 1)
        initial_angle = m.min_angles().min()
        for _ in range(6):
            marked = rng.choice(m.num_triangles,
                                size=max(1, m.num_triangles // 3),
                                replace=False)
            m = refine_bisection(m, marked)
            m.validate(deep=True)
            assert m.min_angles().min() >= initial_angle / 2 - 1e-12

    def test_genealogy_areas(self):
        m = builtin_mesh("l_shape", 1)
        r = refine_bisection(m, {0, 3})
        assert r.parent is not None
        old_areas = m.areas()
        new_areas = r.areas()
        for k in range(m.num_triangles):
            children = np.flatnonzero(r.parent == k)
            assert children.size >= 1
            assert np.isclose(new_areas[children].sum(), old_areas[k],
                              rtol=1e-14)

    def test_region_inheritance(self):
        m = builtin_mesh("checkerboard_square", 1)
        r = refine_bisection(m, range(m.num_triangles))
        assert np.array_equal(r.region_id, m.region_id[r.parent])

    def test_marked_triangles_are_bisected(self):
        m = builtin_mesh("l_shape", 2)
        marked = {0, 5, 11}
        r = refine_bisection(m, marked)
        counts = np.bincount(r.parent, minlength=m.num_triangles)
        for k in marked:
            assert counts[k] >= 2


class TestVertexPatch:
    def test_cross_center(self):
        m = cross_mesh()
        p = vertex_patch(m, 4)  # the bisection vertex is appended last
        assert len(p.triangles) == 4
        assert len(p.interior_edges) == 4

    def test_corner_of_two_triangle_square(self):
        m = builtin_mesh("unit_square", 1)
        for k in range(4):
            p = vertex_patch(m, k)
            assert len(p.triangles) in (1, 2)
            assert len(p.interior_edges) in (0, 1)

    def test_patch_covering_multiplicity(self):
        m, _ = uniform_refine(builtin_mesh("l_shape", 1), 3)
        patches = all_patches(m)
        total = sum(len(p.triangles) for p in patches)
        assert total == 3 * m.num_triangles

    def test_every_patch_triangle_contains_vertex(self):
        m, _ = uniform_refine(builtin_mesh("unit_square", 2), 2)
        for p in all_patches(m):
            assert (m.triangles[p.triangles] == p.vertex).any(axis=1).all()

    def test_mesh_size_comparability(self):
        # h_e <= h_T <= h_k <= 2 max h_T within every patch
        m, _ = uniform_refine(builtin_mesh("l_shape", 1), 4)
        h = m.diameters()
        lengths = m.edge_lengths()
        for p in all_patches(m):
            h_tris = h[p.triangles]
            assert p.diameter <= 2 * h_tris.max() + 1e-14
            assert p.diameter >= h_tris.max() - 1e-14
            for e in p.interior_edges:
                assert lengths[e] <= p.diameter + 1e-14

    def test_invalid_vertex(self):
        with pytest.raises(IndexError):
            vertex_patch(builtin_mesh("unit_square", 1), 99)


class TestMeshStats:
    def test_two_triangle_square_overlap(self):
        assert mesh_stats(builtin_mesh("unit_square", 1)).max_overlap == 4

    def test_cross_overlap(self):
        # hand adjacency count: all five patches pairwise intersect
        assert mesh_stats(cross_mesh()).max_overlap == 5

    def test_overlap_constant_under_uniform_refinement(self):
        # measured: M stabilizes at 25 from the fourth sweep on
        m = builtin_mesh("unit_square", 1)
        values = []
        for _ in range(7):
            m, _ = uniform_refine(m, 1)
            values.append(mesh_stats(m).max_overlap)
        assert values[3:] == [25] * len(values[3:])

    def test_h_range(self):
        st = mesh_stats(builtin_mesh("unit_square", 2))
        assert st.h_min == pytest.approx(np.sqrt(2) / 2)
        assert st.h_max == pytest.approx(np.sqrt(2) / 2)


class TestValidation:
    def test_negative_orientation_rejected(self):
        with pytest.raises(MeshError, match="orientation"):
            TriangleMesh([[0, 0], [1, 0], [0, 1]], [[0, 2, 1]])

    def test_hanging_node_detected(self):
        # split one triangle of the square without closure
        verts = [[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]]
        tris = [[0, 1, 4], [1, 2, 4], [0, 2, 3]]
        with pytest.raises(MeshError, match="hanging"):
            TriangleMesh(verts, tris).validate(deep=True)

    def test_overshared_edge_rejected(self):
        verts = [[0, 0], [1, 0], [0, 1], [1, 1], [-1, 0.5]]
        tris = [[0, 1, 2], [1, 3, 2], [0, 2, 4]]
        TriangleMesh(verts, tris)  # edge (0,2) shared by 2: fine
        tris.append([0, 1, 2])
        with pytest.raises(MeshError, match="conformity"):
            TriangleMesh(verts, [[0, 1, 2], [1, 3, 2], [2, 0, 4], [0, 1, 2]])


class TestAsciiFormat:
    def test_round_trip_builtin(self, tmp_path):
        m = builtin_mesh("checkerboard_square", 2)
        path = tmp_path / "mesh.txt"
        write_mesh(m, path)
        m2 = read_mesh(path)
        assert np.array_equal(m.vertices, m2.vertices)
        assert np.array_equal(m.triangles, m2.triangles)
        assert np.array_equal(m.region_id, m2.region_id)
        assert m.boundary_markers == m2.boundary_markers
        # writing again is bit-identical
        path2 = tmp_path / "mesh2.txt"
        write_mesh(m2, path2)
        assert path.read_text() == path2.read_text()

    def test_round_trip_after_refinement(self, tmp_path):
        m, _ = uniform_refine(builtin_mesh("l_shape", 1), 3)
        path = tmp_path / "mesh.txt"
        write_mesh(m, path)
        m2 = read_mesh(path)
        assert np.array_equal(m.vertices, m2.vertices)
        assert np.array_equal(m.triangles, m2.triangles)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6,
                              allow_nan=False, width=64),
                    min_size=4, max_size=4))
    def test_coordinates_round_trip_bit_exact(self, coords, tmp_path_factory):
        # arbitrary double coordinates survive write/read exactly
        x0, y0, dx, dy = coords
        verts = np.array([[x0, y0], [x0 + abs(dx) + 1.0, y0],
                          [x0, y0 + abs(dy) + 1.0]])
        m = TriangleMesh(verts, [[0, 1, 2]])
        path = tmp_path_factory.mktemp("io") / "m.txt"
        write_mesh(m, path)
        m2 = read_mesh(path)
        assert np.array_equal(m.vertices, m2.vertices)

    def test_truncated_file(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("4 2 4\n0 0\n")
        with pytest.raises(MeshError, match="truncated"):
            read_mesh(path)

    def test_read_rejects_hanging_node(self, tmp_path):
        path = tmp_path / "hang.txt"
        path.write_text("5 3 5\n0 0\n1 0\n1 1\n0 1\n0.5 0.5\n"
                        "0 1 4 0\n1 2 4 0\n0 2 3 0\n"
                        "0 1 0\n1 2 0\n2 3 0\n3 0 0\n0 3 0\n")
        with pytest.raises(MeshError, match="hanging"):
            read_mesh(path)
