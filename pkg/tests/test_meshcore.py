import numpy as np
import pytest

from deformsynth.errors import (
    DegenerateGeometryError,
    MeshFormatError,
    MeshStructureError,
)
from deformsynth.meshcore import (
    build_mesh,
    compute_weights,
    load_obj,
    save_obj,
    read_obj_sequence,
    write_obj_sequence,
    make_sequence,
)
from deformsynth.synthetic import grid_mesh

from helpers import triangle_mesh


def write(tmp_path, text, name="mesh.obj"):
    path = tmp_path / name
    path.write_text(text)
    return path


class TestLoadObj:
    def test_single_triangle(self, tmp_path):
        mesh = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
        assert mesh.vertex_count == 3
        assert mesh.face_count == 1
        assert list(mesh.adjacency[0]) == [1, 2]

    def test_quad_fan(self, tmp_path):
        mesh = load_obj(
            write(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n")
        )
        assert mesh.face_count == 2
        assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_out_of_range_index(self, tmp_path):
        with pytest.raises(MeshStructureError, match="out of range"):
            load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"))

    def test_malformed_line_reports_number(self, tmp_path):
        with pytest.raises(MeshFormatError, match="line 2"):
            load_obj(write(tmp_path, "v 0 0 0\nv 1 frog 0\nv 0 1 0\nf 1 2 3\n"))

    def test_comments_and_unknown_tags_skipped(self, tmp_path):
        text = "# header\nvn 0 0 1\nv 0 0 0\nv 1 0 0 # inline\nv 0 1 0\ns off\nf 1 2 3\n"
        mesh = load_obj(write(tmp_path, text))
        assert mesh.vertex_count == 3

    def test_slash_indices(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1 2/2 3/3\n"
        assert load_obj(write(tmp_path, text)).face_count == 1

    def test_non_manifold_rejected(self, tmp_path):
        text = (
            "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nv 0 -1 0\n"
            "f 1 2 3\nf 1 2 4\nf 1 2 5\n"
        )
        with pytest.raises(MeshStructureError, match="more than two faces"):
            load_obj(write(tmp_path, text))

    def test_isolated_vertex_rejected(self, tmp_path):
        text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 5 5 5\nf 1 2 3\n"
        with pytest.raises(MeshStructureError, match="fewer than two"):
            load_obj(write(tmp_path, text))


class TestWeights:
    def test_equilateral_interior_edge(self):
        h = np.sqrt(3) / 2
        verts = np.array([[0, 0, 0], [1, 0, 0], [0.5, h, 0], [0.5, -h, 0]], dtype=float)
        faces = np.array([[0, 1, 2], [0, 3, 1]])
        mesh = compute_weights(build_mesh(verts, faces))
        expected = 2.0 / np.tan(np.pi / 3)  # two opposite 60-degree angles
        assert mesh.weight(0, 1) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(1.1547005, abs=1e-6)

    def test_boundary_right_angle(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0]], dtype=float)
        mesh = compute_weights(build_mesh(verts, np.array([[0, 1, 2]])))
        # hypotenuse is opposite the right angle
        assert mesh.weight(1, 2) == pytest.approx(0.0, abs=1e-12)

    def test_mixed_angles(self):
        # apex angles 120 and 30 degrees opposite the shared edge
        top = np.array([0.5, 0.5 / np.tan(np.deg2rad(60)), 0.0])
        bot = np.array([0.5, -0.5 / np.tan(np.deg2rad(15)), 0.0])
        verts = np.array([[0, 0, 0], [1, 0, 0], top, bot])
        faces = np.array([[0, 1, 2], [0, 3, 1]])
        mesh = compute_weights(build_mesh(verts, faces))
        expected = 1.0 / np.tan(np.deg2rad(120)) + 1.0 / np.tan(np.deg2rad(30))
        assert mesh.weight(0, 1) == pytest.approx(expected, abs=1e-12)
        assert expected == pytest.approx(1.1547, abs=1e-4)

    def test_degenerate_face_reported(self):
        verts = np.array([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], dtype=float)
        faces = np.array([[0, 1, 3], [0, 1, 2]])  # second face has zero area
        with pytest.raises(DegenerateGeometryError, match="face 1"):
            compute_weights(build_mesh(verts, faces))

    def test_symmetry(self):
        mesh = grid_mesh(5)
        for i, j in mesh.edges():
            assert mesh.weight(i, j) == mesh.weight(j, i)

    def test_grid_matches_independent_accumulation(self):
        """Off-diagonals of the cotangent Laplacian, assembled independently."""
        mesh = grid_mesh(7)
        v, f = mesh.vertices, mesh.faces
        # law-of-cosines accumulation, written independently of compute_weights
        acc = {}
        for tri in f:
            lens = {
                k: np.linalg.norm(v[tri[(k + 1) % 3]] - v[tri[(k + 2) % 3]])
                for k in range(3)
            }
            for k in range(3):
                i, j = tri[(k + 1) % 3], tri[(k + 2) % 3]
                la, lb, lopp = lens[(k + 2) % 3], lens[(k + 1) % 3], lens[k]
                cosang = (la**2 + lb**2 - lopp**2) / (2 * la * lb)
                cot = cosang / np.sqrt(max(1.0 - cosang**2, 1e-300))
                key = (min(i, j), max(i, j))
                acc[key] = acc.get(key, 0.0) + cot
        assert set(acc) == set(mesh.edge_weights)
        for key, val in acc.items():
            assert mesh.edge_weights[key] == pytest.approx(val, abs=1e-12)


class TestRoundTrip:
    def test_save_load_identity(self, tmp_path):
        rng = np.random.default_rng(7)
        mesh = grid_mesh(4)
        verts = mesh.vertices + 0.1 * rng.normal(size=mesh.vertices.shape)
        path = tmp_path / "rt.obj"
        save_obj(path, verts, mesh.faces)
        loaded = load_obj(path)
        assert np.array_equal(loaded.faces, mesh.faces)
        np.testing.assert_allclose(loaded.vertices, verts, rtol=1e-8, atol=1e-12)

    def test_sequence_roundtrip(self, tmp_path):
        mesh = grid_mesh(4)
        frames = [mesh.vertices, mesh.vertices + [0.0, 0.0, 0.5]]
        seq = make_sequence(mesh, frames)
        write_obj_sequence(tmp_path / "seq", seq)
        back = read_obj_sequence(tmp_path / "seq")
        assert back.frame_count == 2
        np.testing.assert_allclose(back.frames[1], frames[1], rtol=1e-8, atol=1e-12)


class TestInvariants:
    def test_adjacency_symmetric(self):
        mesh = grid_mesh(6)
        for i in range(mesh.vertex_count):
            for j in mesh.adjacency[i]:
                assert i in mesh.adjacency[j]

    def test_immutable_arrays(self):
        mesh = triangle_mesh()
        with pytest.raises(ValueError):
            mesh.vertices[0, 0] = 5.0
