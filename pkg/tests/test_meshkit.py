"""Mesh structure, validation, refinement and CAPMESH round trips."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from caplab import families, meshkit
from caplab.errors import MeshValidationError, ParseError


def single_triangle():
    positions = [[0, 0, 0], [1, 0, 0], [0, 1, 0]]
    labels = {0: 0, 1: 0, 2: 0}
    return meshkit.LabeledTriMesh(positions, [[0, 1, 2]], labels)


def hexagon_fan():
    """Center vertex is interior, ring of 6 on z = 0 is the boundary."""
    ring = [
        [math.cos(2 * math.pi * k / 6), math.sin(2 * math.pi * k / 6), 0.0]
        for k in range(6)
    ]
    positions = [[0.0, 0.0, 0.0]] + ring
    tris = [[0, 1 + k, 1 + (k + 1) % 6] for k in range(6)]
    labels = {1 + k: 0 for k in range(6)}
    return meshkit.LabeledTriMesh(positions, tris, labels)


class TestHyperplane:
    def test_requires_unit_normal(self):
        with pytest.raises(ValueError):
            meshkit.Hyperplane(np.array([0.0, 0.0, 2.0]), 0.0)

    def test_projection(self):
        plane = meshkit.Hyperplane(np.array([0.0, 0.0, 1.0]), 2.0)
        q = plane.project(np.array([1.0, 1.0, 5.0]))
        assert np.allclose(q, [1, 1, 2])
        assert plane.signed_distance([[0, 0, 3]]) == pytest.approx(1.0)


class TestWallSet:
    def test_angle_range(self):
        with pytest.raises(ValueError):
            meshkit.WallSet((meshkit.Hyperplane(np.array([0, 0, -1.0]), 0.0),), (0.0,))

    def test_document_round_trip(self, tmp_path):
        spec = families.Cap(R=1.0, theta=math.pi / 3, resolution=8)
        walls = spec.walls()
        path = tmp_path / "walls.json"
        meshkit.save_walls(walls, path)
        again = meshkit.load_walls(path)
        assert np.array_equal(again.normals, walls.normals)
        assert again.angles == walls.angles


class TestValidate:
    def test_family_mesh_passes(self, hemisphere):
        spec, mesh, _ = hemisphere[32]
        assert meshkit.validate(mesh, spec.walls()).ok

    def test_displaced_boundary_vertex_fails_plane_incidence(self, hemisphere):
        spec, mesh, _ = hemisphere[16]
        v = next(iter(mesh.boundary_labels))
        positions = mesh.positions.copy()
        positions[v, 2] += 1e-3
        bad = meshkit.LabeledTriMesh(positions, mesh.triangles, mesh.boundary_labels)
        report = meshkit.validate(bad, spec.walls())
        assert not report.ok
        assert "plane-incidence" in report.failed_checks()
        issue = [i for i in report.issues if i.check == "plane-incidence"][0]
        assert v in issue.indices

    def test_flipped_triangle_fails_orientation(self, hemisphere):
        spec, mesh, _ = hemisphere[16]
        tris = mesh.triangles.copy()
        tris[5] = tris[5][[0, 2, 1]]
        bad = meshkit.LabeledTriMesh(mesh.positions, tris, mesh.boundary_labels)
        report = meshkit.validate(bad, spec.walls())
        assert not report.ok
        assert "orientation" in report.failed_checks()

    def test_mixed_labels_rejected(self):
        mesh = hexagon_fan()
        labels = dict(mesh.boundary_labels)
        labels[1] = 1
        mixed = meshkit.LabeledTriMesh(mesh.positions, mesh.triangles, labels)
        report = meshkit.validate(mixed)
        assert not report.ok
        assert "mixed-boundary-edge" in report.failed_checks()

    def test_bare_mesh_is_structural_only(self, monge_patch):
        _, mesh, _ = monge_patch[16]
        assert not mesh.boundary_labels
        assert meshkit.validate(mesh).ok


class TestRefine:
    def test_subdivision_combinatorics(self, hemisphere):
        spec, mesh, _ = hemisphere[16]
        fine = meshkit.refine(mesh, walls=spec.walls())
        assert fine.nf == 4 * mesh.nf
        assert fine.euler_characteristic() == mesh.euler_characteristic()
        assert len(fine.boundary_loops()) == len(mesh.boundary_loops())
        assert set(fine.boundary_labels.values()) == set(mesh.boundary_labels.values())
        assert meshkit.validate(fine, spec.walls()).ok

    def test_projector_returns_to_sphere(self, hemisphere):
        spec, mesh, _ = hemisphere[16]
        fine = meshkit.refine(mesh, projector=families.surface_projector(spec), walls=spec.walls())
        radii = np.linalg.norm(fine.positions - spec.center, axis=1)
        assert np.abs(radii - spec.R).max() <= 1e-12
        assert meshkit.validate(fine, spec.walls()).ok

    def test_chordal_refinement_stays_below_true_area(self, cylinder_l2):
        spec, mesh, _ = cylinder_l2[16]
        fine = meshkit.refine(mesh)
        true_area = 2 * math.pi * spec.r * spec.L
        assert fine.area() < true_area
        # chords subdivide to chords: the limit is the polyhedron, not the tube
        assert fine.area() == pytest.approx(mesh.area(), rel=1e-9)

    def test_invalid_input_rejected(self, hemisphere):
        spec, mesh, _ = hemisphere[16]
        tris = mesh.triangles.copy()
        tris[0] = tris[0][[0, 2, 1]]
        bad = meshkit.LabeledTriMesh(mesh.positions, tris, mesh.boundary_labels)
        with pytest.raises(MeshValidationError):
            meshkit.refine(bad)


class TestCapmeshIO:
    def test_round_trip_bit_exact(self, hemisphere, tmp_path):
        spec, mesh, _ = hemisphere[32]
        path = tmp_path / "hemi.capmesh"
        meshkit.save(mesh, spec.walls(), path)
        again, walls = meshkit.load(path)
        assert np.array_equal(again.positions, mesh.positions)
        assert np.array_equal(again.triangles, mesh.triangles)
        assert again.boundary_labels == mesh.boundary_labels
        assert walls is not None and walls.angles == spec.walls().angles
        # a second save must be byte-identical
        path2 = tmp_path / "hemi2.capmesh"
        meshkit.save(again, walls, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_validate_survives_round_trip(self, cap_pi3, tmp_path):
        spec, mesh, _ = cap_pi3[16]
        path = tmp_path / "cap.capmesh"
        meshkit.save(mesh, spec.walls(), path)
        again, walls = meshkit.load(path)
        assert meshkit.validate(again, walls).ok

    def test_minimal_file(self, tmp_path):
        path = tmp_path / "tri.capmesh"
        path.write_text(
            "CAPMESH 1\n3 1 3\n0 0 0\n1 0 0\n0 1 0\n0 1 2\n0 0\n1 0\n2 0\n"
        )
        mesh, walls = meshkit.load(path)
        assert mesh.nv == 3 and mesh.nf == 1
        assert walls is None
        assert meshkit.validate(mesh).ok

    def test_face_index_out_of_range_names_line(self, tmp_path):
        path = tmp_path / "bad.capmesh"
        path.write_text("CAPMESH 1\n3 1 0\n0 0 0\n1 0 0\n0 1 0\n0 1 3\n")
        with pytest.raises(ParseError) as err:
            meshkit.load(path)
        assert err.value.line == 6

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "bad.capmesh"
        path.write_text("CAPMESH 9\n0 0 0\n")
        with pytest.raises(ParseError) as err:
            meshkit.load(path)
        assert err.value.line == 1

    def test_label_on_interior_vertex_names_line(self, tmp_path):
        mesh = hexagon_fan()
        lines = ["CAPMESH 1", "7 6 7"]
        lines += [f"{p[0]:.17g} {p[1]:.17g} {p[2]:.17g}" for p in mesh.positions]
        lines += [f"{t[0]} {t[1]} {t[2]}" for t in mesh.triangles]
        lines += [f"{v} 0" for v in range(7)]  # vertex 0 is interior
        path = tmp_path / "bad.capmesh"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ParseError) as err:
            meshkit.load(path)
        assert err.value.line == 2 + 7 + 6 + 1

    @given(
        st.lists(
            st.floats(
                allow_nan=False,
                allow_infinity=False,
                min_value=-1e12,
                max_value=1e12,
            ),
            min_size=9,
            max_size=9,
        )
    )
    @settings(max_examples=30, deadline=None)
    def test_seventeen_digits_round_trip_any_coordinates(self, tmp_path_factory, coords):
        positions = np.array(coords, float).reshape(3, 3)
        # avoid degenerate duplicate vertices; the format does not care, the
        # loader does not either, but validation of loops would
        mesh = meshkit.LabeledTriMesh(positions, [[0, 1, 2]], {0: 0, 1: 0, 2: 0})
        path = tmp_path_factory.mktemp("io") / "t.capmesh"
        meshkit.save(mesh, None, path)
        again, _ = meshkit.load(path)
        assert np.array_equal(again.positions, mesh.positions)


class TestBoundaryStructure:
    def test_single_triangle_all_boundary(self):
        mesh = single_triangle()
        assert mesh.boundary_vertex_set() == {0, 1, 2}
        assert len(mesh.boundary_loops()) == 1

    def test_cylinder_two_loops(self, cylinder_l2):
        _, mesh, _ = cylinder_l2[16]
        loops = mesh.boundary_loops()
        assert len(loops) == 2
        labels = {frozenset(mesh.boundary_labels[v] for v in loop) for loop in loops}
        assert labels == {frozenset({0}), frozenset({1})}

    def test_closed_sphere_no_boundary(self, unit_sphere):
        _, mesh, _ = unit_sphere
        assert mesh.is_closed()
        assert mesh.boundary_loops() == []
        assert mesh.euler_characteristic() == 2
