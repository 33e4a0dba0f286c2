"""Test background meshes, face adjacency and the active submesh."""

from collections.abc import Callable

import numpy as np
import pytest

from tracemembrane import DegenerateElementError, MeshError
from tracemembrane.basis import TET_EDGES
from tracemembrane.mesh import (
    TetMesh,
    active_submesh,
    build_background_mesh,
    canonical_face,
    face_adjacency,
    mesh_size,
)
from tracemembrane.test_data import reference_table

UNIT_TET: np.ndarray = np.vstack((np.zeros(3), np.eye(3)))


def test_mesh_size() -> None:
    """H = N^(-1/3)."""
    assert mesh_size(1000) == pytest.approx(0.1)
    assert mesh_size(1) == 1.0
    with pytest.raises(ValueError, match="at least one node"):
        mesh_size(0)


@pytest.mark.parametrize(
    ("n", "nodes", "elements"), [(1, 8, 6), ((2, 1, 1), 12, 12), (3, 64, 162)]
)
def test_counts_p1(n: int | tuple[int, int, int], nodes: int, elements: int) -> None:
    """Six Kuhn tets per cube on a structured grid."""
    mesh: TetMesh = build_background_mesh([[0, 0, 0], [1, 1, 1]], n)
    assert (mesh.n_nodes, mesh.n_elements) == (nodes, elements)
    assert mesh.signed_volumes().min() > 0.0
    assert mesh.signed_volumes().sum() == pytest.approx(1.0)


def test_p2_midpoints(unit_cube: Callable[[int, int], TetMesh]) -> None:
    """P2 nodes 4..9 are the midpoints of the local edges, shared globally."""
    mesh: TetMesh = unit_cube(2, 2)
    assert mesh.n_nodes == 5**3
    for elem in mesh.elements:
        for k, (i, j) in enumerate(TET_EDGES):
            assert np.allclose(
                mesh.nodes[elem[4 + k]], 0.5 * (mesh.nodes[elem[i]] + mesh.nodes[elem[j]])
            )
            assert mesh.edge_nodes[tuple(sorted((int(elem[i]), int(elem[j]))))] == elem[4 + k]


@pytest.mark.parametrize("order", [1, 2])
def test_benchmark_ladder(
    cylinder_mesh: Callable[[int, int], TetMesh], order: int
) -> None:
    """The refinement ladder reproduces the published node counts and h."""
    table = reference_table("stress_p1p1" if order == 1 else "stress_p2p2")
    for k in range(1, 5):
        mesh: TetMesh = cylinder_mesh(k, order)
        assert mesh.n_nodes == table["columns"]["n_nodes"][k - 1]
        assert abs(mesh.h - table["columns"]["h"][k - 1]) < 6e-5
        assert mesh.level == k


def test_mesh_properties(unit_cube: Callable[[int, int], TetMesh]) -> None:
    """Box, diagonal and centroids."""
    mesh: TetMesh = unit_cube(1, 1)
    assert mesh.diagonal == pytest.approx(np.sqrt(3.0))
    assert np.allclose(mesh.box, [[0, 0, 0], [1, 1, 1]])
    assert np.allclose(mesh.centroids().mean(axis=0), 0.5)
    assert mesh.affine_map(0).det == pytest.approx(1.0)


@pytest.mark.parametrize(
    ("box", "n", "order", "match"),
    [
        ([[0, 0, 0], [1, 1, 1]], 0, 1, "subdivisions"),
        ([[0, 0, 0], [1, 1, 1]], (1, 2), 1, "subdivisions"),
        ([[0, 0, 0], [1, 0, 1]], 1, 1, "positive extent"),
        ([[0, 0, 0], [1, 1, 1]], 1, 3, "order"),
    ],
)
def test_build_background_mesh_invalid(
    box: list[list[float]], n: int | tuple[int, ...], order: int, match: str
) -> None:
    """Invalid grids are rejected with MeshError."""
    with pytest.raises(MeshError, match=match):
        build_background_mesh(box, n, order)


def test_tetmesh_validation() -> None:
    """TetMesh rejects wrong shapes, bad indices and inverted elements."""
    with pytest.raises(MeshError, match="4 nodes"):
        TetMesh(UNIT_TET, np.array([[0, 1, 2]]), 1)
    with pytest.raises(MeshError, match="out of range"):
        TetMesh(UNIT_TET, np.array([[0, 1, 2, 4]]), 1)
    with pytest.raises(MeshError, match="order"):
        TetMesh(UNIT_TET, np.array([[0, 1, 2, 3]]), 3)
    with pytest.raises(DegenerateElementError, match="non-positive volume"):
        TetMesh(UNIT_TET, np.array([[0, 2, 1, 3]]), 1)


def test_face_adjacency(unit_cube: Callable[[int, int], TetMesh]) -> None:
    """Interior faces are listed once with unit normals from left to right."""
    mesh: TetMesh = build_background_mesh([[0, 0, 0], [2, 1, 1]], (2, 1, 1))
    faces = face_adjacency(mesh)
    assert len(faces) == 14
    assert np.all(faces.left < faces.right)
    assert np.allclose(np.linalg.norm(faces.normals, axis=1), 1.0)
    centroids = mesh.centroids()
    assert np.all(
        np.einsum("fi,fi->f", faces.normals, centroids[faces.right] - centroids[faces.left])
        > 0.0
    )
    assert len(face_adjacency(unit_cube(1, 1))) == 6


def test_face_adjacency_non_manifold() -> None:
    """A face shared by three elements is rejected."""
    mesh = TetMesh(UNIT_TET, np.tile(np.arange(4), (3, 1)), 1)
    with pytest.raises(MeshError, match="non-manifold"):
        face_adjacency(mesh)


def test_canonical_face(unit_cube: Callable[[int, int], TetMesh]) -> None:
    """Corners are sorted, P2 mid-nodes follow as m(ab), m(bc), m(ca)."""
    mesh: TetMesh = unit_cube(1, 2)
    a, b, c = sorted(int(v) for v in mesh.elements[0, :3])
    face = canonical_face(mesh, (c, a, b))
    assert face[:3] == (a, b, c)
    for mid, (p, q) in zip(face[3:], ((a, b), (b, c), (a, c)), strict=True):
        assert np.allclose(mesh.nodes[mid], 0.5 * (mesh.nodes[p] + mesh.nodes[q]))
    assert len(face_adjacency(mesh).nodes[0]) == 6
    assert canonical_face(unit_cube(1, 1), (3, 1, 2)) == (1, 2, 3)


def test_active_submesh(unit_cube: Callable[[int, int], TetMesh]) -> None:
    """Active elements, faces and the node-major DOF map."""
    mesh: TetMesh = unit_cube(1, 1)
    active = active_submesh(mesh, np.ones(6, dtype=bool))
    assert len(active.faces) == 6
    assert active.n_dof == 24
    assert active.dofs(np.array([active.nodes[1]])).tolist() == [3, 4, 5]

    single = active_submesh(mesh, np.eye(6, dtype=bool)[0])
    assert single.elements.tolist() == [0]
    assert len(single.faces) == 0
    assert single.n_dof == 12
    inactive = int(np.setdiff1d(np.arange(8), single.nodes)[0])
    with pytest.raises(MeshError, match="inactive node"):
        single.dofs(np.array([inactive]))


def test_active_submesh_invalid(unit_cube: Callable[[int, int], TetMesh]) -> None:
    """Empty or mis-shaped cut flags raise MeshError."""
    mesh: TetMesh = unit_cube(1, 1)
    with pytest.raises(MeshError, match="does not intersect"):
        active_submesh(mesh, np.zeros(6, dtype=bool))
    with pytest.raises(MeshError, match="cut flags"):
        active_submesh(mesh, np.ones(5, dtype=bool))
