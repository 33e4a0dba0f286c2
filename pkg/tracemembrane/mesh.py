"""Structured tetrahedral background meshes, face adjacency and active submesh.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Sequence
from dataclasses import dataclass, field
from itertools import permutations
import logging
from typing import Final

import numpy as np
from numpy.typing import NDArray

from tracemembrane import DegenerateElementError, MeshError
from tracemembrane.basis import TET_EDGES, TET_FACES, AffineMap, FloatArray

type IntArray = NDArray[np.int_]

_LOGGER: Final[logging.Logger] = logging.getLogger(__name__)

# Kuhn split of the unit cube along the main diagonal, one tet per axis order
_KUHN_PATHS: Final[tuple[tuple[int, int, int], ...]] = tuple(permutations(range(3)))


def mesh_size(n_nodes: int) -> float:
    """Return the mesh parameter h = N^(-1/3) of a mesh with N nodes.

    Raises:
        ValueError: N < 1.

    """
    if n_nodes < 1:
        raise ValueError(f"mesh size needs at least one node, got {n_nodes}")
    return float(n_nodes ** (-1.0 / 3.0))


@dataclass(frozen=True, slots=True, eq=False)
class TetMesh:
    """Background mesh of affine tetrahedra with P1 or P2 nodes.

    P2 elements list the 4 corners first, followed by the mid-edge nodes in
    the local edge order (0,1), (1,2), (0,2), (0,3), (1,3), (2,3).
    """

    nodes: FloatArray  # (N, 3)
    elements: IntArray  # (E, 4) or (E, 10)
    order: int
    level: int = 0
    box: FloatArray = field(default_factory=lambda: np.zeros((2, 3)))
    edge_nodes: dict[tuple[int, int], int] = field(init=False)

    def __post_init__(self) -> None:
        """Validate the element list and build the edge-midpoint lookup."""
        if self.order not in (1, 2):
            raise MeshError(f"unsupported mesh order {self.order}")
        n_loc: int = 4 if self.order == 1 else 10
        if self.elements.ndim != 2 or self.elements.shape[1] != n_loc:
            raise MeshError(
                f"order {self.order} elements need {n_loc} nodes, got {self.elements.shape}"
            )
        if self.elements.size and (
            self.elements.min() < 0 or self.elements.max() >= len(self.nodes)
        ):
            raise MeshError("element node index out of range")
        if not self.box.any():
            object.__setattr__(
                self, "box", np.vstack((self.nodes.min(0), self.nodes.max(0)))
            )
        volumes: FloatArray = self.signed_volumes()
        if volumes.size and volumes.min() <= 0.0:
            bad: int = int(np.argmin(volumes))
            raise DegenerateElementError(
                f"element {bad} has non-positive volume {volumes[bad]:.3e}"
            )
        lookup: dict[tuple[int, int], int] = {}
        if self.order == 2:
            for elem in self.elements:
                for k, (i, j) in enumerate(TET_EDGES):
                    a, b = sorted((int(elem[i]), int(elem[j])))
                    lookup.setdefault((a, b), int(elem[4 + k]))
        object.__setattr__(self, "edge_nodes", lookup)

    @property
    def n_nodes(self) -> int:
        """Return the node count N."""
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        """Return the element count."""
        return len(self.elements)

    @property
    def corners(self) -> IntArray:
        """Return the corner node indices (E, 4)."""
        return self.elements[:, :4]

    @property
    def h(self) -> float:
        """Return the global mesh parameter h = N^(-1/3)."""
        return mesh_size(self.n_nodes)

    @property
    def diagonal(self) -> float:
        """Return the length of the bounding box diagonal."""
        return float(np.linalg.norm(self.box[1] - self.box[0]))

    def signed_volumes(self) -> FloatArray:
        """Return the signed volume of every element."""
        x: FloatArray = self.nodes[self.corners]
        return np.linalg.det(x[:, 1:] - x[:, :1]) / 6.0

    def affine_map(self, elem: int) -> AffineMap:
        """Return the reference-to-physical map of an element."""
        return AffineMap.from_corners(self.nodes[self.elements[elem, :4]])

    def centroids(self) -> FloatArray:
        """Return the corner centroid of every element."""
        return self.nodes[self.corners].mean(axis=1)


def build_background_mesh(
    box: Sequence[Sequence[float]],
    n: int | Sequence[int],
    order: int = 1,
    level: int = 0,
) -> TetMesh:
    """Split each cube of a structured grid into six tetrahedra.

    Args:
        box: lower and upper corner of the axis-aligned box
        n: subdivisions, one value for all axes or (nx, ny, nz)
        order: 1 for P1 (4-node), 2 for P2 (10-node) elements
        level: refinement level k stored with the mesh

    Raises:
        MeshError: n < 1, degenerate box or unsupported order.

    """
    lo, hi = (np.asarray(corner, dtype=float) for corner in box)
    divisions: tuple[int, int, int] = (
        (int(n),) * 3 if isinstance(n, int | np.integer) else tuple(int(v) for v in n)  # type: ignore[assignment]
    )
    if len(divisions) != 3 or min(divisions) < 1:
        raise MeshError(f"subdivisions must be >= 1 per axis, got {n}")
    if lo.shape != (3,) or hi.shape != (3,) or np.any(hi - lo <= 0.0):
        raise MeshError(f"box needs positive extent in all axes, got {box}")
    if order not in (1, 2):
        raise MeshError(f"unsupported mesh order {order}")

    shape: tuple[int, int, int] = tuple(d + 1 for d in divisions)  # type: ignore[assignment]
    axes: list[FloatArray] = [
        np.linspace(lo[a], hi[a], shape[a]) for a in range(3)
    ]
    grid: tuple[FloatArray, ...] = np.meshgrid(*axes, indexing="ij")
    nodes: FloatArray = np.column_stack([g.ravel() for g in grid])

    origin: IntArray = np.stack(
        np.meshgrid(*(np.arange(d) for d in divisions), indexing="ij"), axis=-1
    ).reshape(-1, 3)
    tets: list[IntArray] = []
    for path in _KUHN_PATHS:
        offsets: list[IntArray] = [np.zeros(3, dtype=int)]
        for axis in path:
            step: IntArray = offsets[-1].copy()
            step[axis] += 1
            offsets.append(step)
        tets.append(
            np.column_stack(
                [np.ravel_multi_index(tuple((origin + off).T), shape) for off in offsets]
            )
        )
    elements: IntArray = np.stack(tets, axis=1).reshape(-1, 4)

    x: FloatArray = nodes[elements]
    negative: NDArray[np.bool_] = np.linalg.det(x[:, 1:] - x[:, :1]) < 0.0
    elements[negative, 1], elements[negative, 2] = (
        elements[negative, 2],
        elements[negative, 1].copy(),
    )

    if order == 2:
        edges: IntArray = np.sort(elements[:, TET_EDGES], axis=2).reshape(-1, 2)
        unique_edges, inverse = np.unique(edges, axis=0, return_inverse=True)
        mids: FloatArray = nodes[unique_edges].mean(axis=1)
        elements = np.hstack(
            (elements, len(nodes) + inverse.reshape(-1, len(TET_EDGES)))
        )
        nodes = np.vstack((nodes, mids))

    mesh = TetMesh(nodes, elements, order, level, np.vstack((lo, hi)))
    _LOGGER.debug(
        "background mesh n=%s order=%i: %i nodes, %i elements",
        divisions,
        order,
        mesh.n_nodes,
        mesh.n_elements,
    )
    return mesh


def canonical_face(mesh: TetMesh, corners: Sequence[int]) -> tuple[int, ...]:
    """Return the unique node sequence of a face.

    Corners are sorted ascending (a, b, c); for P2 the mid-edge nodes follow
    as m(ab), m(bc), m(ca).
    """
    a, b, c = sorted(int(v) for v in corners)
    if mesh.order == 1:
        return (a, b, c)
    return (
        a,
        b,
        c,
        mesh.edge_nodes[(a, b)],
        mesh.edge_nodes[(b, c)],
        mesh.edge_nodes[(a, c)],
    )


@dataclass(frozen=True, slots=True, eq=False)
class FaceSet:
    """Interior faces, each listed once with its two neighbours."""

    left: IntArray  # lower element index
    right: IntArray  # higher element index
    nodes: IntArray  # (F, 3) or (F, 6) canonical node sequences
    normals: FloatArray  # (F, 3), unit, pointing from left to right

    def __len__(self) -> int:
        """Return the number of faces."""
        return len(self.left)

    def subset(self, mask: NDArray[np.bool_]) -> "FaceSet":
        """Return the faces selected by a boolean mask."""
        return FaceSet(
            self.left[mask], self.right[mask], self.nodes[mask], self.normals[mask]
        )


def face_adjacency(mesh: TetMesh) -> FaceSet:
    """Collect interior faces with canonical node order and oriented normals.

    Raises:
        MeshError: a face shared by more than two elements.

    """
    n_elem: int = mesh.n_elements
    keys: IntArray = np.sort(mesh.corners[:, TET_FACES], axis=2).reshape(-1, 3)
    owner: IntArray = np.repeat(np.arange(n_elem), len(TET_FACES))
    unique_keys, inverse, counts = np.unique(
        keys, axis=0, return_inverse=True, return_counts=True
    )
    if counts.size and counts.max() > 2:
        raise MeshError(
            f"non-manifold face {unique_keys[int(np.argmax(counts))].tolist()} "
            f"shared by {counts.max()} elements"
        )

    order: IntArray = np.argsort(inverse.ravel(), kind="stable")
    interior: IntArray = np.flatnonzero(counts == 2)
    starts: IntArray = np.concatenate(([0], np.cumsum(counts)[:-1]))
    first: IntArray = owner[order[starts[interior]]]
    second: IntArray = owner[order[starts[interior] + 1]]
    left: IntArray = np.minimum(first, second)
    right: IntArray = np.maximum(first, second)

    corners: IntArray = unique_keys[interior]
    face_nodes: IntArray = (
        corners
        if mesh.order == 1
        else np.array(
            [canonical_face(mesh, tuple(c)) for c in corners], dtype=int
        ).reshape(-1, 6)
    )
    x: FloatArray = mesh.nodes[corners]
    normals: FloatArray = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]).reshape(-1, 3)
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    centroids: FloatArray = mesh.centroids()
    flip: NDArray[np.bool_] = (
        np.einsum("fi,fi->f", normals, centroids[right] - centroids[left]) < 0.0
    )
    normals[flip] *= -1.0
    return FaceSet(left, right, face_nodes.astype(int), normals)


@dataclass(frozen=True, slots=True, eq=False)
class ActiveMesh:
    """Cut elements K_h, their interior faces F_h and the displacement DOF map."""

    mesh: TetMesh
    elements: IntArray  # active element indices, ascending
    faces: FaceSet  # faces shared by two active elements
    nodes: IntArray  # active node indices, ascending
    node_index: IntArray  # (N,), position in `nodes` or -1

    @property
    def n_dof(self) -> int:
        """Return the number of displacement DOFs (3 per active node)."""
        return 3 * len(self.nodes)

    def dofs(self, nodes: IntArray) -> IntArray:
        """Return the DOFs of the given nodes, ordered node-major (k * 3 + i)."""
        pos: IntArray = self.node_index[np.asarray(nodes, dtype=int)]
        if np.any(pos < 0):
            raise MeshError("DOF requested for an inactive node")
        return (3 * pos[:, None] + np.arange(3)).ravel()


def active_submesh(
    mesh: TetMesh,
    cut_flags: NDArray[np.bool_],
    faces: FaceSet | None = None,
) -> ActiveMesh:
    """Restrict the mesh to cut elements.

    Raises:
        MeshError: no element is cut.

    """
    flags: NDArray[np.bool_] = np.asarray(cut_flags, dtype=bool)
    if flags.shape != (mesh.n_elements,):
        raise MeshError(
            f"expected {mesh.n_elements} cut flags, got shape {flags.shape}"
        )
    elements: IntArray = np.flatnonzero(flags)
    if elements.size == 0:
        raise MeshError("surface does not intersect mesh")

    all_faces: FaceSet = face_adjacency(mesh) if faces is None else faces
    active_faces: FaceSet = all_faces.subset(
        flags[all_faces.left] & flags[all_faces.right]
    )
    nodes: IntArray = np.unique(mesh.elements[elements])
    node_index: IntArray = np.full(mesh.n_nodes, -1, dtype=int)
    node_index[nodes] = np.arange(len(nodes))
    _LOGGER.debug(
        "active submesh: %i elements, %i faces, %i DOFs",
        len(elements),
        len(active_faces),
        3 * len(nodes),
    )
    return ActiveMesh(mesh, elements, active_faces, nodes, node_index)
