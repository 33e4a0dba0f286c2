"""Stabilized trace finite element system of the linear elastic membrane.

The membrane form a_h uses the in-plane strain P sym(grad u) P of the bulk
displacement traced onto Gamma_h. Ghost penalty terms penalize jumps of
the full gradient (j_h1) and, for quadratic bulk elements, of the Hessian
(j_h2, scaled by h^2) across interior faces of the active mesh.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Callable
from dataclasses import dataclass, field, replace
import logging
from typing import Final, Self

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.linalg import splu

from tracemembrane import MeshError, SolverError
from tracemembrane.basis import (
    FloatArray,
    PhysicalBasis,
    ReferenceElement,
    eval_reference_basis,
    inverse_affine_map,
    quadrature_rule,
    reference_element,
)
from tracemembrane.mesh import ActiveMesh, IntArray, TetMesh
from tracemembrane.reconstruct import SurfaceElement, SurfaceMesh
from tracemembrane.surfgeom import (
    SurfaceQuadrature,
    surface_frame,
    surface_quadrature,
    tangential_projector,
)

_LOGGER: Final[logging.Logger] = logging.getLogger(__name__)

type LoadFunction = Callable[[FloatArray], FloatArray]

RESIDUAL_TOL: Final[float] = 1e-10
_REFINEMENT_STEPS: Final[int] = 2
_FACE_DEGREE: Final[int] = 4


@dataclass(frozen=True, slots=True)
class Material:
    """Isotropic material with plane-stress Lame parameters."""

    young: float
    poisson: float
    mu: float
    lam: float


def lame_plane_stress(young: float, poisson: float) -> Material:
    """Return mu = E / (2 (1 + nu)) and lambda = E nu / (1 - nu^2).

    Raises:
        ValueError: |nu| >= 1 or E < 0.

    """
    if not -1.0 < poisson < 1.0:
        raise ValueError(f"Poisson ratio must lie in (-1, 1), got {poisson}")
    if young < 0.0:
        raise ValueError(f"Young's modulus must be non-negative, got {young}")
    return Material(
        young,
        poisson,
        young / (2.0 * (1.0 + poisson)),
        young * poisson / (1.0 - poisson**2),
    )


@dataclass(frozen=True, slots=True)
class StabilizationParams:
    """Ghost penalty factors, gamma2 only acts for quadratic bulk elements."""

    gamma1: float = 0.0
    gamma2: float = 0.0

    def __post_init__(self) -> None:
        """Reject negative factors."""
        if self.gamma1 < 0.0 or self.gamma2 < 0.0:
            raise ValueError(
                f"stabilization factors must be >= 0, got ({self.gamma1}, {self.gamma2})"
            )

    @classmethod
    def from_values(cls, values: float | list[float] | tuple[float, ...]) -> Self:
        """Build from one value (gamma) or a pair (gamma1, gamma2)."""
        if isinstance(values, int | float):
            return cls(float(values))
        return cls(*(float(v) for v in values))

    def as_tuple(self, bulk_order: int) -> tuple[float, ...]:
        """Return (gamma,) for linear and (gamma1, gamma2) for quadratic meshes."""
        return (self.gamma1,) if bulk_order == 1 else (self.gamma1, self.gamma2)


@dataclass(frozen=True, slots=True, eq=False)
class MembraneSystem:
    """Assembled forms over the active DOFs, kept apart for cheap gamma changes."""

    active: ActiveMesh
    stiffness: csr_matrix  # a_h
    ghost1: csr_matrix  # j_h1, gradient jumps
    ghost2: csr_matrix  # j_h2, h^2 Hessian jumps
    load: FloatArray  # l_h
    h: float
    surface_order: int
    stab: StabilizationParams = field(default_factory=StabilizationParams)
    constraints: IntArray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def bulk_order(self) -> int:
        """Return m_B of the background mesh."""
        return self.active.mesh.order

    @property
    def matrix(self) -> csr_matrix:
        """Return A_h = a_h + gamma1 j_h1 (+ gamma2 j_h2 for m_B = 2)."""
        total: csr_matrix = self.stiffness + self.stab.gamma1 * self.ghost1
        if self.bulk_order == 2:
            total = total + self.stab.gamma2 * self.ghost2
        return csr_matrix(total)

    def with_stabilization(self, stab: StabilizationParams) -> "MembraneSystem":
        """Return the same assembly with other ghost penalty factors."""
        return replace(self, stab=stab)

    def with_load(self, load: FloatArray) -> "MembraneSystem":
        """Return the same assembly with another load vector."""
        return replace(self, load=np.asarray(load, dtype=float))


@dataclass(frozen=True, slots=True, eq=False)
class DisplacementField:
    """Nodal displacements (n_active_nodes, 3) of the active mesh."""

    values: FloatArray
    active: ActiveMesh

    @property
    def vector(self) -> FloatArray:
        """Return the DOF vector, node-major."""
        return self.values.ravel()

    def local(self, elem: int) -> FloatArray:
        """Return the displacements of one background element (n, 3)."""
        nodes: IntArray = self.active.mesh.elements[elem]
        return self.values[self.active.node_index[nodes]]

    def at_nodes(self, nodes: IntArray) -> FloatArray:
        """Return the displacements of active background nodes."""
        return self.values[self.active.node_index[np.asarray(nodes, dtype=int)]]

    def on_surface(self, element: SurfaceElement) -> FloatArray:
        """Interpolate the bulk displacement at the surface element nodes."""
        ref: ReferenceElement = reference_element("tet", self.active.mesh.order)
        values: FloatArray = eval_reference_basis(ref, element.ref_coords, 0)
        return values @ self.local(element.parent)


def _bulk_basis(mesh: TetMesh, elem: int, x: FloatArray) -> PhysicalBasis:
    ref: ReferenceElement = reference_element("tet", mesh.order)
    return inverse_affine_map(mesh.affine_map(elem), x, ref)


def _element_matrices(
    element: SurfaceElement,
    mesh: TetMesh,
    mat: Material,
    load: LoadFunction,
    degree: int | None,
) -> tuple[FloatArray, FloatArray]:
    """Return the membrane stiffness (3n, 3n) and load (3n,) of one element."""
    quad: SurfaceQuadrature = surface_quadrature(element, degree)
    basis: PhysicalBasis = _bulk_basis(mesh, element.parent, quad.points)
    proj: FloatArray = quad.projectors  # (q, 3, 3)
    tang: FloatArray = np.einsum("qij,qaj->qai", proj, basis.gradients)
    w: FloatArray = quad.weights
    # 2 mu eps_G(v):eps_G(w) = mu (P_ij g_a.g_b + g_a[j] g_b[i]), div = g_a[i]
    gram: FloatArray = np.einsum("qak,qbk->qab", tang, tang)
    stiff: FloatArray = (
        mat.mu * np.einsum("q,qij,qab->aibj", w, proj, gram)
        + mat.mu * np.einsum("q,qaj,qbi->aibj", w, tang, tang)
        + mat.lam * np.einsum("q,qai,qbj->aibj", w, tang, tang)
    )
    rhs: FloatArray = np.einsum("q,qa,qi->ai", w, basis.values, load(quad.points))
    n: int = basis.values.shape[1]
    return stiff.reshape(3 * n, 3 * n), rhs.ravel()


def _face_jumps(
    mesh: TetMesh, left: int, right: int, corners: FloatArray
) -> tuple[IntArray, FloatArray, FloatArray, FloatArray]:
    """Return union nodes, weights, gradient and Hessian jumps on one face."""
    rule = quadrature_rule("triangle", _FACE_DEGREE)
    spans: FloatArray = corners[1:] - corners[0]
    points: FloatArray = corners[0] + rule.points @ spans
    area2: float = float(np.linalg.norm(np.cross(spans[0], spans[1])))
    weights: FloatArray = rule.weights * area2

    nodes_l: IntArray = mesh.elements[left]
    nodes_r: IntArray = mesh.elements[right]
    union: IntArray = np.union1d(nodes_l, nodes_r)
    side_l: PhysicalBasis = _bulk_basis(mesh, left, points)
    side_r: PhysicalBasis = _bulk_basis(mesh, right, points)
    q: int = len(points)
    grad_jump: FloatArray = np.zeros((q, len(union), 3))
    hess_jump: FloatArray = np.zeros((q, len(union), 3, 3))
    pos_l: IntArray = np.searchsorted(union, nodes_l)
    pos_r: IntArray = np.searchsorted(union, nodes_r)
    grad_jump[:, pos_l] += side_l.gradients
    grad_jump[:, pos_r] -= side_r.gradients
    hess_jump[:, pos_l] += side_l.hessians
    hess_jump[:, pos_r] -= side_r.hessians
    return union, weights, grad_jump, hess_jump


def _scatter(
    rows: list[IntArray], cols: list[IntArray], vals: list[FloatArray],
    dofs: IntArray, block: FloatArray,
) -> None:
    rows.append(np.repeat(dofs, len(dofs)))
    cols.append(np.tile(dofs, len(dofs)))
    vals.append(block.ravel())


def _sparse(
    rows: list[IntArray], cols: list[IntArray], vals: list[FloatArray], n: int
) -> csr_matrix:
    if not vals:
        return csr_matrix((n, n))
    return coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


def _component_blocks(scalar: FloatArray) -> FloatArray:
    """Expand a nodal (n, n) form to (3n, 3n) acting on each component alone."""
    return np.kron(scalar, np.eye(3))


def assemble_system(
    active: ActiveMesh,
    surface: SurfaceMesh,
    mat: Material,
    stab: StabilizationParams,
    load: LoadFunction,
    quadrature_degree: int | None = None,
) -> MembraneSystem:
    """Assemble a_h, j_h1, j_h2 and l_h over the active DOFs.

    Raises:
        MeshError: a surface element lies in an inactive background element.

    """
    mesh: TetMesh = active.mesh
    n_dof: int = active.n_dof
    is_active: np.ndarray = np.zeros(mesh.n_elements, dtype=bool)
    is_active[active.elements] = True

    rows: list[IntArray] = []
    cols: list[IntArray] = []
    vals: list[FloatArray] = []
    rhs: FloatArray = np.zeros(n_dof)
    for element in surface:
        if not is_active[element.parent]:
            raise MeshError(
                f"surface element in inactive background element {element.parent}"
            )
        stiff, local_rhs = _element_matrices(element, mesh, mat, load, quadrature_degree)
        dofs: IntArray = active.dofs(mesh.elements[element.parent])
        _scatter(rows, cols, vals, dofs, stiff)
        np.add.at(rhs, dofs, local_rhs)
    stiffness: csr_matrix = _sparse(rows, cols, vals, n_dof)

    h: float = mesh.h
    ghost: tuple[list[IntArray], list[IntArray], list[FloatArray]] = ([], [], [])
    hessian: tuple[list[IntArray], list[IntArray], list[FloatArray]] = ([], [], [])
    for face in range(len(active.faces)):
        union, weights, grad_jump, hess_jump = _face_jumps(
            mesh,
            int(active.faces.left[face]),
            int(active.faces.right[face]),
            mesh.nodes[active.faces.nodes[face, :3]],
        )
        dofs = active.dofs(union)
        j1: FloatArray = np.einsum("q,qck,qdk->cd", weights, grad_jump, grad_jump)
        _scatter(*ghost, dofs, _component_blocks(j1))
        if mesh.order == 2:
            j2: FloatArray = h**2 * np.einsum(
                "q,qckl,qdkl->cd", weights, hess_jump, hess_jump
            )
            _scatter(*hessian, dofs, _component_blocks(j2))

    _LOGGER.debug(
        "assembled %i surface elements and %i faces over %i DOFs",
        len(surface),
        len(active.faces),
        n_dof,
    )
    return MembraneSystem(
        active,
        stiffness,
        _sparse(*ghost, n_dof),
        _sparse(*hessian, n_dof),
        rhs,
        h,
        surface.surface_order,
        stab,
    )


def cylinder_constraints(active: ActiveMesh, length: float) -> IntArray:
    """Return the DOFs fixed for the cylinder benchmark.

    u_x is prescribed on active nodes at x = 0, u_y and u_z on active nodes
    at x = L, both within 1e-9 L.
    """
    x: FloatArray = active.mesh.nodes[active.nodes, 0]
    tol: float = 1e-9 * length
    start: IntArray = np.flatnonzero(np.abs(x) <= tol)
    end: IntArray = np.flatnonzero(np.abs(x - length) <= tol)
    return np.unique(
        np.concatenate((3 * start, 3 * end + 1, 3 * end + 2))
    ).astype(int)


def apply_constraints_and_solve(
    system: MembraneSystem, constraints: IntArray | None = None
) -> DisplacementField:
    """Eliminate prescribed DOFs symmetrically and solve A_h U = l_h.

    The solve uses a sparse LU factorization with up to two steps of
    iterative refinement; prescribed DOFs are set to zero.

    Raises:
        SolverError: non-positive diagonal, singular factorization or
            relative residual above 1e-10.

    """
    n_dof: int = system.active.n_dof
    fixed: IntArray = np.unique(
        system.constraints if constraints is None else np.asarray(constraints, int)
    )
    if fixed.size and (fixed.min() < 0 or fixed.max() >= n_dof):
        raise ValueError("constraint DOF out of range")
    free: IntArray = np.setdiff1d(np.arange(n_dof), fixed)
    solution: FloatArray = np.zeros(n_dof)
    rhs: FloatArray = system.load[free]
    if not np.any(rhs):
        return DisplacementField(solution.reshape(-1, 3), system.active)

    matrix: csr_matrix = system.matrix[free][:, free]
    diagonal: FloatArray = matrix.diagonal()
    if diagonal.min() <= 0.0:
        worst: int = int(free[np.argmin(diagonal)])
        raise SolverError(
            f"system not positive definite: diagonal {diagonal.min():.3e} at DOF {worst}"
        )
    try:
        lu = splu(matrix.tocsc())
    except RuntimeError as exc:
        raise SolverError(f"singular system matrix: {exc}") from exc

    x: FloatArray = lu.solve(rhs)
    norm_b: float = float(np.linalg.norm(rhs))
    residual: float = float(np.linalg.norm(rhs - matrix @ x)) / norm_b
    for step in range(_REFINEMENT_STEPS):
        if residual <= RESIDUAL_TOL:
            break
        x = x + lu.solve(rhs - matrix @ x)
        residual = float(np.linalg.norm(rhs - matrix @ x)) / norm_b
        _LOGGER.debug("refinement step %i: relative residual %.3e", step + 1, residual)
    if not np.isfinite(residual) or residual > RESIDUAL_TOL:
        raise SolverError(
            f"relative residual {residual:.3e} above {RESIDUAL_TOL:.0e}, "
            "system singular or ill-conditioned"
        )
    solution[free] = x
    _LOGGER.debug("solved %i free DOFs, relative residual %.3e", len(free), residual)
    return DisplacementField(solution.reshape(-1, 3), system.active)


def evaluate_stress(
    element: SurfaceElement,
    displacement: DisplacementField,
    mat: Material,
    r: FloatArray,
) -> FloatArray:
    """Return sigma_G = 2 mu eps_G + lambda tr(eps_G) P at surface point(s) r.

    Args:
        element: surface element holding the point(s)
        displacement: solved nodal displacements
        mat: membrane material
        r: reference point(s) of the surface element, (2,) or (m, 2)

    Returns:
        (3, 3) or (m, 3, 3) symmetric in-plane stress.

    """
    mesh: TetMesh = displacement.active.mesh
    frame = surface_frame(element, r)
    basis: PhysicalBasis = _bulk_basis(mesh, element.parent, frame.point)
    grad_u: FloatArray = np.einsum(
        "ni,...nj->...ij", displacement.local(element.parent), basis.gradients
    )
    proj: FloatArray = tangential_projector(frame.normal)
    strain: FloatArray = proj @ (0.5 * (grad_u + np.swapaxes(grad_u, -1, -2))) @ proj
    trace: FloatArray = np.trace(strain, axis1=-2, axis2=-1)
    return 2.0 * mat.mu * strain + mat.lam * trace[..., None, None] * proj
