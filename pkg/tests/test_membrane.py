"""Test assembly, ghost penalty, solver and stress recovery of the membrane."""

from collections.abc import Callable

import numpy as np
import pytest
from scipy.sparse import csr_matrix

from tracemembrane import MeshError, SolverError
from tracemembrane.basis import FloatArray
from tracemembrane.fields.cylinder_field import Field as CylinderField
from tracemembrane.mesh import ActiveMesh, TetMesh, active_submesh, build_background_mesh
from tracemembrane.membrane import (
    DisplacementField,
    Material,
    MembraneSystem,
    StabilizationParams,
    apply_constraints_and_solve,
    assemble_system,
    cylinder_constraints,
    evaluate_stress,
    lame_plane_stress,
)
from tracemembrane.reconstruct import ReconstructionConfig, SurfaceMesh, reconstruct_surface

type SurfaceFactory = Callable[..., tuple[TetMesh, SurfaceMesh]]

MAT: Material = lame_plane_stress(100.0, 0.5)


def unit_load(x: FloatArray) -> FloatArray:
    """Return the constant load (1, 0, 0)."""
    return np.tile([1.0, 0.0, 0.0], (len(x), 1))


def plane_system(
    plane_surface: SurfaceFactory, order: int
) -> tuple[SurfaceMesh, MembraneSystem]:
    """Assemble the membrane on the plane z = 0.3 of a 2x2x2 cube mesh."""
    mesh, surface = plane_surface(2, order, order, "exact")
    active: ActiveMesh = active_submesh(mesh, surface.cut_flags)
    return surface, assemble_system(active, surface, MAT, StabilizationParams(), unit_load)


def nodal_dofs(active: ActiveMesh, func: Callable[[FloatArray], FloatArray]) -> FloatArray:
    """Return the DOF vector of a vector field sampled at the active nodes."""
    vector: FloatArray = np.zeros(active.n_dof)
    vector[active.dofs(active.nodes)] = func(active.mesh.nodes[active.nodes]).ravel()
    return vector


def test_lame_plane_stress() -> None:
    """Mu = E / (2 (1 + nu)), lambda = E nu / (1 - nu^2)."""
    assert MAT.mu == pytest.approx(100.0 / 3.0)
    assert MAT.lam == pytest.approx(200.0 / 3.0)
    assert lame_plane_stress(0.0, 0.0).mu == 0.0


@pytest.mark.parametrize(
    ("young", "poisson", "match"),
    [(100.0, 1.0, "Poisson"), (100.0, -1.0, "Poisson"), (-1.0, 0.3, "Young")],
)
def test_lame_plane_stress_invalid(young: float, poisson: float, match: str) -> None:
    """Out-of-range material parameters raise ValueError."""
    with pytest.raises(ValueError, match=match):
        lame_plane_stress(young, poisson)


def test_stabilization_params() -> None:
    """Single values and pairs, negative factors rejected."""
    assert StabilizationParams.from_values(2) == StabilizationParams(2.0, 0.0)
    assert StabilizationParams.from_values([1.0, 3.0]).as_tuple(2) == (1.0, 3.0)
    assert StabilizationParams.from_values([1.5]).as_tuple(1) == (1.5,)
    with pytest.raises(ValueError, match=">= 0"):
        StabilizationParams(1.0, -0.1)


def test_stiffness_rigid_motions(plane_surface: SurfaceFactory, bulk_order: int) -> None:
    """The membrane form is symmetric and vanishes on rigid motions."""
    _, system = plane_system(plane_surface, bulk_order)
    stiff: FloatArray = system.stiffness.toarray()
    assert np.allclose(stiff, stiff.T, atol=1e-10)
    for motion in (
        lambda x: np.tile([1.0, -2.0, 0.5], (len(x), 1)),
        lambda x: np.column_stack((-x[:, 1], x[:, 0], np.zeros(len(x)))),
        lambda x: np.column_stack((np.zeros(len(x)), -x[:, 2], x[:, 1])),
    ):
        assert np.allclose(stiff @ nodal_dofs(system.active, motion), 0.0, atol=1e-10)
    stretch: FloatArray = nodal_dofs(
        system.active, lambda x: np.column_stack((x[:, 0], np.zeros((len(x), 2))))
    )
    assert stretch @ stiff @ stretch > 0.0


def test_load_integrates_area(plane_surface: SurfaceFactory, bulk_order: int) -> None:
    """Basis functions sum to one, so a unit load integrates to the area."""
    _, system = plane_system(plane_surface, bulk_order)
    assert system.load[0::3].sum() == pytest.approx(1.0)
    assert np.allclose(system.load[1::3], 0.0)
    assert system.surface_order == bulk_order
    assert system.h == system.active.mesh.h


def test_ghost_penalty_kernels(plane_surface: SurfaceFactory, bulk_order: int) -> None:
    """Jumps vanish for polynomials of the bulk order, the forms are PSD."""
    _, system = plane_system(plane_surface, bulk_order)
    assert system.ghost1.nnz > 0
    slope = np.array([[0.5, -1.0, 2.0], [0.0, 1.5, 0.3], [-0.7, 0.2, 0.0]])
    linear: FloatArray = nodal_dofs(system.active, lambda x: x @ slope.T + 0.25)
    assert np.allclose(system.ghost1 @ linear, 0.0, atol=1e-10)

    noise: FloatArray = np.random.default_rng(3).normal(size=system.active.n_dof)
    assert noise @ (system.ghost1 @ noise) > 0.0
    if bulk_order == 1:
        assert system.ghost2.nnz == 0
        return
    quadratic: FloatArray = nodal_dofs(
        system.active, lambda x: np.column_stack((x[:, 0] ** 2, x[:, 1] * x[:, 2], x[:, 2] ** 2))
    )
    assert np.allclose(system.ghost1 @ quadratic, 0.0, atol=1e-10)
    assert np.allclose(system.ghost2 @ quadratic, 0.0, atol=1e-10)
    assert noise @ (system.ghost2 @ noise) > 0.0


def test_matrix_combines_forms(plane_surface: SurfaceFactory) -> None:
    """A_h = a_h + gamma1 j_h1 + gamma2 j_h2."""
    _, system = plane_system(plane_surface, 2)
    stab = system.with_stabilization(StabilizationParams(2.0, 3.0))
    expected = system.stiffness + 2.0 * system.ghost1 + 3.0 * system.ghost2
    assert np.allclose(stab.matrix.toarray(), expected.toarray())
    assert np.allclose(system.matrix.toarray(), system.stiffness.toarray())
    assert np.array_equal(system.with_load(np.ones(system.active.n_dof)).load, 1.0)


def test_inactive_parent(plane_surface: SurfaceFactory) -> None:
    """Surface elements must lie in the active mesh."""
    mesh, surface = plane_surface(2, 1, 1, "exact")
    flags = surface.cut_flags.copy()
    flags[surface.elements[0].parent] = False
    with pytest.raises(MeshError, match="inactive background element"):
        assemble_system(
            active_submesh(mesh, flags), surface, MAT, StabilizationParams(), unit_load
        )


def single_element_system(matrix: FloatArray, load: FloatArray) -> MembraneSystem:
    """Return a system on one active tetrahedron with the given matrix."""
    mesh: TetMesh = build_background_mesh([[0, 0, 0], [1, 1, 1]], 1)
    active: ActiveMesh = active_submesh(mesh, np.eye(6, dtype=bool)[0])
    zero = csr_matrix((12, 12))
    return MembraneSystem(active, csr_matrix(matrix), zero, zero, load, mesh.h, 1)


def test_solve_identity() -> None:
    """Free DOFs take the load, constrained DOFs stay zero."""
    load: FloatArray = np.arange(1.0, 13.0)
    system = single_element_system(np.eye(12), load)
    solution: DisplacementField = apply_constraints_and_solve(system, np.array([0, 5]))
    expected: FloatArray = load.copy()
    expected[[0, 5]] = 0.0
    assert np.allclose(solution.vector, expected)
    assert solution.values.shape == (4, 3)
    assert np.allclose(apply_constraints_and_solve(system).vector, load)


def test_solve_zero_load() -> None:
    """A zero load returns zero displacement without factorizing."""
    system = single_element_system(np.zeros((12, 12)), np.zeros(12))
    assert not apply_constraints_and_solve(system).vector.any()


@pytest.mark.parametrize(
    ("matrix", "match"),
    [
        (np.zeros((12, 12)), "positive definite"),
        (np.kron(np.eye(6), np.ones((2, 2))), "singular"),
    ],
    ids=["zero", "singular"],
)
def test_solve_errors(matrix: FloatArray, match: str) -> None:
    """Indefinite and singular systems raise SolverError."""
    system = single_element_system(matrix, np.ones(12))
    with pytest.raises(SolverError, match=match):
        apply_constraints_and_solve(system)


def test_solve_constraint_out_of_range() -> None:
    """Constraint DOFs must exist."""
    system = single_element_system(np.eye(12), np.ones(12))
    with pytest.raises(ValueError, match="out of range"):
        apply_constraints_and_solve(system, np.array([12]))


def test_stress_of_uniaxial_stretch(plane_surface: SurfaceFactory, bulk_order: int) -> None:
    """U = (a x, 0, 0) on the plane z = c gives diag((2 mu + lambda) a, lambda a, 0)."""
    mesh, surface = plane_surface(2, bulk_order, bulk_order, "exact")
    active: ActiveMesh = active_submesh(mesh, surface.cut_flags)
    a: float = 0.01
    coords: FloatArray = mesh.nodes[active.nodes]
    field = DisplacementField(
        np.column_stack((a * coords[:, 0], np.zeros((len(coords), 2)))), active
    )
    expected = np.diag([(2.0 * MAT.mu + MAT.lam) * a, MAT.lam * a, 0.0])
    for element in surface:
        sigma = evaluate_stress(element, field, MAT, np.array([[0.2, 0.2], [0.1, 0.3]]))
        assert np.allclose(sigma, expected)
        assert np.allclose(field.on_surface(element)[:, 0], a * element.coords[:, 0])
    single = evaluate_stress(surface.elements[0], field, MAT, np.array([0.25, 0.25]))
    assert single.shape == (3, 3)


def test_cylinder_constraints(plane_surface: SurfaceFactory) -> None:
    """U_x is fixed at x = 0, u_y and u_z at x = L."""
    mesh, surface = plane_surface(2, 1, 1, "exact")
    active: ActiveMesh = active_submesh(mesh, surface.cut_flags)
    x: FloatArray = mesh.nodes[active.nodes, 0]
    n_start, n_end = int(np.sum(x == 0.0)), int(np.sum(x == 1.0))
    fixed = cylinder_constraints(active, 1.0)
    assert len(fixed) == n_start + 2 * n_end
    assert set(np.unique(x[fixed // 3])) == {0.0, 1.0}
    assert np.all(x[fixed[fixed % 3 == 0] // 3] == 0.0)
    assert np.all(x[fixed[fixed % 3 != 0] // 3] == 1.0)


def test_stiffness_energy_nonnegative(
    cylinder_mesh: Callable[[int, int], TetMesh], cylinder: CylinderField, bulk_order: int
) -> None:
    """a_h(u, u) >= 0 for random displacements on the curved cylinder."""
    mesh: TetMesh = cylinder_mesh(1, bulk_order)
    surface = reconstruct_surface(mesh, cylinder, ReconstructionConfig("exact", 2))
    active: ActiveMesh = active_submesh(mesh, surface.cut_flags)
    system = assemble_system(active, surface, MAT, StabilizationParams(), unit_load)
    rng = np.random.default_rng(11)
    for _ in range(20):
        u: FloatArray = rng.normal(size=active.n_dof)
        assert u @ (system.stiffness @ u) >= -1e-10 * (u @ u)
