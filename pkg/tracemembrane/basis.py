"""Reference shape functions, quadrature rules and affine element maps.

Lagrange bases are built from the inverse Vandermonde matrix of a
downward-closed monomial set, so values, gradients and Hessians are all
obtained by differentiating monomials. Simplex quadrature uses collapsed
Gauss-Jacobi rules, the quadrilateral a tensor Gauss-Legendre rule.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from dataclasses import dataclass
from functools import cache
from itertools import product
from math import ceil, perm
from typing import Final, Literal, NamedTuple, Self

import numpy as np
from numpy.typing import NDArray
from scipy.special import roots_jacobi

from tracemembrane import DegenerateElementError, ElementKind

type FloatArray = NDArray[np.float64]

MAX_QUADRATURE_DEGREE: Final[int] = 12

_EXPONENTS: Final[dict[tuple[ElementKind, int], tuple[tuple[int, ...], ...]]] = {
    ("line", 1): ((0,), (1,)),
    ("line", 2): ((0,), (1,), (2,)),
    ("triangle", 1): ((0, 0), (1, 0), (0, 1)),
    ("triangle", 2): ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)),
    # serendipity: complete quadratic plus the two cubic edge terms
    ("quad", 2): ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)),
    ("tet", 1): ((0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)),
    ("tet", 2): (
        (0, 0, 0),
        (1, 0, 0),
        (0, 1, 0),
        (0, 0, 1),
        (2, 0, 0),
        (1, 1, 0),
        (1, 0, 1),
        (0, 2, 0),
        (0, 1, 1),
        (0, 0, 2),
    ),
}

# local edges of a tetrahedron, order of the P2 mid-edge nodes 4..9
TET_EDGES: Final[tuple[tuple[int, int], ...]] = (
    (0, 1),
    (1, 2),
    (0, 2),
    (0, 3),
    (1, 3),
    (2, 3),
)
# local faces, face i is opposite to vertex i
TET_FACES: Final[tuple[tuple[int, int, int], ...]] = (
    (1, 2, 3),
    (0, 2, 3),
    (0, 1, 3),
    (0, 1, 2),
)

_TET_CORNERS: Final[FloatArray] = np.array(
    [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
)
_TRI_CORNERS: Final[FloatArray] = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
_QUAD_CORNERS: Final[FloatArray] = np.array(
    [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]
)


def _reference_nodes(kind: ElementKind, order: int) -> FloatArray:
    """Return corner-first reference node coordinates."""
    if kind == "line":
        return np.array([[0.0], [1.0], [0.5]])[: order + 1]
    if kind == "triangle":
        corners = _TRI_CORNERS
        edges: tuple[tuple[int, int], ...] = ((0, 1), (1, 2), (2, 0))
    elif kind == "quad":
        corners = _QUAD_CORNERS
        edges = ((0, 1), (1, 2), (2, 3), (3, 0))
    else:
        corners = _TET_CORNERS
        edges = TET_EDGES
    if order == 1:
        return corners.copy()
    mids: FloatArray = np.array([(corners[i] + corners[j]) / 2 for i, j in edges])
    return np.vstack((corners, mids))


def _monomials(
    points: FloatArray, exponents: NDArray[np.int_], derivative: tuple[int, ...]
) -> FloatArray:
    """Evaluate the derivative of each monomial at the points, shape (m, n_mono)."""
    table: FloatArray = np.ones((points.shape[0], exponents.shape[0]))
    for axis, order in enumerate(derivative):
        powers: NDArray[np.int_] = exponents[:, axis]
        factor: FloatArray = np.array([perm(int(p), order) for p in powers], float)
        reduced: NDArray[np.int_] = np.maximum(powers - order, 0)
        table *= factor * points[:, axis : axis + 1] ** reduced
    return table


@dataclass(frozen=True, slots=True, eq=False)
class ReferenceElement:
    """Lagrange (or serendipity) element on its reference domain."""

    kind: ElementKind
    order: int
    nodes: FloatArray  # (n, dim) reference node coordinates
    exponents: NDArray[np.int_]  # (n, dim) monomial exponents
    coefficients: FloatArray  # (n, n), basis_i = sum_k C[k, i] * mono_k

    @property
    def dim(self) -> int:
        """Return the reference dimension."""
        return int(self.nodes.shape[1])

    @property
    def n_nodes(self) -> int:
        """Return the number of basis functions."""
        return int(self.nodes.shape[0])


@cache
def reference_element(kind: ElementKind, order: int) -> ReferenceElement:
    """Return the (cached) reference element of the given kind and order.

    Raises:
        ValueError: unsupported (kind, order) combination.

    """
    if (kind, order) not in _EXPONENTS:
        raise ValueError(f"unsupported element {kind!r} of order {order}")
    nodes: FloatArray = _reference_nodes(kind, order)
    exponents: NDArray[np.int_] = np.array(_EXPONENTS[(kind, order)], dtype=int)
    vandermonde: FloatArray = _monomials(nodes, exponents, (0,) * nodes.shape[1])
    # exact coefficients are dyadic rationals, rounding restores them bit-exact
    coefficients: FloatArray = np.round(np.linalg.inv(vandermonde), 12)
    nodes.setflags(write=False)
    coefficients.setflags(write=False)
    return ReferenceElement(kind, order, nodes, exponents, coefficients)


def eval_reference_basis(
    elem: ReferenceElement, r: FloatArray, deriv: Literal[0, 1, 2] = 0
) -> FloatArray:
    """Evaluate basis values, gradients or Hessians at reference points.

    Points outside the reference domain are evaluated by polynomial extension.

    Args:
        elem: reference element
        r: one point (dim,) or several points (m, dim)
        deriv: 0 for values, 1 for gradients, 2 for Hessians

    Returns:
        (n,), (n, dim) or (n, dim, dim) for a single point, with a leading
        axis m for several points.

    """
    points: FloatArray = np.asarray(r, dtype=float)
    single: bool = points.ndim == 1
    points = np.atleast_2d(points)
    dim: int = elem.dim
    if points.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {points.shape}")

    if deriv == 0:
        result = _monomials(points, elem.exponents, (0,) * dim) @ elem.coefficients
    elif deriv == 1:
        result = np.stack(
            [
                _monomials(points, elem.exponents, _unit(dim, a)) @ elem.coefficients
                for a in range(dim)
            ],
            axis=-1,
        )
    elif deriv == 2:
        result = np.empty((points.shape[0], elem.n_nodes, dim, dim))
        for a, b in product(range(dim), repeat=2):
            order = np.array(_unit(dim, a)) + np.array(_unit(dim, b))
            result[:, :, a, b] = (
                _monomials(points, elem.exponents, tuple(int(o) for o in order))
                @ elem.coefficients
            )
    else:
        raise ValueError(f"unsupported derivative order {deriv}")
    return result[0] if single else result


def _unit(dim: int, axis: int) -> tuple[int, ...]:
    return tuple(int(a == axis) for a in range(dim))


class QuadratureRule(NamedTuple):
    """Quadrature points and weights on a reference domain."""

    points: FloatArray  # (q, dim)
    weights: FloatArray  # (q,)
    degree: int


def _gauss_jacobi01(n: int, alpha: int) -> tuple[FloatArray, FloatArray]:
    """Gauss-Jacobi rule for the weight (1 - x)^alpha on [0, 1]."""
    x, w = roots_jacobi(n, alpha, 0)
    return (1.0 + x) / 2.0, w / 2.0 ** (alpha + 1)


@cache
def quadrature_rule(kind: ElementKind, degree: int) -> QuadratureRule:
    """Return a rule that integrates polynomials up to `degree` exactly.

    Reference measures: line [0, 1] -> 1, unit triangle -> 1/2,
    quad [-1, 1]^2 -> 4, unit tet -> 1/6.

    Raises:
        ValueError: unsupported kind or degree.

    """
    if not 0 <= degree <= MAX_QUADRATURE_DEGREE:
        raise ValueError(
            f"quadrature degree {degree} not in [0, {MAX_QUADRATURE_DEGREE}]"
        )
    n: Final[int] = max(1, ceil((degree + 1) / 2))
    if kind == "line":
        points, weights = _gauss_jacobi01(n, 0)
        return QuadratureRule(points[:, None], weights, degree)
    if kind == "quad":
        x, w = np.polynomial.legendre.leggauss(n)
        xx, yy = np.meshgrid(x, x, indexing="ij")
        return QuadratureRule(
            np.column_stack((xx.ravel(), yy.ravel())), np.outer(w, w).ravel(), degree
        )
    if kind == "triangle":
        u, wu = _gauss_jacobi01(n, 1)
        v, wv = _gauss_jacobi01(n, 0)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        points = np.column_stack((uu.ravel(), ((1.0 - uu) * vv).ravel()))
        return QuadratureRule(points, np.outer(wu, wv).ravel(), degree)
    if kind == "tet":
        u, wu = _gauss_jacobi01(n, 2)
        v, wv = _gauss_jacobi01(n, 1)
        s, ws = _gauss_jacobi01(n, 0)
        uu, vv, ss = np.meshgrid(u, v, s, indexing="ij")
        points = np.column_stack(
            (
                uu.ravel(),
                ((1.0 - uu) * vv).ravel(),
                ((1.0 - uu) * (1.0 - vv) * ss).ravel(),
            )
        )
        weights = (wu[:, None, None] * wv[None, :, None] * ws[None, None, :]).ravel()
        return QuadratureRule(points, weights, degree)
    raise ValueError(f"no quadrature rule for {kind!r}")


@dataclass(frozen=True, slots=True, eq=False)
class AffineMap:
    """Affine map x = A r + x1 of the reference tetrahedron onto an element."""

    A: FloatArray  # [x2 - x1, x3 - x1, x4 - x1] as columns
    A_inv: FloatArray
    x1: FloatArray

    @classmethod
    def from_corners(cls, corners: FloatArray) -> Self:
        """Build the map from the four corner coordinates (4, 3).

        Raises:
            DegenerateElementError: if the corners span no volume.

        """
        x1: FloatArray = np.asarray(corners[0], dtype=float)
        mat: FloatArray = (np.asarray(corners[1:4], dtype=float) - x1).T
        scale: float = float(np.abs(mat).max())
        det: float = float(np.linalg.det(mat))
        if scale == 0.0 or abs(det) <= 1e-14 * scale**3:
            raise DegenerateElementError(f"degenerate tetrahedron, det A = {det:.3e}")
        return cls(mat, np.linalg.inv(mat), x1)

    @property
    def det(self) -> float:
        """Return det A, six times the signed element volume."""
        return float(np.linalg.det(self.A))

    def to_physical(self, r: FloatArray) -> FloatArray:
        """Map reference point(s) to physical coordinates."""
        return np.asarray(r, dtype=float) @ self.A.T + self.x1

    def to_reference(self, x: FloatArray) -> FloatArray:
        """Map physical point(s) to reference coordinates, r = A^-1 (x - x1)."""
        return (np.asarray(x, dtype=float) - self.x1) @ self.A_inv.T


class PhysicalBasis(NamedTuple):
    """Bulk basis evaluated at physical points."""

    r: FloatArray  # reference coordinates (m, 3) or (3,)
    values: FloatArray  # (m, n)
    gradients: FloatArray  # (m, n, 3), physical
    hessians: FloatArray  # (m, n, 3, 3), physical


def inverse_affine_map(
    amap: AffineMap, x: FloatArray, elem: ReferenceElement | None = None
) -> PhysicalBasis:
    """Pull physical point(s) back to the reference tet and evaluate the basis.

    Gradients follow grad_x = A^-T grad_r, Hessians A^-T H_r A^-1.
    """
    element: ReferenceElement = elem or reference_element("tet", 1)
    r: FloatArray = amap.to_reference(x)
    grads: FloatArray = eval_reference_basis(element, r, 1) @ amap.A_inv
    hess: FloatArray = np.einsum(
        "ki,...kl,lj->...ij", amap.A_inv, eval_reference_basis(element, r, 2), amap.A_inv
    )
    return PhysicalBasis(r, eval_reference_basis(element, r, 0), grads, hess)
