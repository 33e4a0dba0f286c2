"""Parametric geometry of surface elements: frames, projector, quadrature.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Iterable
from dataclasses import dataclass
from typing import Final, NamedTuple, Protocol

import numpy as np

from tracemembrane import DegenerateElementError, ElementKind, SurfaceKind
from tracemembrane.basis import (
    FloatArray,
    ReferenceElement,
    eval_reference_basis,
    quadrature_rule,
    reference_element,
)

# reference element (kind, order) behind each surface element kind
SURFACE_BASIS: Final[dict[SurfaceKind, tuple[ElementKind, int]]] = {
    "tri3": ("triangle", 1),
    "tri6": ("triangle", 2),
    "quad8": ("quad", 2),
}
# default surface integration: degree 4 on triangles, 3x3 Gauss on quads
DEFAULT_DEGREE: Final[dict[ElementKind, int]] = {"triangle": 4, "quad": 5}
_MIN_JACOBIAN: Final[float] = 1e-14


class SurfacePatch(Protocol):
    """Anything with a surface element kind and physical node coordinates."""

    @property
    def kind(self) -> SurfaceKind:
        """Return the surface element kind."""

    @property
    def coords(self) -> FloatArray:
        """Return the physical node coordinates (n, 3)."""


class TangentFrame(NamedTuple):
    """Point, tangents, unit normal and area Jacobian of a surface map."""

    point: FloatArray
    t_r: FloatArray
    t_s: FloatArray
    normal: FloatArray
    jacobian: FloatArray


def surface_reference(patch: SurfacePatch) -> ReferenceElement:
    """Return the reference element that parametrizes the patch."""
    return reference_element(*SURFACE_BASIS[patch.kind])


def surface_frame(patch: SurfacePatch, r: FloatArray) -> TangentFrame:
    """Evaluate the surface map and its frame at reference point(s) r.

    The normal is (t_r x t_s) / |t_r x t_s|, so its sign follows the node
    numbering of the patch.

    Raises:
        DegenerateElementError: surface Jacobian J <= 1e-14.

    """
    ref: ReferenceElement = surface_reference(patch)
    coords: FloatArray = np.asarray(patch.coords, dtype=float)
    values: FloatArray = eval_reference_basis(ref, r, 0)
    derivs: FloatArray = eval_reference_basis(ref, r, 1)
    point: FloatArray = values @ coords
    tangents: FloatArray = np.einsum("...na,ni->...ai", derivs, coords)
    t_r, t_s = tangents[..., 0, :], tangents[..., 1, :]
    cross: FloatArray = np.cross(t_r, t_s)
    jacobian: FloatArray = np.linalg.norm(cross, axis=-1)
    if np.min(jacobian) <= _MIN_JACOBIAN:
        raise DegenerateElementError(
            f"{patch.kind} element with surface Jacobian {np.min(jacobian):.3e}"
        )
    return TangentFrame(
        point, t_r, t_s, cross / np.expand_dims(jacobian, -1), jacobian
    )


def tangential_projector(n: FloatArray) -> FloatArray:
    """Return P = I - n (x) n for one normal (3,) or a stack (m, 3).

    The normal is renormalized before use.

    Raises:
        ValueError: zero normal vector.

    """
    normals: FloatArray = np.asarray(n, dtype=float)
    length: FloatArray = np.linalg.norm(normals, axis=-1, keepdims=True)
    if np.any(length == 0.0):
        raise ValueError("tangential projector of a zero vector")
    unit: FloatArray = normals / length
    return np.eye(3) - unit[..., :, None] * unit[..., None, :]


@dataclass(frozen=True, slots=True, eq=False)
class SurfaceQuadrature:
    """Quadrature on one surface element, weights include the Jacobian."""

    ref_points: FloatArray  # (q, 2)
    points: FloatArray  # (q, 3)
    weights: FloatArray  # (q,), w * J
    normals: FloatArray  # (q, 3), n_h

    @property
    def projectors(self) -> FloatArray:
        """Return P_Gamma at every quadrature point, (q, 3, 3)."""
        return tangential_projector(self.normals)

    @property
    def area(self) -> float:
        """Return the element area."""
        return float(self.weights.sum())


def surface_quadrature(
    patch: SurfacePatch, degree: int | None = None
) -> SurfaceQuadrature:
    """Map a reference rule onto the patch.

    Args:
        patch: surface element
        degree: exactness degree on the reference domain, default 4 for
            triangles and 5 (3x3 Gauss) for quads

    """
    kind: ElementKind = SURFACE_BASIS[patch.kind][0]
    rule = quadrature_rule(kind, DEFAULT_DEGREE[kind] if degree is None else degree)
    frame: TangentFrame = surface_frame(patch, rule.points)
    return SurfaceQuadrature(
        rule.points, frame.point, rule.weights * frame.jacobian, frame.normal
    )


def surface_area(surface: Iterable[SurfacePatch], degree: int | None = None) -> float:
    """Return the summed area of all elements, 0 for an empty surface."""
    return float(sum(surface_quadrature(patch, degree).area for patch in surface))
