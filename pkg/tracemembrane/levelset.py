"""Base class for level-set fields and nodal interpolation of level sets.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
import logging
from typing import Any, Final, NamedTuple, final

import numpy as np

from tracemembrane import FieldInfo, MedialAxisError, PrefixAdapter
from tracemembrane.basis import (
    FloatArray,
    ReferenceElement,
    eval_reference_basis,
    reference_element,
)
from tracemembrane.mesh import TetMesh


class ExactSample(NamedTuple):
    """Level-set value, gradient and closest point at physical point(s)."""

    phi: FloatArray
    gradient: FloatArray
    closest: FloatArray


class BaseField(ABC):
    """Abstract base class of analytic level-set fields.

    Subclasses live in `tracemembrane.fields` as `<name>_field.py` and define
    the class `Field`. The zero set of `value` is the surface.
    """

    INFO: FieldInfo  # static field info, set "name" in subclass
    MEDIAL_TOL: Final[float] = 1e-12  # guard radius around the medial axis

    def __init__(self, logger_name: str = "", **params: Any) -> None:
        """Initialize the field.

        Args:
            logger_name (str): name of the logger, default: module name
            params: geometric parameters of the subclass

        """
        assert "name" in self.INFO, "field class must define `INFO`"
        logger_name = logger_name or self.__class__.__module__
        self._log: Final[PrefixAdapter] = PrefixAdapter(
            logging.getLogger(logger_name), {"prefix": f"{self.INFO['name']}:"}
        )
        self._log.debug("initialized with %s", params or "defaults")

    @final
    @classmethod
    def field_id(cls) -> str:
        """Return the plugin name of the field."""
        return cls.INFO["name"]

    @property
    def is_signed_distance(self) -> bool:
        """Return True if |grad phi| = 1 off the medial axis."""
        return bool(self.INFO.get("signed_distance", False))

    @abstractmethod
    def value(self, x: FloatArray) -> FloatArray:
        """Return phi at point(s) x, shape (m,) for x of shape (m, 3)."""

    @abstractmethod
    def _gradient(self, x: FloatArray) -> FloatArray:
        """Return grad phi at points (m, 3) that are off the medial axis."""

    @abstractmethod
    def medial_distance(self, x: FloatArray) -> FloatArray:
        """Return the distance of point(s) to the medial axis (inf if none)."""

    @final
    def gradient(self, x: FloatArray) -> FloatArray:
        """Return grad phi at point(s) x.

        Raises:
            MedialAxisError: a point lies on the medial axis.

        """
        points: FloatArray = np.atleast_2d(np.asarray(x, dtype=float))
        on_axis = np.flatnonzero(self.medial_distance(points) <= self.MEDIAL_TOL)
        if on_axis.size:
            raise MedialAxisError(
                f"{self.field_id()}: gradient undefined at {points[on_axis[0]].tolist()}"
            )
        grad: FloatArray = self._gradient(points)
        return grad if np.ndim(x) > 1 else grad[0]

    def normal(self, x: FloatArray) -> FloatArray:
        """Return the unit normal grad phi / |grad phi|."""
        grad: FloatArray = self.gradient(x)
        return grad / np.linalg.norm(grad, axis=-1, keepdims=True)

    def closest_point(self, x: FloatArray) -> FloatArray:
        """Return the closest point projection p(x) = x - phi(x) grad phi(x)."""
        points: FloatArray = np.asarray(x, dtype=float)
        return points - self.value(points)[..., None] * self.gradient(points)

    @final
    def eval_exact(self, x: FloatArray) -> ExactSample:
        """Return value, unit gradient and closest point at x.

        Raises:
            MedialAxisError: x lies on the medial axis.

        """
        points: FloatArray = np.asarray(x, dtype=float)
        return ExactSample(
            self.value(points), self.gradient(points), self.closest_point(points)
        )


@dataclass(frozen=True, slots=True, eq=False)
class NodalField:
    """Discrete level set Phi, one value per background mesh node."""

    values: FloatArray  # (N,)
    mesh: TetMesh

    @property
    def order(self) -> int:
        """Return the polynomial order m_B of the interpolant."""
        return self.mesh.order

    def snapped(self, eps: float) -> "NodalField":
        """Return a copy with values |Phi_i| < eps replaced by +eps."""
        values: FloatArray = np.where(np.abs(self.values) < eps, eps, self.values)
        return NodalField(values, self.mesh)


def sample_nodal(field: BaseField, mesh: TetMesh) -> NodalField:
    """Sample the field at every mesh node, P2 midpoints included.

    Raises:
        MedialAxisError: a node lies on the medial axis (index reported).

    """
    on_axis = np.flatnonzero(field.medial_distance(mesh.nodes) <= field.MEDIAL_TOL)
    if on_axis.size:
        node: int = int(on_axis[0])
        raise MedialAxisError(
            f"node {node} at {mesh.nodes[node].tolist()} lies on the medial axis "
            f"of field {field.field_id()}",
            node=node,
        )
    return NodalField(np.asarray(field.value(mesh.nodes), dtype=float), mesh)


def eval_discrete(
    elem: int, nodal: NodalField, r: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """Interpolate phi_h and its physical gradient at reference point(s) r.

    Returns:
        (phi_h, grad phi_h) with shapes () and (3,) for one point,
        (m,) and (m, 3) for m points.

    """
    mesh: TetMesh = nodal.mesh
    ref: ReferenceElement = reference_element("tet", mesh.order)
    local: FloatArray = nodal.values[mesh.elements[elem]]
    phi: FloatArray = eval_reference_basis(ref, r, 0) @ local
    grad_ref: FloatArray = np.einsum("...nd,n->...d", eval_reference_basis(ref, r, 1), local)
    return phi, grad_ref @ mesh.affine_map(elem).A_inv
