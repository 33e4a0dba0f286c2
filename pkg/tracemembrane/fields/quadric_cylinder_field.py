"""Module to support the quadric (non-distance) cylinder level set.

The zero set equals the circular cylinder, but phi = rho^2 - r^2 is not a
distance function, so |grad phi| = 2 rho.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Sequence

import numpy as np

from tracemembrane import FieldInfo
from tracemembrane.basis import FloatArray
from tracemembrane.fields.cylinder_field import Field as CylinderField


class Field(CylinderField):
    """Quadric level set y^2 + z^2 - r^2 of a cylinder (for axis x)."""

    INFO: FieldInfo = {
        "name": "quadric_cylinder",
        "description": "cylinder as quadric, phi = rho^2 - r^2",
        "signed_distance": False,
    }

    def __init__(
        self,
        radius: float = 1.0,
        axis: Sequence[float] = (1.0, 0.0, 0.0),
        point: Sequence[float] = (0.0, 0.0, 0.0),
        logger_name: str = "",
    ) -> None:
        """Initialize the quadric by radius, axis direction and a point on the axis."""
        super().__init__(radius, axis, point, logger_name)

    def value(self, x: FloatArray) -> FloatArray:
        """Return rho^2 - r^2 with rho the distance to the axis."""
        radial: FloatArray = self._radial(x)
        return np.einsum("...i,...i->...", radial, radial) - self.radius**2

    def _gradient(self, x: FloatArray) -> FloatArray:
        return 2.0 * self._radial(x)

    def closest_point(self, x: FloatArray) -> FloatArray:
        """Return the radial projection onto the cylinder."""
        points: FloatArray = np.asarray(x, dtype=float)
        radial: FloatArray = self._radial(points)
        rho: FloatArray = np.linalg.norm(radial, axis=-1, keepdims=True)
        return points - radial + self.radius * radial / rho
