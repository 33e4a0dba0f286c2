"""Module to support the plane signed distance field.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Sequence
from typing import Final

import numpy as np

from tracemembrane import FieldInfo
from tracemembrane.basis import FloatArray
from tracemembrane.levelset import BaseField


class Field(BaseField):
    """Signed distance to a plane, positive on the side of the normal."""

    INFO: FieldInfo = {
        "name": "plane",
        "description": "plane through a point, phi = (x - p) . n",
        "signed_distance": True,
    }

    def __init__(
        self,
        point: Sequence[float] = (0.0, 0.0, 0.0),
        normal: Sequence[float] = (0.0, 0.0, 1.0),
        logger_name: str = "",
    ) -> None:
        """Initialize the plane by a point and its normal."""
        direction: FloatArray = np.asarray(normal, dtype=float)
        if not np.linalg.norm(direction):
            raise ValueError("plane normal must not be the zero vector")
        self.point: Final[FloatArray] = np.asarray(point, dtype=float)
        self.unit_normal: Final[FloatArray] = direction / np.linalg.norm(direction)
        super().__init__(logger_name, point=list(point), normal=list(normal))

    def value(self, x: FloatArray) -> FloatArray:
        """Return the signed distance to the plane."""
        return (np.asarray(x, dtype=float) - self.point) @ self.unit_normal

    def _gradient(self, x: FloatArray) -> FloatArray:
        return np.broadcast_to(self.unit_normal, np.shape(x)).copy()

    def medial_distance(self, x: FloatArray) -> FloatArray:
        """Return infinity, a plane has no medial axis."""
        return np.full(np.shape(x)[:-1], np.inf)
