"""Module to support the circular cylinder signed distance field.

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
    """Signed distance to an infinite circular cylinder, negative inside."""

    INFO: FieldInfo = {
        "name": "cylinder",
        "description": "circular cylinder, phi = |x - p(x)|_radial - r",
        "signed_distance": True,
    }

    def __init__(
        self,
        radius: float = 1.0,
        axis: Sequence[float] = (1.0, 0.0, 0.0),
        point: Sequence[float] = (0.0, 0.0, 0.0),
        logger_name: str = "",
    ) -> None:
        """Initialize the cylinder by radius, axis direction and a point on the axis."""
        if radius <= 0.0:
            raise ValueError(f"cylinder radius must be positive, got {radius}")
        direction: FloatArray = np.asarray(axis, dtype=float)
        if not np.linalg.norm(direction):
            raise ValueError("cylinder axis must not be the zero vector")
        self.radius: Final[float] = float(radius)
        self.axis: Final[FloatArray] = direction / np.linalg.norm(direction)
        self.point: Final[FloatArray] = np.asarray(point, dtype=float)
        super().__init__(
            logger_name, radius=radius, axis=self.axis.tolist(), point=list(point)
        )

    def _radial(self, x: FloatArray) -> FloatArray:
        rel: FloatArray = np.asarray(x, dtype=float) - self.point
        return rel - (rel @ self.axis)[..., None] * self.axis

    def value(self, x: FloatArray) -> FloatArray:
        """Return the signed distance to the cylinder surface."""
        return np.linalg.norm(self._radial(x), axis=-1) - self.radius

    def _gradient(self, x: FloatArray) -> FloatArray:
        radial: FloatArray = self._radial(x)
        return radial / np.linalg.norm(radial, axis=-1, keepdims=True)

    def medial_distance(self, x: FloatArray) -> FloatArray:
        """Return the distance to the cylinder axis."""
        return np.linalg.norm(self._radial(x), axis=-1)
