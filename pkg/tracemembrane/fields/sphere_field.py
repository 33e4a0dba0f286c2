"""Module to support the sphere signed distance field.

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
    """Signed distance to a sphere, negative inside."""

    INFO: FieldInfo = {
        "name": "sphere",
        "description": "sphere, phi = |x - c| - R",
        "signed_distance": True,
    }

    def __init__(
        self,
        radius: float = 1.0,
        center: Sequence[float] = (0.0, 0.0, 0.0),
        logger_name: str = "",
    ) -> None:
        """Initialize the sphere by radius and center."""
        if radius <= 0.0:
            raise ValueError(f"sphere radius must be positive, got {radius}")
        self.radius: Final[float] = float(radius)
        self.center: Final[FloatArray] = np.asarray(center, dtype=float)
        super().__init__(logger_name, radius=radius, center=list(center))

    def value(self, x: FloatArray) -> FloatArray:
        """Return the signed distance to the sphere."""
        return self.medial_distance(x) - self.radius

    def _gradient(self, x: FloatArray) -> FloatArray:
        rel: FloatArray = x - self.center
        return rel / np.linalg.norm(rel, axis=-1, keepdims=True)

    def medial_distance(self, x: FloatArray) -> FloatArray:
        """Return the distance to the center."""
        return np.linalg.norm(np.asarray(x, dtype=float) - self.center, axis=-1)
