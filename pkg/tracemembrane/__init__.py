"""Trace finite element toolkit for level-set surfaces and membranes (tracemembrane).

Second-order zero-level surfaces are reconstructed from signed distance
functions on P1/P2 tetrahedral background meshes, and the linear elastic
membrane problem is solved on them with ghost-penalty stabilization.
Stand-alone usage is possible in any Python environment (with necessary
dependencies installed).

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import MutableMapping
from contextlib import suppress
from enum import IntEnum, unique
from importlib.metadata import PackageNotFoundError, version
import logging
from typing import Any, Final, Literal, TypedDict

__version__: str = "0.0.0.dev0"
with suppress(PackageNotFoundError):
    __version__ = version("tracemembrane")

type ElementKind = Literal["line", "triangle", "quad", "tet"]
type SurfaceKind = Literal["tri3", "tri6", "quad8"]
type Source = Literal["exact", "discrete"]
type Strategy = Literal["chord_normal", "gradient", "projected_gradient"]
type StudyKind = Literal[
    "reconstruct", "solve", "convergence", "gamma-sweep", "gamma-optimize"
]
type GammaMode = Literal["fixed", "optimize"]
type OptimizerMode = Literal["simplex2d", "golden1d"]


@unique
class Verdict(IntEnum):
    """Outcome of the cut classification of one background element."""

    NOT_CUT = 0
    VALID_CUT = 1
    INVALID_TOPOLOGY = 2


class FieldInfo(TypedDict, total=False):
    """Static description of a level-set field plugin."""

    name: str
    description: str
    signed_distance: bool  # True: |grad phi| = 1 off the medial axis


class FieldSpec(TypedDict, total=False):
    """Selection of a level-set field plugin in a study configuration."""

    type: str  # plugin name without "_field" postfix, e.g. "cylinder"
    params: dict[str, Any]


class BenchmarkSpec(TypedDict, total=False):
    """Cylinder benchmark constants in a study configuration."""

    radius: float
    thickness: float
    length: float
    force: float
    young: float
    poisson: float


class ReconstructionSpec(TypedDict, total=False):
    """Root finding and classification settings in a study configuration."""

    strategy: Strategy
    tol_root: float
    max_iter: int
    curvature_tol: float
    grid_degree: int


class StudyConfig(TypedDict, total=False):
    """Schema of a JSON study configuration, unknown keys are rejected."""

    kind: StudyKind
    bulk_order: int  # m_B
    surface_order: int  # m_Gamma
    source: Source
    levels: list[int]  # refinement levels k, 1-based
    box: list[list[float]]  # [[x0, y0, z0], [x1, y1, z1]]
    subdivisions: list[list[int]]  # [nx, ny, nz] per level k
    field: FieldSpec
    benchmark: BenchmarkSpec
    gamma: list[float] | list[list[float]]  # fixed [g1, g2] or one per level
    gamma_mode: GammaMode
    gamma_bounds: list[list[float]]
    gamma_start: list[float]
    gamma_grid: dict[str, list[float]]  # keys "gamma1", "gamma2"
    max_evaluations: int
    reconstruction: ReconstructionSpec
    quadrature_degree: int
    vtk: bool
    output_dir: str
    seed: int


class TraceMembraneError(Exception):
    """Base class of all errors raised by the toolkit."""


class MeshError(TraceMembraneError):
    """Structural problem with a background mesh or its active part."""


class DegenerateElementError(MeshError):
    """Element with (numerically) zero volume or surface Jacobian."""


class MedialAxisError(TraceMembraneError):
    """Level-set gradient requested where the closest point is not unique."""

    def __init__(self, msg: str, node: int | None = None) -> None:
        """Store the offending node index, if known."""
        super().__init__(msg)
        self.node: Final[int | None] = node


class RootNotFoundError(TraceMembraneError):
    """Newton-Raphson iteration did not reach the root tolerance."""

    def __init__(
        self, msg: str, element: int | None = None, iterations: int = 0
    ) -> None:
        """Store diagnostics of the failed search."""
        super().__init__(msg)
        self.element: int | None = element
        self.iterations: Final[int] = iterations

    @property
    def elements(self) -> list[int]:
        """Return the offending element as list (empty if unknown)."""
        return [] if self.element is None else [self.element]


class InvalidTopologyError(TraceMembraneError):
    """Cut elements that violate the valid-topology rules."""

    def __init__(self, elements: list[int], reasons: list[str]) -> None:
        """Build the message from the offending elements."""
        self.elements: Final[list[int]] = elements
        self.reasons: Final[list[str]] = reasons
        preview: str = ", ".join(
            f"{elem} ({reason})"
            for elem, reason in zip(elements[:5], reasons[:5], strict=True)
        )
        super().__init__(
            f"{len(elements)} element(s) with invalid cut topology: {preview}"
            f"{', ...' if len(elements) > 5 else ''}; "
            "refine the background mesh locally around these elements"
        )


class SolverError(TraceMembraneError):
    """Linear solve failed or did not reach the residual tolerance."""


class ConfigError(TraceMembraneError):
    """Study configuration does not match the schema."""


class PrefixAdapter(logging.LoggerAdapter[logging.Logger]):
    """Logging adapter to add a prefix (field name, level) to each message."""

    def process(
        self, msg: str, kwargs: MutableMapping[str, Any]
    ) -> tuple[str, MutableMapping[str, Any]]:
        """Process the logging message."""
        prefix: Final[str] = str(self.extra.get("prefix") if self.extra else "")
        return (f"{prefix} {msg}", kwargs)
