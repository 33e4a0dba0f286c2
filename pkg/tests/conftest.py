"""Common fixtures for the tracemembrane library tests.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Callable
import logging
from types import ModuleType
from typing import Final, cast

from hypothesis import HealthCheck, settings, strategies as st
import numpy as np
import pytest

from tracemembrane.fields.cylinder_field import Field as CylinderField
from tracemembrane.fields.plane_field import Field as PlaneField
from tracemembrane.mesh import TetMesh, build_background_mesh
from tracemembrane.reconstruct import ReconstructionConfig, SurfaceMesh, reconstruct_surface
from tracemembrane.study import DEFAULT_CONFIG
from tracemembrane.utils import load_field_plugins

logging.basicConfig(level=logging.INFO)
LOGGER: logging.Logger = logging.getLogger(__package__)

UNIT_BOX: Final[list[list[float]]] = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]
PLANE_HEIGHT: Final[float] = 0.3  # off all lattice points of the unit cube


def pytest_addoption(parser: pytest.Parser) -> None:
    """Add custom command-line options for max_examples and slow studies."""
    parser.addoption(
        "--max-examples",
        action="store",
        type=int,
        default=200,
        help="Set the maximum number of examples for Hypothesis tests.",
    )
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run the full refinement studies against the reference tables.",
    )


def pytest_configure(config: pytest.Config) -> None:
    """Configure pytest with custom settings."""
    max_examples: int = cast(int, config.getoption("--max-examples"))
    settings.register_profile(
        "default",
        max_examples=max_examples,
        deadline=None,
        suppress_health_check=[HealthCheck.function_scoped_fixture],
    )
    settings.load_profile("default")


def pytest_collection_modifyitems(
    config: pytest.Config, items: list[pytest.Item]
) -> None:
    """Skip slow studies unless --run-slow is given."""
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def tet_points(min_value: float = 0.0) -> st.SearchStrategy[np.ndarray]:
    """Return a strategy for points inside the reference tetrahedron."""
    return st.tuples(
        *(st.floats(min_value, 1.0, allow_nan=False) for _ in range(4))
    ).filter(lambda lam: sum(lam) > 1e-3).map(
        lambda lam: np.array(lam[1:]) / sum(lam)
    )


@pytest.fixture(
    params=sorted(
        load_field_plugins(), key=lambda plugin: getattr(plugin, "__name__", "")
    ),
    ids=lambda param: param.__name__.rsplit(".", 1)[-1],
)
def plugin_fixture(request: pytest.FixtureRequest) -> ModuleType:
    """Return module of a level-set field."""
    assert isinstance(request.param, ModuleType)
    return request.param


@pytest.fixture(params=[1, 2], ids=["P1", "P2"])
def bulk_order(request: pytest.FixtureRequest) -> int:
    """Return the polynomial order of the background mesh."""
    assert isinstance(request.param, int)
    return request.param


@pytest.fixture
def unit_cube() -> Callable[[int, int], TetMesh]:
    """Return a factory for meshes of the unit cube."""

    def _mesh(n: int = 1, order: int = 1) -> TetMesh:
        return build_background_mesh(UNIT_BOX, n, order)

    return _mesh


@pytest.fixture
def plane_field() -> PlaneField:
    """Return the plane z = 0.3 with upward normal."""
    return PlaneField(point=(0.0, 0.0, PLANE_HEIGHT), normal=(0.0, 0.0, 1.0))


@pytest.fixture
def plane_surface(
    unit_cube: Callable[[int, int], TetMesh], plane_field: PlaneField
) -> Callable[..., tuple[TetMesh, SurfaceMesh]]:
    """Return a factory reconstructing the plane z = 0.3 in the unit cube."""

    def _surface(
        n: int = 1, order: int = 1, surface_order: int = 2, source: str = "exact"
    ) -> tuple[TetMesh, SurfaceMesh]:
        mesh: TetMesh = unit_cube(n, order)
        return mesh, reconstruct_surface(
            mesh, plane_field, ReconstructionConfig(source, surface_order)  # type: ignore[arg-type]
        )

    return _surface


@pytest.fixture
def cylinder() -> CylinderField:
    """Return the benchmark cylinder of radius 1 around the x-axis."""
    return CylinderField()


@pytest.fixture
def cylinder_mesh() -> Callable[[int, int], TetMesh]:
    """Return a factory for the meshes of the benchmark ladder."""

    def _mesh(k: int = 1, order: int = 1) -> TetMesh:
        return build_background_mesh(
            DEFAULT_CONFIG["box"], DEFAULT_CONFIG["subdivisions"][k - 1], order, k
        )

    return _mesh
