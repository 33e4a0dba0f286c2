"""Test the parametric geometry of surface elements."""

from typing import NamedTuple

from hypothesis import given, strategies as st
import numpy as np
import pytest

from tracemembrane import DegenerateElementError, SurfaceKind
from tracemembrane.basis import FloatArray
from tracemembrane.surfgeom import (
    surface_area,
    surface_frame,
    surface_quadrature,
    tangential_projector,
)

TRI3: FloatArray = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0]])
TRI6: FloatArray = np.vstack((TRI3, [[0.5, 0, 0], [0.5, 0.5, 0], [0, 0.5, 0]]))
QUAD8: FloatArray = np.array(
    [[0.0, 0, 0], [2, 0, 0], [2, 2, 0], [0, 2, 0], [1, 0, 0], [2, 1, 0], [1, 2, 0], [0, 1, 0]]
)


class Patch(NamedTuple):
    """Minimal surface element."""

    kind: SurfaceKind
    coords: FloatArray


@pytest.mark.parametrize(
    ("patch", "area"),
    [(Patch("tri3", TRI3), 0.5), (Patch("tri6", TRI6), 0.5), (Patch("quad8", QUAD8), 4.0)],
    ids=["tri3", "tri6", "quad8"],
)
def test_flat_elements(patch: Patch, area: float) -> None:
    """Flat elements in z = 0 have their polygon area and normal +z."""
    quad = surface_quadrature(patch)
    assert quad.area == pytest.approx(area)
    assert np.allclose(quad.normals, [0.0, 0.0, 1.0])
    assert np.allclose(quad.points[:, 2], 0.0)
    assert quad.projectors.shape == (len(quad.weights), 3, 3)


def test_curved_edge_area() -> None:
    """A bent mid-edge node adds the parabolic segment 2/3 * chord * offset."""
    coords: FloatArray = TRI6.copy()
    coords[4] += [0.1, 0.1, 0.0]
    chord, offset = np.sqrt(2.0), 0.1 * np.sqrt(2.0)
    assert surface_area([Patch("tri6", coords)]) == pytest.approx(
        0.5 + 2.0 / 3.0 * chord * offset
    )


def test_normal_follows_numbering() -> None:
    """Reversing the node order flips the normal."""
    frame = surface_frame(Patch("tri3", TRI3[::-1]), np.array([[0.2, 0.3]]))
    assert np.allclose(frame.normal, [[0.0, 0.0, -1.0]])
    assert frame.jacobian == pytest.approx(1.0)
    assert np.allclose(frame.t_r, TRI3[1] - TRI3[2])


def test_frame_single_point() -> None:
    """A single reference point returns unstacked vectors."""
    frame = surface_frame(Patch("quad8", QUAD8), np.array([0.0, 0.0]))
    assert np.allclose(frame.point, [1.0, 1.0, 0.0])
    assert frame.normal.shape == (3,)
    assert float(frame.jacobian) == pytest.approx(1.0)


def test_degenerate_element() -> None:
    """Collinear nodes have no surface Jacobian."""
    flat = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    with pytest.raises(DegenerateElementError, match="tri3"):
        surface_quadrature(Patch("tri3", flat))


def test_surface_area_empty() -> None:
    """An empty surface has zero area."""
    assert surface_area([]) == 0.0


@given(
    n=st.tuples(*(st.floats(-10.0, 10.0) for _ in range(3))).filter(
        lambda v: np.linalg.norm(v) > 1e-3
    )
)
def test_tangential_projector(n: tuple[float, float, float]) -> None:
    """P is a symmetric idempotent that annihilates the normal."""
    proj: FloatArray = tangential_projector(np.array(n))
    assert np.allclose(proj, proj.T)
    assert np.allclose(proj @ proj, proj, atol=1e-12)
    assert np.allclose(proj @ np.array(n), 0.0, atol=1e-9)
    assert np.trace(proj) == pytest.approx(2.0)


def test_tangential_projector_stack() -> None:
    """Stacked normals give stacked projectors, zero normals are rejected."""
    proj = tangential_projector(np.array([[0.0, 0.0, 2.0], [1.0, 0.0, 0.0]]))
    assert np.allclose(proj[0], np.diag([1.0, 1.0, 0.0]))
    assert np.allclose(proj[1], np.diag([0.0, 1.0, 1.0]))
    with pytest.raises(ValueError, match="zero vector"):
        tangential_projector(np.array([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0]]))
