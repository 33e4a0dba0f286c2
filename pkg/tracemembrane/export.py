"""Output files: legacy VTK surfaces and fields, CSV tables, error reports.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Iterable, Mapping, Sequence
import csv
import json
import logging
from pathlib import Path
from typing import Final

import meshio
import numpy as np

from tracemembrane import InvalidTopologyError, RootNotFoundError, SurfaceKind
from tracemembrane.basis import FloatArray
from tracemembrane.membrane import DisplacementField
from tracemembrane.mesh import ActiveMesh, IntArray, TetMesh
from tracemembrane.reconstruct import MergedSurface, SurfaceMesh, merge_surface_nodes

_LOGGER: Final[logging.Logger] = logging.getLogger(__name__)

# meshio cell names, VTK types 5 / 22 / 23
CELL_TYPES: Final[dict[SurfaceKind, str]] = {
    "tri3": "triangle",
    "tri6": "triangle6",
    "quad8": "quad8",
}
_VTK_VERSION: Final[str] = "4.2"

type Cell = float | int | str | None


def format_value(value: Cell) -> str:
    """Return a CSV cell, floats with 6 significant digits, None as '-'."""
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def write_table(
    path: Path, header: Sequence[str], rows: Iterable[Sequence[Cell]]
) -> Path:
    """Write a CSV table with a fixed column order."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with Path.open(path, "w", encoding="UTF-8", newline="") as csvfile:
        writer = csv.writer(csvfile)
        writer.writerow(header)
        writer.writerows([format_value(cell) for cell in row] for row in rows)
    _LOGGER.debug("wrote %s", path)
    return path


def _nodal_average(
    merged: MergedSurface, per_element: Sequence[FloatArray]
) -> FloatArray:
    """Average element-node values onto the merged nodes."""
    first: FloatArray = np.asarray(per_element[0])
    total: FloatArray = np.zeros((merged.n_points, *first.shape[1:]))
    count: FloatArray = np.zeros(merged.n_points)
    for conn, values in zip(merged.connectivity, per_element, strict=True):
        np.add.at(total, conn, values)
        np.add.at(count, conn, 1.0)
    return total / count.reshape(-1, *([1] * (total.ndim - 1)))


def surface_mesh(
    merged: MergedSurface, point_data: Mapping[str, FloatArray] | None = None
) -> meshio.Mesh:
    """Build a meshio mesh with one cell block per surface element kind."""
    cells: list[tuple[str, IntArray]] = []
    for kind, cell_type in CELL_TYPES.items():
        block: list[IntArray] = [
            conn
            for conn, elem_kind in zip(merged.connectivity, merged.kinds, strict=True)
            if elem_kind == kind
        ]
        if block:
            cells.append((cell_type, np.array(block, dtype=int)))
    return meshio.Mesh(merged.points, cells, point_data=dict(point_data or {}))


def export_outputs(
    path: Path,
    surface: SurfaceMesh,
    mesh: TetMesh,
    displacement: DisplacementField | None = None,
    stress_errors: Sequence[FloatArray] | None = None,
) -> Path:
    """Write the reconstructed surface, optionally with its solution fields.

    Point data: `displacement`, `displacement_magnitude` and `stress_error`
    (pointwise |sigma_e - sigma_a|), averaged over shared nodes.

    Raises:
        ValueError: empty surface.
        OSError: unwritable path.

    """
    if not len(surface):
        raise ValueError("cannot export an empty surface")
    merged: MergedSurface = merge_surface_nodes(surface, mesh)
    point_data: dict[str, FloatArray] = {}
    if displacement is not None:
        nodal: FloatArray = _nodal_average(
            merged, [displacement.on_surface(elem) for elem in surface]
        )
        point_data["displacement"] = nodal
        point_data["displacement_magnitude"] = np.linalg.norm(nodal, axis=1)
    if stress_errors is not None:
        point_data["stress_error"] = _nodal_average(merged, stress_errors)

    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(
        path,
        surface_mesh(merged, point_data),
        file_format="vtk",
        binary=False,
        fmt_version=_VTK_VERSION,
    )
    _LOGGER.info("wrote %s: %i points, %i cells", path, merged.n_points, len(surface))
    return path


def export_background(
    path: Path, active: ActiveMesh, displacement: DisplacementField | None = None
) -> Path:
    """Write the active background elements (tetra / tetra10) with U."""
    mesh: TetMesh = active.mesh
    cells: IntArray = active.node_index[mesh.elements[active.elements]]
    point_data: dict[str, FloatArray] = {}
    if displacement is not None:
        point_data["displacement"] = displacement.values
    path.parent.mkdir(parents=True, exist_ok=True)
    meshio.write(
        path,
        meshio.Mesh(
            mesh.nodes[active.nodes],
            [("tetra" if mesh.order == 1 else "tetra10", cells)],
            point_data=point_data,
        ),
        file_format="vtk",
        binary=False,
        fmt_version=_VTK_VERSION,
    )
    _LOGGER.info("wrote %s: %i active elements", path, len(active.elements))
    return path


def write_error_report(out_dir: Path, exc: Exception) -> Path:
    """Write error.json with the error class, message and element ids."""
    elements: list[int] = (
        list(exc.elements)
        if isinstance(exc, InvalidTopologyError | RootNotFoundError)
        else []
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    path: Path = out_dir / "error.json"
    path.write_text(
        json.dumps(
            {"error": type(exc).__name__, "message": str(exc), "elements": elements},
            indent=2,
        ),
        encoding="UTF-8",
    )
    return path
