"""Error norms, convergence rates and stabilization parameter studies.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

import asyncio
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
from math import inf, isfinite, log, pi, sqrt
from pathlib import Path
from typing import Final, NamedTuple, Self

import numpy as np
from scipy.optimize import minimize

from tracemembrane import (
    BenchmarkSpec,
    OptimizerMode,
    Source,
    StudyKind,
    TraceMembraneError,
)
from tracemembrane.basis import FloatArray
from tracemembrane.levelset import BaseField
from tracemembrane.membrane import (
    DisplacementField,
    LoadFunction,
    Material,
    MembraneSystem,
    evaluate_stress,
    lame_plane_stress,
)
from tracemembrane.mesh import IntArray, mesh_size as mesh_size
from tracemembrane.reconstruct import SurfaceMesh
from tracemembrane.surfgeom import SurfaceQuadrature, surface_quadrature, surface_reference

_LOGGER: Final[logging.Logger] = logging.getLogger(__name__)

type Objective = Callable[[tuple[float, ...]], float]

GOLDEN_RATIO: Final[float] = 2.0 / (1.0 + sqrt(5.0))


@dataclass(frozen=True, slots=True)
class BenchmarkConfig:
    """Open cylinder under axial surface load, fixed axially at x = 0."""

    radius: float = 1.0
    thickness: float = 0.01
    length: float = 4.0
    force: float = 1.0
    young: float = 100.0
    poisson: float = 0.5

    def __post_init__(self) -> None:
        """Validate the constants."""
        if min(self.radius, self.thickness, self.length, self.force, self.young) <= 0:
            raise ValueError("benchmark constants must be positive")
        if not 0.0 <= self.poisson < 1.0:
            raise ValueError(f"Poisson ratio must lie in [0, 1), got {self.poisson}")

    @classmethod
    def from_spec(cls, spec: BenchmarkSpec) -> Self:
        """Build from a study configuration entry."""
        return cls(**spec)

    @property
    def material(self) -> Material:
        """Return the plane-stress material of the benchmark."""
        return lame_plane_stress(self.young, self.poisson)


def exact_benchmark(
    x: float | FloatArray, bench: BenchmarkConfig | None = None
) -> tuple[FloatArray, FloatArray]:
    """Return the axial load density f and the exact axial stress at x.

    f = F x / (2 pi r L^2) along +x and sigma_e = F (1 - (x/L)^2) / (4 pi r t).

    Returns:
        (f, sigma_e) with shapes (..., 3) and (...) for axial coordinates x.

    """
    cfg: BenchmarkConfig = bench or BenchmarkConfig()
    axial: FloatArray = np.asarray(x, dtype=float)
    density: FloatArray = cfg.force * axial / (2.0 * pi * cfg.radius * cfg.length**2)
    load: FloatArray = np.zeros((*axial.shape, 3))
    load[..., 0] = density
    sigma: FloatArray = (
        cfg.force
        * (1.0 - (axial / cfg.length) ** 2)
        / (4.0 * pi * cfg.radius * cfg.thickness)
    )
    return load, sigma


def benchmark_load(bench: BenchmarkConfig) -> LoadFunction:
    """Return the membrane load per unit thickness, f / t at physical points."""

    def load(points: FloatArray) -> FloatArray:
        return exact_benchmark(points[..., 0], bench)[0] / bench.thickness

    return load


def stress_error(
    surface: SurfaceMesh,
    displacement: DisplacementField,
    bench: BenchmarkConfig | None = None,
    degree: int | None = None,
) -> float:
    """Return eps_sigma = || sigma_e - |eig(sigma_G)| ||_L2(Gamma_h).

    At each quadrature point sigma_a is the Euclidean norm of the three
    eigenvalues of the in-plane stress.
    """
    cfg: BenchmarkConfig = bench or BenchmarkConfig()
    mat: Material = cfg.material
    total: float = 0.0
    for element in surface:
        quad: SurfaceQuadrature = surface_quadrature(element, degree)
        stress: FloatArray = evaluate_stress(element, displacement, mat, quad.ref_points)
        sigma_a: FloatArray = np.linalg.norm(np.linalg.eigvalsh(stress), axis=-1)
        sigma_e: FloatArray = exact_benchmark(quad.points[:, 0], cfg)[1]
        total += float(quad.weights @ (sigma_e - sigma_a) ** 2)
    return sqrt(total)


def pointwise_stress_error(
    surface: SurfaceMesh,
    displacement: DisplacementField,
    bench: BenchmarkConfig | None = None,
) -> list[FloatArray]:
    """Return |sigma_e - sigma_a| at the nodes of every surface element."""
    cfg: BenchmarkConfig = bench or BenchmarkConfig()
    errors: list[FloatArray] = []
    for element in surface:
        nodes: FloatArray = surface_reference(element).nodes
        stress: FloatArray = evaluate_stress(element, displacement, cfg.material, nodes)
        sigma_a: FloatArray = np.linalg.norm(np.linalg.eigvalsh(stress), axis=-1)
        errors.append(np.abs(exact_benchmark(element.coords[:, 0], cfg)[1] - sigma_a))
    return errors


def geometric_and_normal_error(
    surface: SurfaceMesh, level_set: BaseField, degree: int | None = None
) -> tuple[float, float]:
    """Return eps_geom = ||phi(x)||_L2(Gamma_h) and eps_n = ||n_e - n_h||_L2.

    n_e is the normalized gradient of the analytic level set, n_h the
    parametric normal of the surface element.
    """
    geom: float = 0.0
    normal: float = 0.0
    for element in surface:
        quad: SurfaceQuadrature = surface_quadrature(element, degree)
        geom += float(quad.weights @ level_set.value(quad.points) ** 2)
        diff: FloatArray = level_set.normal(quad.points) - quad.normals
        normal += float(quad.weights @ np.einsum("qi,qi->q", diff, diff))
    return sqrt(geom), sqrt(normal)


def convergence_rates(errors: Sequence[float], hs: Sequence[float]) -> list[float]:
    """Return rate_i = log(e_(i-1) / e_i) / log(h_(i-1) / h_i) for i >= 1.

    Raises:
        ValueError: fewer than two levels, length mismatch, h not strictly
            decreasing or a non-positive error.

    """
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error and h lists of length >= 2")
    if any(e <= 0.0 for e in errors):
        raise ValueError("convergence rates need positive errors")
    if any(h1 >= h0 for h0, h1 in zip(hs, hs[1:], strict=False)):
        raise ValueError("mesh sizes must be strictly decreasing")
    return [
        log(e0 / e1) / log(h0 / h1)
        for e0, e1, h0, h1 in zip(errors, errors[1:], hs, hs[1:], strict=False)
    ]


class GammaResult(NamedTuple):
    """Outcome of a stabilization parameter optimization."""

    gamma: tuple[float, ...]
    value: float
    evaluations: int


def golden_section(
    objective: Callable[[float], float],
    lo: float,
    hi: float,
    tol: float = 1e-2,
    max_iter: int = 100,
) -> tuple[float, float, int]:
    """Minimize a unimodal function on [lo, hi] to a bracket width below tol.

    The interval ends are compared against the final estimate, so minima on
    the boundary are returned exactly.

    Returns:
        (argmin, minimum, number of evaluations)

    """
    x1: float = hi - GOLDEN_RATIO * (hi - lo)
    x2: float = lo + GOLDEN_RATIO * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    evaluations: int = 2
    a, b = lo, hi
    while b - a > tol and evaluations < max_iter:
        if f2 > f1:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN_RATIO * (b - a)
            f1 = objective(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN_RATIO * (b - a)
            f2 = objective(x2)
        evaluations += 1

    best: tuple[float, float] = (0.5 * (a + b), objective(0.5 * (a + b)))
    for end in (lo, hi):
        if (value := objective(end)) < best[1]:
            best = (end, value)
    return best[0], best[1], evaluations + 3


class _SafeObjective:
    """Objective wrapper mapping solver failures to +inf and counting calls."""

    def __init__(self, objective: Objective) -> None:
        self._objective: Final[Objective] = objective
        self.history: list[tuple[tuple[float, ...], float]] = []

    def __call__(self, gamma: Sequence[float]) -> float:
        key: tuple[float, ...] = tuple(float(g) for g in gamma)
        try:
            value: float = float(self._objective(key))
        except (TraceMembraneError, np.linalg.LinAlgError) as exc:
            _LOGGER.warning("objective failed at gamma=%s (%s), using +inf", key, exc)
            value = inf
        if not isfinite(value):
            value = inf
        self.history.append((key, value))
        _LOGGER.debug("gamma=%s: %.6g", key, value)
        return value


def optimize_gamma(
    objective: Objective,
    mode: OptimizerMode,
    bounds: Sequence[Sequence[float]],
    start: Sequence[float] = (1.0, 1.0),
    max_evaluations: int = 60,
    tol: float = 1e-2,
) -> GammaResult:
    """Minimize the stress error over the ghost penalty factors.

    golden1d searches gamma in bounds[0] by golden section; simplex2d runs
    Nelder-Mead (coefficients 1, 2, 0.5, 0.5) from `start` with unit initial
    steps, clipped to the bounds, until the simplex is smaller than tol or
    `max_evaluations` calls were made. Failing evaluations count as +inf.
    """
    safe = _SafeObjective(objective)
    if mode == "golden1d":
        lo, hi = (float(v) for v in bounds[0])
        gamma, value, _ = golden_section(lambda g: safe((g,)), lo, hi, tol)
        result = GammaResult((gamma,), value, len(safe.history))
    elif mode == "simplex2d":
        x0: FloatArray = np.asarray(start, dtype=float)
        simplex: FloatArray = np.vstack((x0, x0 + (1.0, 0.0), x0 + (0.0, 1.0)))
        res = minimize(
            safe,
            x0,
            method="Nelder-Mead",
            bounds=[tuple(b) for b in bounds],
            options={
                "initial_simplex": simplex,
                "xatol": tol,
                "fatol": inf,
                "maxfev": max_evaluations,
            },
        )
        best_gamma, best_value = min(safe.history, key=lambda item: item[1])
        if float(res.fun) <= best_value:
            best_gamma, best_value = tuple(float(v) for v in res.x), float(res.fun)
        result = GammaResult(best_gamma, best_value, len(safe.history))
    else:
        raise ValueError(f"unknown optimizer mode {mode!r}")
    _LOGGER.info(
        "%s: gamma*=%s, eps=%.6g after %i evaluations",
        mode,
        tuple(round(g, 4) for g in result.gamma),
        result.value,
        result.evaluations,
    )
    return result


async def sweep_gamma(
    objective: Objective,
    grid: Sequence[Sequence[float]],
    max_workers: int | None = None,
) -> list[tuple[tuple[float, ...], float]]:
    """Evaluate the objective on a grid of gamma tuples concurrently.

    Each evaluation runs in a worker thread and owns its system; failures
    are reported as +inf.
    """
    safe = _SafeObjective(objective)
    loop: asyncio.AbstractEventLoop = asyncio.get_running_loop()
    points: list[tuple[float, ...]] = [tuple(float(g) for g in gamma) for gamma in grid]
    with ThreadPoolExecutor(max_workers) as pool:
        values: list[float] = await asyncio.gather(
            *(loop.run_in_executor(pool, safe, gamma) for gamma in points)
        )
    return list(zip(points, values, strict=True))


def extreme_eigenvalues(
    system: MembraneSystem, constraints: IntArray | None = None
) -> tuple[float, float]:
    """Return the smallest and largest eigenvalue of the free-DOF matrix.

    The matrix is densified, so this is meant for small meshes.
    """
    fixed: IntArray = system.constraints if constraints is None else constraints
    free: IntArray = np.setdiff1d(np.arange(system.active.n_dof), fixed)
    eigenvalues: FloatArray = np.linalg.eigvalsh(
        system.matrix[free][:, free].toarray()
    )
    return float(eigenvalues[0]), float(eigenvalues[-1])


@dataclass(slots=True)
class StudyRow:
    """Results of one refinement level."""

    k: int
    h: float
    n_nodes: int
    n_cut: int
    errors: dict[str, float] = field(default_factory=dict)  # eps_sigma, ...
    gamma: tuple[float, ...] = ()


@dataclass(slots=True)
class StudyReport:
    """Per-level results of a study plus its discretization metadata."""

    kind: StudyKind
    bulk_order: int
    surface_order: int
    source: Source
    rows: list[StudyRow] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)  # tables and VTK written

    def column(self, name: str) -> list[float]:
        """Return one error column over all levels."""
        return [row.errors[name] for row in self.rows]

    def rates(self, name: str) -> list[float | None]:
        """Return the rate column of an error, None for the first level."""
        if len(self.rows) < 2:
            return [None] * len(self.rows)
        return [None, *convergence_rates(self.column(name), [r.h for r in self.rows])]
