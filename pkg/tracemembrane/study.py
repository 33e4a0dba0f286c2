"""Study configuration and the per-level reconstruction/membrane pipeline.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

import asyncio
from collections.abc import Mapping
from copy import deepcopy
from dataclasses import dataclass, replace
from itertools import product
import json
import logging
import os
from pathlib import Path
from typing import Any, Final, get_args

import numpy as np

from tracemembrane import (
    BenchmarkSpec,
    ConfigError,
    GammaMode,
    PrefixAdapter,
    ReconstructionSpec,
    Source,
    StudyConfig,
    StudyKind,
    Strategy,
)
from tracemembrane.analysis import (
    BenchmarkConfig,
    StudyReport,
    StudyRow,
    benchmark_load,
    geometric_and_normal_error,
    optimize_gamma,
    pointwise_stress_error,
    stress_error,
    sweep_gamma,
)
from tracemembrane.export import export_background, export_outputs, write_table
from tracemembrane.levelset import BaseField
from tracemembrane.membrane import (
    DisplacementField,
    MembraneSystem,
    StabilizationParams,
    apply_constraints_and_solve,
    assemble_system,
    cylinder_constraints,
)
from tracemembrane.mesh import ActiveMesh, TetMesh, active_submesh, build_background_mesh
from tracemembrane.reconstruct import (
    ReconstructionConfig,
    SurfaceMesh,
    reconstruct_surface,
)
from tracemembrane.utils import make_field

_LOGGER: Final[logging.Logger] = logging.getLogger(__name__)

OUTPUT_ENV: Final[str] = "TRACEMEMBRANE_OUT"
_SHIFT: Final[float] = 0.0317  # keeps every node off the cylinder axis

DEFAULT_CONFIG: Final[StudyConfig] = {
    "kind": "convergence",
    "bulk_order": 2,
    "surface_order": 2,
    "source": "exact",
    "levels": [1, 2, 3],
    "box": [[0.0, -1.5 + _SHIFT, -1.5 + _SHIFT], [4.0, 1.5 + _SHIFT, 1.5 + _SHIFT]],
    "subdivisions": [[4, 3, 3], [8, 5, 5], [12, 7, 7], [16, 9, 9]],
    "field": {"type": "cylinder", "params": {"radius": 1.0}},
    "benchmark": {
        "radius": 1.0,
        "thickness": 0.01,
        "length": 4.0,
        "force": 1.0,
        "young": 100.0,
        "poisson": 0.5,
    },
    "gamma": [1.0, 1.0],
    "gamma_mode": "fixed",
    "gamma_bounds": [[0.0, 1000.0], [0.0, 1000.0]],
    "gamma_start": [1.0, 1.0],
    "gamma_grid": {"gamma1": [0.0, 0.1, 1.0, 10.0], "gamma2": [1.0]},
    "max_evaluations": 60,
    "reconstruction": {
        "strategy": "chord_normal",
        "tol_root": 1e-10,
        "max_iter": 50,
        "curvature_tol": 0.0,
        "grid_degree": 4,
    },
    "vtk": False,
    "output_dir": "results",
    "seed": 0,
}

_SCALARS: Final[dict[str, type | tuple[type, ...]]] = {
    "kind": str,
    "bulk_order": int,
    "surface_order": int,
    "source": str,
    "gamma_mode": str,
    "max_evaluations": int,
    "quadrature_degree": int,
    "vtk": bool,
    "output_dir": str,
    "seed": int,
}
_CHOICES: Final[dict[str, tuple[Any, ...]]] = {
    "kind": get_args(StudyKind.__value__),
    "bulk_order": (1, 2),
    "surface_order": (1, 2),
    "source": get_args(Source.__value__),
    "gamma_mode": get_args(GammaMode.__value__),
}


def _is_number(value: Any) -> bool:
    return isinstance(value, int | float) and not isinstance(value, bool)


def _check_keys(section: str, given: Mapping[str, Any], allowed: Mapping[str, Any]) -> None:
    if unknown := sorted(set(given) - set(allowed)):
        raise ConfigError(f"unknown {section} key(s): {', '.join(unknown)}")


def _check_numbers(key: str, value: Any, shape: tuple[int, ...] | None = None) -> None:
    array = np.asarray(value, dtype=object)
    if not all(_is_number(v) for v in array.ravel()) or (
        shape is not None and array.shape != shape
    ):
        raise ConfigError(f"'{key}' must be numbers of shape {shape}, got {value!r}")


def validate_config(raw: Mapping[str, Any]) -> StudyConfig:
    """Merge a raw configuration with the defaults and check the schema.

    Raises:
        ConfigError: unknown keys, wrong types or invalid values.

    """
    if not isinstance(raw, Mapping):
        raise ConfigError("study configuration must be a JSON object")
    _check_keys("configuration", raw, StudyConfig.__annotations__)
    config: dict[str, Any] = deepcopy(dict(DEFAULT_CONFIG)) | deepcopy(dict(raw))
    for section, schema in (
        ("benchmark", BenchmarkSpec.__annotations__),
        ("reconstruction", ReconstructionSpec.__annotations__),
    ):
        if not isinstance(raw.get(section, {}), Mapping):
            raise ConfigError(f"'{section}' must be an object")
        _check_keys(section, raw.get(section, {}), schema)
        config[section] = DEFAULT_CONFIG[section] | dict(raw.get(section, {}))  # type: ignore[literal-required]

    for key, expected in _SCALARS.items():
        if key in config and (
            not isinstance(config[key], expected)
            or (expected is int and isinstance(config[key], bool))
        ):
            raise ConfigError(f"'{key}' must be of type {expected}, got {config[key]!r}")
    for key, choices in _CHOICES.items():
        if config[key] not in choices:
            raise ConfigError(f"'{key}' must be one of {choices}, got {config[key]!r}")

    _check_numbers("box", config["box"], (2, 3))
    if np.any(np.diff(np.asarray(config["box"], float), axis=0) <= 0.0):
        raise ConfigError("'box' needs positive extent in all axes")
    subdivisions: Any = config["subdivisions"]
    if not isinstance(subdivisions, list) or not subdivisions:
        raise ConfigError("'subdivisions' must list [nx, ny, nz] per level")
    _check_numbers("subdivisions", subdivisions, (len(subdivisions), 3))
    if not all(isinstance(n, int) and n >= 1 for row in subdivisions for n in row):
        raise ConfigError("'subdivisions' must be positive integers")
    levels: Any = config["levels"]
    if not (
        isinstance(levels, list)
        and levels
        and all(isinstance(k, int) and 1 <= k <= len(subdivisions) for k in levels)
    ):
        raise ConfigError(f"'levels' must list k in 1..{len(subdivisions)}")
    _check_numbers("gamma", config["gamma"])
    if np.any(np.asarray(config["gamma"], dtype=float) < 0.0):
        raise ConfigError("'gamma' values must be non-negative")
    _check_numbers("gamma_bounds", config["gamma_bounds"], (2, 2))
    _check_numbers("gamma_start", config["gamma_start"], (2,))
    grid: Any = config["gamma_grid"]
    if not isinstance(grid, Mapping) or set(grid) - {"gamma1", "gamma2"}:
        raise ConfigError("'gamma_grid' accepts the keys gamma1 and gamma2")
    for values in grid.values():
        if not isinstance(values, list):
            raise ConfigError("'gamma_grid' values must be lists")
        _check_numbers("gamma_grid", values, (len(values),))

    fld: Any = config["field"]
    if not isinstance(fld, Mapping) or not isinstance(fld.get("type"), str):
        raise ConfigError("'field' needs a plugin 'type'")
    _check_keys("field", fld, {"type": None, "params": None})
    if not isinstance(fld.get("params", {}), Mapping):
        raise ConfigError("'field' params must be an object")
    strategy: Any = config["reconstruction"]["strategy"]
    if strategy not in get_args(Strategy.__value__):
        raise ConfigError(f"unknown search strategy {strategy!r}")
    try:
        BenchmarkConfig.from_spec(config["benchmark"])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid benchmark: {exc}") from exc
    return config  # type: ignore[return-value]


def load_config(path: Path) -> StudyConfig:
    """Read and validate a JSON study configuration.

    Raises:
        ConfigError: file missing, malformed JSON or schema violation.

    """
    try:
        raw: Any = json.loads(path.read_text(encoding="UTF-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from exc
    return validate_config(raw)


def resolve_output_dir(config: StudyConfig, out: Path | None = None) -> Path:
    """Return --out, else $TRACEMEMBRANE_OUT, else the config value, else ./results."""
    if out is not None:
        return out
    if env := os.environ.get(OUTPUT_ENV):
        return Path(env)
    return Path(config.get("output_dir") or "results")


def gamma_for_level(config: StudyConfig, k: int) -> StabilizationParams:
    """Return the fixed stabilization of level k.

    `gamma` is either one value set for all levels or a list indexed by k.
    """
    gamma: Any = config["gamma"]
    if gamma and isinstance(gamma[0], list):
        if k > len(gamma):
            raise ConfigError(f"no gamma given for level k={k}")
        return StabilizationParams.from_values(gamma[k - 1])
    return StabilizationParams.from_values(gamma)


def gamma_grid(config: StudyConfig) -> list[tuple[float, ...]]:
    """Return the sweep points, gamma1 only for linear bulk elements."""
    grid: dict[str, list[float]] = config["gamma_grid"]
    if config["bulk_order"] == 1:
        return [(g,) for g in grid.get("gamma1", [])]
    return list(product(grid.get("gamma1", []), grid.get("gamma2", [])))


def level_mesh(config: StudyConfig, k: int) -> TetMesh:
    """Build the background mesh of refinement level k."""
    return build_background_mesh(
        config["box"], config["subdivisions"][k - 1], config["bulk_order"], k
    )


def reconstruction_settings(config: StudyConfig, source: Source) -> ReconstructionConfig:
    """Return the reconstruction settings for one level-set source."""
    try:
        return ReconstructionConfig.from_spec(
            config["reconstruction"], source, config["surface_order"]
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid reconstruction settings: {exc}") from exc


@dataclass(frozen=True, slots=True, eq=False)
class MembraneLevel:
    """Reconstructed surface and assembled system of one refinement level."""

    k: int
    mesh: TetMesh
    surface: SurfaceMesh
    active: ActiveMesh
    system: MembraneSystem
    bench: BenchmarkConfig
    quadrature_degree: int | None = None

    def solve(self, stab: StabilizationParams) -> DisplacementField:
        """Solve with the given ghost penalty factors."""
        return apply_constraints_and_solve(self.system.with_stabilization(stab))

    def error(self, gamma: tuple[float, ...]) -> float:
        """Return eps_sigma for (gamma,) or (gamma1, gamma2)."""
        displacement = self.solve(StabilizationParams.from_values(gamma))
        return stress_error(
            self.surface, displacement, self.bench, self.quadrature_degree
        )


def prepare_level(
    config: StudyConfig, k: int, level_set: BaseField, log: PrefixAdapter
) -> MembraneLevel:
    """Reconstruct Gamma_h and assemble the membrane system once per level."""
    mesh: TetMesh = level_mesh(config, k)
    log.info("mesh N=%i, %i elements, h=%.4f", mesh.n_nodes, mesh.n_elements, mesh.h)
    surface: SurfaceMesh = reconstruct_surface(
        mesh, level_set, reconstruction_settings(config, config["source"])
    )
    active: ActiveMesh = active_submesh(mesh, surface.cut_flags)
    bench: BenchmarkConfig = BenchmarkConfig.from_spec(config["benchmark"])
    degree: int | None = config.get("quadrature_degree")
    system: MembraneSystem = assemble_system(
        active,
        surface,
        bench.material,
        StabilizationParams(),
        benchmark_load(bench),
        degree,
    )
    constrained: MembraneSystem = replace(
        system, constraints=cylinder_constraints(active, bench.length)
    )
    log.info(
        "%i active elements, %i faces, %i DOFs",
        len(active.elements),
        len(active.faces),
        active.n_dof,
    )
    return MembraneLevel(k, mesh, surface, active, constrained, bench, degree)


def _table_name(config: StudyConfig, stem: str) -> str:
    return f"{stem}_p{config['bulk_order']}p{config['surface_order']}"


def _run_reconstruct(
    config: StudyConfig, level_set: BaseField, out_dir: Path, report: StudyReport
) -> None:
    for k in config["levels"]:
        log = PrefixAdapter(_LOGGER, {"prefix": f"k={k}:"})
        mesh: TetMesh = level_mesh(config, k)
        row = StudyRow(k, mesh.h, mesh.n_nodes, 0)
        for source in ("exact", "discrete"):
            surface: SurfaceMesh = reconstruct_surface(
                mesh, level_set, reconstruction_settings(config, source)
            )
            geom, normal = geometric_and_normal_error(
                surface, level_set, config.get("quadrature_degree")
            )
            row.errors[f"eps_geom_{source}"] = geom
            row.errors[f"eps_normal_{source}"] = normal
            row.n_cut = int(surface.cut_flags.sum())
            log.info("%s: eps_geom=%.4e, eps_n=%.4e", source, geom, normal)
            if config["vtk"]:
                report.files.append(
                    export_outputs(out_dir / f"surface_k{k}_{source}.vtk", surface, mesh)
                )
        report.rows.append(row)

    for stem, prefix in (("geometric_errors", "eps_geom"), ("normal_errors", "eps_normal")):
        exact, discrete = f"{prefix}_exact", f"{prefix}_discrete"
        report.files.append(
            write_table(
                out_dir / f"{stem}.csv",
                ("k", "h", exact, "rate", discrete, "rate"),
                (
                    (row.k, row.h, row.errors[exact], r_e, row.errors[discrete], r_d)
                    for row, r_e, r_d in zip(
                        report.rows, report.rates(exact), report.rates(discrete), strict=True
                    )
                ),
            )
        )


def _stress_table(
    config: StudyConfig, out_dir: Path, report: StudyReport, stem: str
) -> Path:
    rates: list[float | None] = report.rates("eps_sigma")
    path: Path = out_dir / f"{_table_name(config, stem)}.csv"
    if config["bulk_order"] == 1:
        return write_table(
            path,
            ("k", "h", "eps_sigma", "rate", "gamma"),
            (
                (row.k, row.h, row.errors["eps_sigma"], rate, row.gamma[0])
                for row, rate in zip(report.rows, rates, strict=True)
            ),
        )
    return write_table(
        path,
        ("k", "h", "eps_sigma", "gamma1", "gamma2", "rate"),
        (
            (row.k, row.h, row.errors["eps_sigma"], *row.gamma[:2], rate)
            for row, rate in zip(report.rows, rates, strict=True)
        ),
    )


def _export_solution(
    out_dir: Path, level: MembraneLevel, displacement: DisplacementField
) -> list[Path]:
    return [
        export_outputs(
            out_dir / f"membrane_k{level.k}.vtk",
            level.surface,
            level.mesh,
            displacement,
            pointwise_stress_error(level.surface, displacement, level.bench),
        ),
        export_background(out_dir / f"active_k{level.k}.vtk", level.active, displacement),
    ]


def _run_membrane(
    config: StudyConfig, level_set: BaseField, out_dir: Path, report: StudyReport
) -> None:
    optimize: bool = config["gamma_mode"] == "optimize" or config["kind"] == "gamma-optimize"
    for k in config["levels"]:
        log = PrefixAdapter(_LOGGER, {"prefix": f"k={k}:"})
        level: MembraneLevel = prepare_level(config, k, level_set, log)
        if optimize:
            result = optimize_gamma(
                level.error,
                "golden1d" if config["bulk_order"] == 1 else "simplex2d",
                config["gamma_bounds"],
                config["gamma_start"],
                config["max_evaluations"],
            )
            stab: StabilizationParams = StabilizationParams.from_values(result.gamma)
        else:
            stab = gamma_for_level(config, k)
        displacement: DisplacementField = level.solve(stab)
        eps: float = stress_error(
            level.surface, displacement, level.bench, level.quadrature_degree
        )
        gamma: tuple[float, ...] = stab.as_tuple(config["bulk_order"])
        log.info("gamma=%s: eps_sigma=%.4e", gamma, eps)
        report.rows.append(
            StudyRow(
                k,
                level.mesh.h,
                level.mesh.n_nodes,
                len(level.active.elements),
                {"eps_sigma": eps},
                gamma,
            )
        )
        if config["vtk"]:
            report.files.extend(_export_solution(out_dir, level, displacement))
    stem: str = "solution" if config["kind"] == "solve" else "stress"
    report.files.append(_stress_table(config, out_dir, report, stem))


def _run_sweep(
    config: StudyConfig, level_set: BaseField, out_dir: Path, report: StudyReport
) -> None:
    grid: list[tuple[float, ...]] = gamma_grid(config)
    if not grid:
        raise ConfigError("'gamma_grid' holds no sweep points")
    columns: tuple[str, ...] = ("gamma1",) if config["bulk_order"] == 1 else ("gamma1", "gamma2")
    for k in config["levels"]:
        log = PrefixAdapter(_LOGGER, {"prefix": f"k={k}:"})
        level: MembraneLevel = prepare_level(config, k, level_set, log)
        values = asyncio.run(sweep_gamma(level.error, grid))
        best_gamma, best_value = min(values, key=lambda item: item[1])
        log.info("sweep over %i points, best gamma=%s: %.4e", len(values), best_gamma, best_value)
        report.rows.append(
            StudyRow(
                k,
                level.mesh.h,
                level.mesh.n_nodes,
                len(level.active.elements),
                {"eps_sigma": best_value},
                best_gamma,
            )
        )
        report.files.append(
            write_table(
                out_dir / f"{_table_name(config, 'gamma_sweep')}_k{k}.csv",
                (*columns, "eps_sigma"),
                ((*gamma, None if np.isinf(value) else value) for gamma, value in values),
            )
        )


def run_study(config: StudyConfig, out_dir: Path | None = None) -> StudyReport:
    """Run the study over all configured levels and write its tables.

    Raises:
        ConfigError: invalid configuration.
        TraceMembraneError: pipeline failure, with element ids where known.

    """
    settings: StudyConfig = validate_config(config)
    target: Path = resolve_output_dir(settings, out_dir)
    level_set: BaseField = make_field(settings["field"])
    report = StudyReport(
        settings["kind"],
        settings["bulk_order"],
        settings["surface_order"],
        settings["source"],
    )
    _LOGGER.info(
        "%s study, P%i/P%i, source %s, levels %s, seed %i -> %s",
        settings["kind"],
        settings["bulk_order"],
        settings["surface_order"],
        settings["source"],
        settings["levels"],
        settings["seed"],
        target,
    )
    if settings["kind"] == "reconstruct":
        _run_reconstruct(settings, level_set, target, report)
    elif settings["kind"] == "gamma-sweep":
        _run_sweep(settings, level_set, target, report)
    else:
        _run_membrane(settings, level_set, target, report)
    return report

