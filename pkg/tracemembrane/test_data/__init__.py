"""Reference tables and study configurations for the tracemembrane package.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from collections.abc import Generator
from functools import lru_cache
from importlib import resources
import json
from typing import Any, Final, TypedDict

from tracemembrane import StudyConfig, StudyKind

_STUDY_POSTFIX: Final[str] = "_study.json"


class ReferenceTable(TypedDict):
    """Published error table of the cylinder benchmark."""

    table: str
    kind: StudyKind
    bulk_order: int
    surface_order: int
    columns: dict[str, list[float | None]]
    _comments: list[str]


@lru_cache(maxsize=1)
def reference_tables() -> tuple[ReferenceTable, ...]:
    """Provide all reference tables from the test data directory.

    Returns:
        tuple[ReferenceTable, ...]: stress, geometric and normal error tables
        with their columns over the refinement levels k = 1..4.

    """
    with (
        resources.files(__package__)
        .joinpath("reference_tables.json")
        .open("r", encoding="UTF-8") as f
    ):
        raw_data: Any = json.load(f)
    assert isinstance(raw_data, list)
    for entry in raw_data:
        assert {"table", "kind", "bulk_order", "surface_order", "columns"}.issubset(
            entry.keys()
        )
        assert len({len(col) for col in entry["columns"].values()}) == 1
    return tuple(raw_data)


def reference_table(name: str) -> ReferenceTable:
    """Return the reference table called `name`, e.g. 'stress_p2p2'."""
    for table in reference_tables():
        if table["table"] == name:
            return table
    raise KeyError(f"no reference table '{name}'")


@lru_cache(maxsize=32)
def _study_text(name: str) -> str:
    resource = resources.files(__package__).joinpath(f"{name}{_STUDY_POSTFIX}")
    if not resource.is_file():
        raise KeyError(f"no study configuration '{name}'")
    return resource.read_text(encoding="UTF-8")


def study_names() -> tuple[str, ...]:
    """Return the names of all packaged study configurations."""

    def generate_names() -> Generator[str, Any, None]:
        for resource in resources.files(__package__).iterdir():
            if resource.name.endswith(_STUDY_POSTFIX):
                yield resource.name.removesuffix(_STUDY_POSTFIX)

    return tuple(sorted(generate_names()))


def study_config(name: str) -> StudyConfig:
    """Return a fresh copy of the packaged study configuration `name`."""
    raw: Any = json.loads(_study_text(name))
    assert isinstance(raw, dict)
    return raw
