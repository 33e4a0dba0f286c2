"""Utility/Support functions for tracemembrane.

Project: tracemembrane
License: Apache-2.0, http://www.apache.org/licenses/
"""

from functools import cache
import importlib
import logging
import pkgutil
from types import ModuleType
from typing import Any, Final

from tracemembrane import ConfigError, FieldSpec
import tracemembrane.fields
from tracemembrane.levelset import BaseField

_LOGGER: Final[logging.Logger] = logging.getLogger(__name__)
_MODULE_POSTFIX: Final[str] = "_field"


@cache
def load_field_plugins() -> set[ModuleType]:
    """Discover and load all available level-set field plugin modules.

    This function scans the 'tracemembrane/fields' directory for all Python
    modules ending with "_field" and returns the imported modules whose
    `Field` class is a subclass of BaseField. Modules that fail to import
    or lack such a class are skipped with a warning.

    Returns:
        set[ModuleType]: A set of imported field plugin modules.

    """

    modules: set[ModuleType] = set()
    for _, module_name, _ in pkgutil.iter_modules(tracemembrane.fields.__path__):
        if not module_name.endswith(_MODULE_POSTFIX):
            continue

        try:
            module: ModuleType = importlib.import_module(
                f"tracemembrane.fields.{module_name}"
            )
        except ImportError as exc:
            _LOGGER.warning("skipping field plugin %s: %s", module_name, exc)
            continue
        cls: Any = getattr(module, "Field", None)
        if not (isinstance(cls, type) and issubclass(cls, BaseField)):
            _LOGGER.warning("skipping field plugin %s: no BaseField class", module_name)
            continue

        modules.add(module)

    return modules


def field_names() -> list[str]:
    """Return the sorted plugin names of all available fields."""
    return sorted(module.Field.field_id() for module in load_field_plugins())


def field_cls(name: str) -> type[BaseField] | None:
    """Return the field class that is defined by the name argument.

    Args:
        name (str): The name of the field type, with or without "_field" postfix

    Returns:
        type[BaseField] | None: The field class if found, None otherwise.

    """
    module_name: str = name if name.endswith(_MODULE_POSTFIX) else name + _MODULE_POSTFIX
    try:
        module: ModuleType = importlib.import_module(
            f"tracemembrane.fields.{module_name}"
        )
    except ModuleNotFoundError:
        return None

    cls: Any = getattr(module, "Field", None)
    if not (isinstance(cls, type) and issubclass(cls, BaseField)):
        return None

    return cls


def make_field(spec: FieldSpec, logger_name: str = "") -> BaseField:
    """Instantiate the level-set field selected by a configuration entry.

    Raises:
        ConfigError: unknown field type or invalid parameters.

    """
    name: str = spec.get("type", "")
    cls: type[BaseField] | None = field_cls(name)
    if cls is None:
        raise ConfigError(
            f"unknown field type '{name}', available: {', '.join(field_names())}"
        )
    try:
        return cls(logger_name=logger_name, **spec.get("params", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameters for field '{name}': {exc}") from exc
