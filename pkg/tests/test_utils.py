"""Test the tracemembrane library utility functions."""

from collections.abc import Generator
from types import ModuleType
from typing import Any

import pytest

from tracemembrane import ConfigError, FieldSpec
from tracemembrane.levelset import BaseField
from tracemembrane.utils import field_cls, field_names, load_field_plugins, make_field


def test_field_names() -> None:
    """All packaged fields are discovered."""
    assert field_names() == ["cylinder", "plane", "quadric_cylinder", "sphere"]


def test_field_cls(plugin_fixture: ModuleType) -> None:
    """Test that a field class is correctly returned from its name."""
    # with and without the _field postfix
    module_name: str = getattr(plugin_fixture, "__name__", "").rsplit(".", 1)[-1]
    assert field_cls(module_name) == plugin_fixture.Field
    assert field_cls(module_name.removesuffix("_field")) == plugin_fixture.Field


@pytest.mark.parametrize("name", ["unavailable_field", "torus", ""])
def test_field_cls_none(name: str) -> None:
    """Test that a field class is None when name is not correct."""
    assert field_cls(name) is None


@pytest.mark.parametrize(
    "invalid_field_class", [object(), object], ids=["not-a-type", "not-subclass"]
)
def test_field_cls_invalid_field_class(
    monkeypatch: pytest.MonkeyPatch,
    invalid_field_class: object,
) -> None:
    """Test that field_cls returns None if module.Field is not a BaseField subclass."""
    test_module = ModuleType("tracemembrane.fields.invalid_field")
    setattr(test_module, "Field", invalid_field_class)

    def import_module(name: str) -> ModuleType:
        assert name == "tracemembrane.fields.invalid_field"
        return test_module

    monkeypatch.setattr("tracemembrane.utils.importlib.import_module", import_module)

    assert field_cls("invalid") is None


@pytest.mark.parametrize(
    ("modules"),
    [
        [  # Case 1: module name does not end with "_field" -> skipped
            ("not_a_plugin", None),
            ("valid_field", "valid"),
        ],
        [  # Case 2: Field is not subclass of BaseField -> skipped
            ("invalid_field", "invalid"),
            ("valid_field", "valid"),
        ],
        [  # Case 3: module without Field class -> skipped
            ("empty_field", "empty"),
            ("valid_field", "valid"),
        ],
        [  # Case 4: module raises on import -> skipped
            ("broken_field", "broken"),
            ("valid_field", "valid"),
        ],
    ],
    ids=["name-not-matching", "not-subclass", "no-field-class", "import-error"],
)
def test_load_field_plugins_continue_paths(
    monkeypatch: pytest.MonkeyPatch,
    caplog: pytest.LogCaptureFixture,
    modules: list[tuple[str, str | None]],
) -> None:
    """Exercise continue paths in load_field_plugins."""

    def fake_iter_modules(_) -> Generator[tuple[None, str, None], Any, None]:
        for name, _ in modules:
            yield None, name, None

    fake_modules: dict[str, ModuleType] = {}
    for name, kind in modules:
        module = ModuleType(f"tracemembrane.fields.{name}")
        if kind in ("valid", "invalid"):
            base: type[BaseField | object] = BaseField if kind == "valid" else object
            setattr(module, "Field", type("Field", (base,), {}))
        fake_modules[name] = module

    def fake_import(name: str) -> ModuleType:
        short: str = name.rpartition(".")[2]
        if short == "broken_field":
            raise ImportError("No module named 'scipy.special.missing'")
        return fake_modules[short]

    monkeypatch.setattr("pkgutil.iter_modules", fake_iter_modules)
    monkeypatch.setattr("importlib.import_module", fake_import)

    result: set[ModuleType] = load_field_plugins.__wrapped__()
    assert len(result) == 1
    for module in result:
        assert issubclass(module.Field, BaseField)
    if modules[0][1] == "broken":
        assert "skipping field plugin broken_field: No module named" in caplog.text
    if modules[0][1] == "empty":
        assert "skipping field plugin empty_field: no BaseField class" in caplog.text


def test_make_field() -> None:
    """Configuration entries select the plugin and pass its parameters."""
    sphere: BaseField = make_field(
        {"type": "sphere", "params": {"radius": 2.0, "center": [1.0, 0.0, 0.0]}}
    )
    assert sphere.field_id() == "sphere"
    assert sphere.value([1.0, 0.0, 3.0]) == pytest.approx(1.0)
    assert make_field({"type": "plane_field"}).field_id() == "plane"


@pytest.mark.parametrize(
    ("spec", "match"),
    [
        ({"type": "torus"}, "unknown field type 'torus'"),
        ({}, "unknown field type ''"),
        ({"type": "sphere", "params": {"radius": -1.0}}, "invalid parameters"),
        ({"type": "cylinder", "params": {"height": 2.0}}, "invalid parameters"),
    ],
    ids=["unknown", "missing", "bad-value", "bad-keyword"],
)
def test_make_field_invalid(spec: FieldSpec, match: str) -> None:
    """Unknown types and bad parameters raise ConfigError."""
    with pytest.raises(ConfigError, match=match):
        make_field(spec)
