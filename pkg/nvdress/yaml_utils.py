"""YAML loading and dumping with one consistent format for configs and sidecars."""

import io
from pathlib import Path
from typing import Any

from ruamel.yaml import YAML
from ruamel.yaml.error import MarkedYAMLError, YAMLError

from nvdress.errors import ConfigError


def create_yaml_loader() -> YAML:
    """Create a YAML instance configured for safe loading.

    Returns:
        YAML instance configured for safe loading
    """
    return YAML(typ="safe")


def create_yaml_dumper() -> YAML:
    """Create a YAML instance configured for output.

    Block style, 120-character lines and sorted keys, so dumping the same
    data twice gives the same bytes.

    Returns:
        YAML instance configured for writing
    """
    yaml = YAML(typ="safe", pure=True)
    yaml.default_flow_style = False
    yaml.width = 120
    return yaml


def _describe(error: YAMLError, source: str) -> str:
    if isinstance(error, MarkedYAMLError) and error.problem_mark is not None:
        mark = error.problem_mark
        return f"{source}: line {mark.line + 1}, column {mark.column + 1}: {error.problem}"
    return f"{source}: {error}"


def load_yaml_text(text: str, source: str = "<string>") -> Any:
    """Parse YAML text.

    Raises:
        ConfigError: With the line and column of a syntax error
    """
    try:
        return create_yaml_loader().load(text)
    except YAMLError as e:
        raise ConfigError(_describe(e, source)) from e


def load_yaml_file(file_path: Path) -> Any:
    """Load a YAML file using safe loading.

    Args:
        file_path: Path to the YAML file

    Returns:
        Parsed YAML content

    Raises:
        ConfigError: If the file is missing, unreadable or malformed
    """
    try:
        text = file_path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Failed to read {file_path}: {e}") from e
    return load_yaml_text(text, str(file_path))


def dump_yaml_text(data: Any) -> str:
    """Dump data to a YAML string."""
    stream = io.StringIO()
    create_yaml_dumper().dump(data, stream)
    return stream.getvalue()

