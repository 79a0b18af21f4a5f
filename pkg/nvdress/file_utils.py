"""Common file handling: delimited tables in, CSV results and YAML sidecars out."""

import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np

from nvdress.errors import ConfigError, OutputExistsError
from nvdress.yaml_utils import dump_yaml_text

SIDECAR_SUFFIX = ".params.yaml"


def ensure_directory(path: Path) -> Path:
    """Ensure a directory exists, creating it if necessary.

    Args:
        path: Directory path to ensure exists

    Returns:
        The path object for chaining
    """
    path.mkdir(parents=True, exist_ok=True)
    return path


def sidecar_path(output_path: Path) -> Path:
    """Parameter-echo sidecar next to ``output_path``."""
    return output_path.with_name(output_path.name + SIDECAR_SUFFIX)


def check_output(output_path: Path, overwrite: bool) -> None:
    """Refuse to clobber an existing result or sidecar unless ``overwrite`` is set.

    Raises:
        OutputExistsError: If either file exists and ``overwrite`` is False
    """
    if overwrite:
        return
    for path in (output_path, sidecar_path(output_path)):
        if path.exists():
            raise OutputExistsError(f"{path} already exists; pass --overwrite to replace it")


def format_value(value: Any) -> str:
    """Render a cell: floats with 9 significant digits, everything else as text."""
    if isinstance(value, bool) or value is None:
        return str(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if value == 0:
            return "0"
        return f"{value:.9g}" if math.isfinite(value) else str(value)
    return str(value)


def render_table(header: Mapping[str, str], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    """CSV text with sorted ``# key=value`` header lines, a column row and data rows."""
    lines = [f"# {key}={header[key]}" for key in sorted(header)]
    lines.append(",".join(columns))
    lines.extend(",".join(format_value(cell) for cell in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_text(output_path: Path, text: str) -> None:
    """Write ``text`` in one go.

    Raises:
        RuntimeError: If writing fails
    """
    ensure_directory(output_path.parent)
    try:
        with output_path.open("w", encoding="utf-8", newline="\n") as f:
            f.write(text)
    except OSError as e:
        raise RuntimeError(f"Failed to write {output_path}: {e}") from e


def write_table(
    output_path: Path, header: Mapping[str, str], columns: Sequence[str], rows: Iterable[Sequence[Any]]
) -> None:
    write_text(output_path, render_table(header, columns, rows))


def write_spectrum(output_path: Path, header: Mapping[str, str], axis: np.ndarray, intensity: np.ndarray) -> None:
    """Two-column ``frequency_mhz,intensity`` CSV."""
    write_table(output_path, header, ("frequency_mhz", "intensity"), zip(axis, intensity, strict=True))


def write_sweep(
    output_path: Path,
    header: Mapping[str, str],
    sweep_column: str,
    sweep_values: Sequence[float],
    members: Sequence[tuple[np.ndarray, np.ndarray]],
) -> None:
    """Long-format sweep CSV: one row per (sweep value, frequency)."""

    def rows():
        for value, (axis, intensity) in zip(sweep_values, members, strict=True):
            for x, y in zip(axis, intensity, strict=True):
                yield (float(value), x, y)

    write_table(output_path, header, (sweep_column, "frequency_mhz", "intensity"), rows())


def write_sidecar(output_path: Path, config: dict[str, Any]) -> Path:
    """Write the re-runnable configuration echo next to ``output_path``."""
    path = sidecar_path(output_path)
    write_text(path, dump_yaml_text(config))
    return path


def read_delimited(file_path: Path) -> tuple[list[str], np.ndarray]:
    """Read a comma-delimited numeric table with a header row.

    Lines starting with ``#`` and blank lines are skipped.

    Returns:
        Column names and a ``(rows, columns)`` float array

    Raises:
        ConfigError: For unreadable files, ragged rows, non-numeric or NaN cells
    """
    try:
        lines = file_path.read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"Failed to read table {file_path}: {e}") from e

    content = [
        (number, line)
        for number, line in enumerate(lines, start=1)
        if line.strip() and not line.lstrip().startswith("#")
    ]
    if len(content) < 2:
        raise ConfigError(f"{file_path}: no header row or no data rows")

    names = [cell.strip() for cell in content[0][1].split(",")]
    try:
        data = np.loadtxt([line for _, line in content[1:]], delimiter=",", ndmin=2)
    except ValueError as e:
        raise ConfigError(f"{file_path}: malformed table ({e})") from e
    if data.shape[1] != len(names):
        raise ConfigError(f"{file_path}: rows have {data.shape[1]} cells but the header names {len(names)}")
    bad = np.argwhere(~np.isfinite(data))
    if bad.size:
        raise ConfigError(f"{file_path}: line {content[1 + bad[0][0]][0]}: NaN or infinite cell")
    return names, data
