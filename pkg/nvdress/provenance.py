"""Deterministic provenance for output files."""

import hashlib
import json
from typing import Any

from nvdress import __version__


def config_hash(config: dict[str, Any]) -> str:
    """SHA-256 of a configuration dump.

    Keys are sorted and separators fixed so equal configurations hash equally.

    Args:
        config: JSON-serializable configuration

    Returns:
        Hex digest
    """
    config_json = json.dumps(config, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return hashlib.sha256(config_json.encode("utf-8")).hexdigest()


def provenance_header(command: str, config: dict[str, Any], **extra: Any) -> dict[str, str]:
    """Header lines for an output file; no timestamps, so reruns are byte-identical."""
    header = {"command": command, "config_sha256": config_hash(config), "version": __version__}
    header.update({key: str(value) for key, value in extra.items()})
    return header
