"""Run configuration files.

A config fully describes one extraction run. The on-disk format is YAML with
the keys ``architecture``, ``model_path``, ``model``, ``output_db``,
``input_dir``, ``prompt`` and ``modules``; anything else is kept verbatim in
:attr:`ExtractionConfig.extras`.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

REQUIRED_FIELDS = ("architecture", "model_path", "output_db", "input_dir", "prompt", "modules")
KNOWN_FIELDS = REQUIRED_FIELDS + ("model",)


class ConfigError(ValueError):
    """Raised for any problem with a configuration file."""


@dataclass
class ExtractionConfig:
    architecture: str
    model_path: str
    output_db: str
    input_dir: str
    prompt: str
    modules: list[str]
    model_options: list[tuple[str, Any]] = field(default_factory=list)
    extras: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.modules:
            raise ConfigError("modules: at least one layer name is required")
        seen = set()
        dupes = [m for m in self.modules if m in seen or seen.add(m)]
        if dupes:
            raise ConfigError(f"modules: duplicate layer names {sorted(set(dupes))}")
        for name in ("output_db", "input_dir", "architecture", "model_path", "prompt"):
            value = getattr(self, name)
            if not isinstance(value, str) or not value:
                raise ConfigError(f"{name}: must be a non-empty string")

    def options_dict(self) -> dict[str, Any]:
        return dict(self.model_options)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"architecture": self.architecture, "model_path": self.model_path}
        if self.model_options:
            out["model"] = [{k: v} for k, v in self.model_options]
        out.update(
            output_db=self.output_db,
            input_dir=self.input_dir,
            prompt=self.prompt,
            modules=list(self.modules),
        )
        out.update(self.extras)
        return out


def _parse_model_block(block: Any) -> list[tuple[str, Any]]:
    if block is None:
        return []
    if isinstance(block, dict):
        return list(block.items())
    if not isinstance(block, list):
        raise ConfigError("model: expected a list of single-key mappings")
    options = []
    for i, item in enumerate(block):
        if not isinstance(item, dict) or len(item) != 1:
            raise ConfigError(f"model[{i}]: expected a single-key mapping, got {item!r}")
        options.append(next(iter(item.items())))
    return options


def _resolve(path: str, base: Path) -> str:
    if os.path.isabs(path):
        return path
    return os.path.normpath(str(base / path))


def config_from_mapping(data: Any, base_dir: str | Path | None = None) -> ExtractionConfig:
    """Validate a parsed mapping. Relative paths resolve against ``base_dir``."""
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    missing = [k for k in REQUIRED_FIELDS if k not in data or data[k] is None]
    if missing:
        raise ConfigError(f"missing required field(s): {', '.join(missing)}")
    modules = data["modules"]
    if isinstance(modules, str) or not isinstance(modules, list):
        raise ConfigError("modules: expected a list of layer names")
    if not all(isinstance(m, str) and m for m in modules):
        raise ConfigError("modules: every entry must be a non-empty string")
    for key in ("architecture", "model_path", "prompt", "output_db", "input_dir"):
        if not isinstance(data[key], str):
            raise ConfigError(f"{key}: expected a string, got {type(data[key]).__name__}")

    output_db, input_dir = data["output_db"], data["input_dir"]
    if base_dir is not None:
        base = Path(base_dir)
        output_db = _resolve(output_db, base) if output_db else output_db
        input_dir = _resolve(input_dir, base) if input_dir else input_dir

    return ExtractionConfig(
        architecture=data["architecture"],
        model_path=data["model_path"],
        output_db=output_db,
        input_dir=input_dir,
        prompt=data["prompt"],
        modules=list(modules),
        model_options=_parse_model_block(data.get("model")),
        extras={k: v for k, v in data.items() if k not in KNOWN_FIELDS},
    )


def parse_config(path: str | Path) -> ExtractionConfig:
    """Read and validate a YAML config file.

    Raises:
        ConfigError: missing file, malformed YAML, missing required fields,
            duplicate or empty module list.
    """
    path = Path(path)
    try:
        text = path.read_bytes()
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except IsADirectoryError:
        raise ConfigError(f"config path is a directory: {path}") from None
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    return config_from_mapping(data, base_dir=path.resolve().parent)


def dump_config(cfg: ExtractionConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
