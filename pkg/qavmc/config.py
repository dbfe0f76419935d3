"""Process-level settings and run-configuration loading."""

import copy
import hashlib
import os
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import yaml
from dotenv import load_dotenv
from pydantic import BaseSettings, ValidationError, validator

from qavmc.exceptions import ConfigValidationError
from qavmc.schemas import RunConfig


class Settings(BaseSettings):
    """Application settings."""

    app_name: str = "qavmc"
    app_version: str = "1.0.0"
    debug: bool = False

    # Logging
    log_level: str = "INFO"
    log_dir: Optional[str] = "logs"

    # Outputs land under output_root unless a run config names its own directory
    output_root: str = "results"

    # Orchestration
    workers: int = 1
    progress: bool = False

    @validator("log_level", pre=True)
    def validate_log_level(cls, v):
        if str(v).upper() not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"Unknown log level: {v}")
        return str(v).upper()

    @validator("workers")
    def validate_workers(cls, v):
        if v < 1:
            raise ValueError("workers must be at least 1")
        return v

    class Config:
        env_prefix = "QAVMC_"
        env_file = ".env"
        case_sensitive = False


def get_settings() -> Settings:
    """Get application settings."""
    # Load environment variables from .env file
    base_dir = Path(__file__).resolve().parent.parent
    load_dotenv(os.path.join(base_dir, ".env"))

    return Settings(
        debug=os.getenv("QAVMC_DEBUG", "false").lower() == "true",
    )


# Global settings instance
settings = get_settings()


def _set_dotted(tree: Dict[str, Any], dotted: str, value: Any) -> None:
    """Assign tree[a][b]... for 'a.b...'; integer parts index into lists."""
    parts = dotted.split(".")
    node: Any = tree
    for depth, part in enumerate(parts):
        last = depth == len(parts) - 1
        if isinstance(node, list):
            try:
                index = int(part)
                node[index]
            except (ValueError, IndexError):
                raise ConfigValidationError(dotted, f"'{part}' is not a valid list index")
            if last:
                node[index] = value
            else:
                node = node[index]
        elif isinstance(node, dict):
            if last:
                node[part] = value
            else:
                node = node.setdefault(part, {})
        else:
            raise ConfigValidationError(dotted, f"cannot descend into a {type(node).__name__}")


def parse_override(text: str) -> Tuple[str, Any]:
    """Split 'dotted.key=value'; the value is parsed as YAML so numbers and lists keep their type."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigValidationError("--set", f"expected dotted.key=value, got {text!r}")
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigValidationError(key.strip(), f"cannot parse override value: {str(e)}")
    text_value = raw.strip()
    if isinstance(value, int) and len(text_value) > 1 and text_value.startswith("0"):
        # bitstrings such as 0110 would otherwise load as octal integers
        value = text_value
    return key.strip(), value


def _resolve_paths(raw: Dict[str, Any], base_dir: Path) -> None:
    """Relative FCIDUMP paths are taken relative to the config file."""

    def resolve(value: Any) -> Any:
        if isinstance(value, str) and not Path(value).is_absolute():
            candidate = base_dir / value
            if candidate.exists() or not Path(value).exists():
                return str(candidate)
        return value

    system = raw.get("system")
    if isinstance(system, dict) and "fcidump" in system:
        system["fcidump"] = resolve(system["fcidump"])
    experiment = raw.get("experiment")
    if isinstance(experiment, dict) and isinstance(experiment.get("fcidumps"), list):
        for entry in experiment["fcidumps"]:
            if isinstance(entry, dict) and "path" in entry:
                entry["path"] = resolve(entry["path"])


def validate_run_config(raw: Dict[str, Any]) -> RunConfig:
    """
    Validate a raw mapping into a RunConfig.

    Raises:
        ConfigValidationError: Naming the first offending field
    """
    try:
        return RunConfig.parse_obj(raw)
    except ValidationError as e:
        first = e.errors()[0]
        field = ".".join(str(part) for part in first["loc"])
        raise ConfigValidationError(field, first["msg"])


def load_run_config(
    path: Union[str, Path],
    seed: Optional[int] = None,
    output_dir: Optional[str] = None,
    overrides: Sequence[str] = (),
) -> RunConfig:
    """
    Load a YAML run configuration and apply command-line overrides.

    Args:
        path: Path to the YAML file
        seed: Master seed from the command line (wins over the file)
        output_dir: Output directory from the command line (wins over the file)
        overrides: 'dotted.key=value' assignments applied before validation

    Returns:
        Validated RunConfig

    Raises:
        ConfigValidationError: For unreadable files or invalid contents
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = yaml.safe_load(f)
    except FileNotFoundError:
        raise ConfigValidationError("config", f"file not found: {path}")
    except yaml.YAMLError as e:
        raise ConfigValidationError("config", f"invalid YAML: {str(e)}")

    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigValidationError("config", "top level must be a mapping")
    raw = copy.deepcopy(raw)

    for text in overrides:
        key, value = parse_override(text)
        _set_dotted(raw, key, value)
    if seed is not None:
        raw["seed"] = seed
    if output_dir is not None:
        raw["output_dir"] = output_dir

    _resolve_paths(raw, path.resolve().parent)
    return validate_run_config(raw)


def config_hash(config: RunConfig) -> str:
    """Short sha256 of the canonical JSON form; the output directory does not enter the hash."""
    canonical = config.json(exclude={"output_dir"}, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def stream_id(path: str) -> int:
    """Random-stream id of a position in the config tree, e.g. 'proposals.1'."""
    return int(hashlib.sha256(path.encode("utf-8")).hexdigest()[:8], 16)


def derive_seed(master_seed: int, path: str) -> int:
    """Integer seed of the stream at a config path."""
    sequence = np.random.SeedSequence(master_seed, spawn_key=(stream_id(path),))
    return int(sequence.generate_state(1, dtype=np.uint32)[0])


def resolve_output_dir(config: RunConfig, command: str) -> Path:
    """<output_dir or settings.output_root>/<command>."""
    root = config.output_dir or settings.output_root
    return Path(root) / command
