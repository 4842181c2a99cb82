import logging
from pathlib import Path
from typing import Any, Dict, Literal, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
CLASSIFIERS = ("rf-family", "rf-package", "1nn", "3nn")
POLICIES = ("reachable-edge", "path-enum")


class ConfigError(ValueError):
    """Raised for unreadable config files or unknown keys."""


class RunConfig(BaseSettings):
    """
    Settings shared by every subcommand.

    Precedence, highest first: explicit overrides (command-line flags), the
    key=value config file, `CHAINDROID_*` environment variables, defaults.
    """

    mode: Literal["family", "package"] = "family"
    catalog: Path = DATA_DIR / "catalog_eval.txt"
    policy: str = "reachable-edge"
    max_depth: int = Field(64, ge=1)
    pca: Optional[int] = Field(None, ge=1)
    classifier: Optional[str] = None
    n_trees: Optional[int] = Field(None, ge=1)
    max_depth_trees: Optional[int] = Field(None, ge=1)
    features_per_split: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    out: Path = Path("out")
    log_level: str = "INFO"
    log_file: Optional[str] = None

    model_config = SettingsConfigDict(env_prefix="CHAINDROID_", extra="ignore")

    @field_validator("catalog")
    @classmethod
    def _catalog_exists(cls, value: Path) -> Path:
        if not value.is_file():
            raise ValueError(f"catalog file not found: {value}")
        return value

    @field_validator("policy")
    @classmethod
    def _known_policy(cls, value: str) -> str:
        kind, _, depth = value.strip().partition(":")
        if kind not in POLICIES or (depth and not (depth.isdigit() and int(depth) >= 1)):
            raise ValueError(f"policy must be one of {POLICIES}, optionally 'path-enum:<depth>' with depth >= 1")
        return value.strip()

    @field_validator("classifier")
    @classmethod
    def _known_classifier(cls, value: Optional[str]) -> Optional[str]:
        if value is not None and value not in CLASSIFIERS:
            raise ValueError(f"classifier must be one of {CLASSIFIERS}")
        return value

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        level = value.strip().upper()
        if not isinstance(logging.getLevelName(level), int):
            raise ValueError(f"unknown log level: {value}")
        return level

    @model_validator(mode="after")
    def _default_classifier(self) -> "RunConfig":
        # rf-family: 51 trees of depth 8; rf-package: 101 trees of depth 64
        if self.classifier is None:
            self.classifier = f"rf-{self.mode}"
        return self


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Parse a key=value config file; keys may carry the CHAINDROID_ prefix and any case."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    values = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            continue
        name = key.strip().lower()
        if name.startswith("chaindroid_"):
            name = name[len("chaindroid_"):]
        if name not in RunConfig.model_fields:
            raise ConfigError(f"{path}: unknown setting {key!r}")
        values[name] = value
    return values


def load_run_config(
    config_file: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None
) -> RunConfig:
    """
    Build a RunConfig from an optional config file and flag overrides.

    Args:
        config_file: key=value file supplying defaults
        overrides: Values from the command line; None entries are ignored

    Returns:
        RunConfig

    Raises:
        ConfigError: Missing config file or unknown keys
        pydantic.ValidationError: Invalid values, naming the offending field
    """
    values: Dict[str, Any] = read_config_file(config_file) if config_file else {}
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig(**values)
