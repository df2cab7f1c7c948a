"""Configuration management with Pydantic Settings and flat key-value experiment files"""

from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

from pydantic import BaseModel, Field, ValidationError, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from ehnet.core.exceptions import ConfigurationError
from ehnet.models.schemas import ExperimentConfig

SECTIONS = ("stft", "model", "train", "paths")


class LoggingConfig(BaseModel):
    """Logging configuration"""

    level: str = Field(default="INFO")
    format: str = Field(default="console")  # json or console
    file_path: Optional[str] = Field(default=None)
    max_file_size: int = Field(default=10 * 1024 * 1024)
    backup_count: int = Field(default=5)

    @field_validator("level")
    def validate_log_level(cls, v: str) -> str:
        """Validate log level"""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {valid_levels}")
        return v.upper()

    @field_validator("format")
    def validate_format(cls, v: str) -> str:
        if v not in ("json", "console"):
            raise ValueError("Log format must be 'json' or 'console'")
        return v


class Settings(BaseSettings):
    """Process-level settings read from EHNET_* environment variables"""

    config: Optional[Path] = Field(default=None, description="Fallback experiment config path")
    log_level: str = Field(default="INFO")
    log_format: str = Field(default="console")
    log_file_path: Optional[str] = Field(default=None)
    workers: Optional[int] = Field(default=None, ge=1)

    model_config = SettingsConfigDict(
        env_prefix="EHNET_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @property
    def logging(self) -> LoggingConfig:
        """Get logging configuration"""
        return LoggingConfig(level=self.log_level, format=self.log_format, file_path=self.log_file_path)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance"""
    return Settings()


def reload_settings() -> Settings:
    """Reload settings (clear cache and reload)"""
    get_settings.cache_clear()
    return get_settings()


# ===================== Flat key-value files =====================


def parse_key_values(lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
    """Parse `key = value` lines; `#` starts a comment"""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value'", line=raw.rstrip())
        values[key.strip()] = value.strip()
    return values


def parse_overrides(pairs: Iterable[str]) -> Dict[str, str]:
    """Parse repeated `--set key=value` flags"""
    return parse_key_values(pairs, source="--set")


def _nest(flat: Dict[str, Any]) -> Dict[str, Dict[str, Any]]:
    nested: Dict[str, Dict[str, Any]] = {}
    for key, value in flat.items():
        section, dot, field = key.partition(".")
        if not dot or section not in SECTIONS or not field:
            raise ConfigurationError(f"unknown config key: {key}", allowed_sections=list(SECTIONS))
        nested.setdefault(section, {})[field] = value
    return nested


def _resolve_paths(nested: Dict[str, Dict[str, Any]], base_dir: Path) -> None:
    for field, value in nested.get("paths", {}).items():
        if value in (None, ""):
            continue
        path = Path(value).expanduser()
        nested["paths"][field] = path if path.is_absolute() else (base_dir / path).resolve()


def build_config(
    file_values: Optional[Dict[str, str]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    base_dir: Optional[Path] = None,
) -> ExperimentConfig:
    """Merge file values and overrides (overrides win) into a validated ExperimentConfig

    Relative paths from the file resolve against base_dir, those from overrides against the
    working directory.
    """
    nested = _nest(dict(file_values or {}))
    _resolve_paths(nested, base_dir or Path.cwd())
    extra = _nest({k: v for k, v in (overrides or {}).items() if v is not None})
    _resolve_paths(extra, Path.cwd())
    for section, values in extra.items():
        nested.setdefault(section, {}).update(values)
    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        problems = [f"{'.'.join(map(str, err['loc']))}: {err['msg']}" for err in e.errors()]
        raise ConfigurationError("invalid configuration", problems=problems) from e


def resolve_config_path(explicit: Optional[Path]) -> Optional[Path]:
    """CLI flag first, then EHNET_CONFIG"""
    if explicit is not None:
        return explicit
    return get_settings().config


def load_config(
    path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None
) -> Tuple[ExperimentConfig, Optional[Path]]:
    """Load an experiment config file (if any) and apply overrides"""
    config_path = resolve_config_path(path)
    file_values: Dict[str, str] = {}
    base_dir = Path.cwd()
    if config_path is not None:
        config_path = Path(config_path)
        if not config_path.is_file():
            raise ConfigurationError(f"config file not found: {config_path}")
        file_values = parse_key_values(
            config_path.read_text(encoding="utf-8").splitlines(), source=str(config_path)
        )
        base_dir = config_path.resolve().parent
    return build_config(file_values, overrides, base_dir), config_path


def flatten_config(config: ExperimentConfig) -> List[Tuple[str, Any]]:
    """Dotted key/value pairs, for echoing the effective configuration"""
    pairs: List[Tuple[str, Any]] = []
    for section in SECTIONS:
        for key, value in getattr(config, section).model_dump().items():
            pairs.append((f"{section}.{key}", value))
    return pairs
