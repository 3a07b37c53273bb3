from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Type

import yaml
from pydantic import Field, ValidationError
from pydantic_settings import BaseSettings, PydanticBaseSettingsSource, SettingsConfigDict

from models.errors import ArtifactIOError, ConfigError
from models.latency import LatencyConfig
from models.predictor import PredictorSettings
from models.scheduler import SchedulerConfig
from models.simulation import CapacityConfig, SimulationConfig
from models.workload import WorkloadConfig

from .config import settings

CONFIG_FILENAME = "config.yaml"


class ExperimentConfig(BaseSettings):
    """Everything one command needs; validated in full before any work starts."""

    model_config = SettingsConfigDict(env_prefix="WISP_", env_nested_delimiter="__", extra="forbid")

    seed: int = Field(default_factory=lambda: settings.DEFAULT_SEED)
    out_dir: str = Field(default_factory=lambda: settings.OUTPUT_DIR)
    run_id: str = "run"
    workload: WorkloadConfig = Field(default_factory=WorkloadConfig)
    predictor: PredictorSettings = Field(default_factory=PredictorSettings)
    latency: LatencyConfig = Field(default_factory=LatencyConfig)
    scheduler: SchedulerConfig = Field(default_factory=SchedulerConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    capacity: CapacityConfig = Field(default_factory=CapacityConfig)

    @classmethod
    def settings_customise_sources(
        cls,
        settings_cls: Type[BaseSettings],
        init_settings: PydanticBaseSettingsSource,
        env_settings: PydanticBaseSettingsSource,
        dotenv_settings: PydanticBaseSettingsSource,
        file_secret_settings: PydanticBaseSettingsSource,
    ) -> Tuple[PydanticBaseSettingsSource, ...]:
        # file and --set values arrive as init kwargs and beat the environment
        return (init_settings, env_settings)


def _dotted(loc: Iterable[Any]) -> str:
    return ".".join(str(part) for part in loc) or "<root>"


def config_error_from(exc: ValidationError) -> ConfigError:
    first = exc.errors()[0]
    field = _dotted(first.get("loc", ()))
    return ConfigError(f"{field}: {first.get('msg', 'invalid value')}", field=field)


def parse_override(item: str) -> Tuple[str, Any]:
    """``a.b.c=value`` with the value parsed as a YAML scalar."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key.path=value", field=item)
    path, raw = item.split("=", 1)
    path = path.strip()
    if not path:
        raise ConfigError(f"override {item!r} has an empty key", field=item)
    try:
        return path, yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value of {path}: {e}", field=path)


def apply_override(tree: Dict[str, Any], path: str, value: Any) -> None:
    node = tree
    parts = path.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"{part} is not a section", field=path)
        node = child
    node[parts[-1]] = value


def read_config_file(path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as e:
        raise ArtifactIOError(f"cannot read config: {e.strerror or e}", path)
    except yaml.YAMLError as e:
        raise ConfigError(f"malformed config file: {e}", field=str(path))
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a mapping", field=str(path))
    return data


def load_experiment_config(
    path=None,
    overrides: Iterable[str] = (),
    seed: Optional[int] = None,
    out: Optional[str] = None,
) -> ExperimentConfig:
    data = read_config_file(path) if path else {}
    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["out_dir"] = out
    for item in overrides:
        apply_override(data, *parse_override(item))
    try:
        return ExperimentConfig(**data)
    except ValidationError as e:
        raise config_error_from(e)


def dump_experiment_config(config: ExperimentConfig, out_dir) -> Path:
    path = Path(out_dir) / CONFIG_FILENAME
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            yaml.safe_dump(config.model_dump(mode="json"), fh, sort_keys=True)
    except OSError as e:
        raise ArtifactIOError(f"cannot write config: {e.strerror or e}", path)
    return path
