"""
Loading run configs from TOML or JSON files.
"""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from ..exceptions import ConfigError
from ..schemas.training import RunConfig
from .serialization import read_json

M = TypeVar("M", bound=BaseModel)


def read_config_file(path: str | Path) -> Dict[str, Any]:
    """Parse by suffix: ``.toml`` with tomllib, anything else as JSON."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    if path.suffix.lower() == ".toml":
        try:
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from None
    data = read_json(path)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return data


def validate(model: Type[M], data: Dict[str, Any]) -> M:
    """Validate ``data`` into ``model``, reporting pydantic errors as ConfigError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        messages = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(messages) from None


def load_run_config(path: Optional[str | Path]) -> RunConfig:
    return validate(RunConfig, read_config_file(path)) if path else RunConfig()


def override(config: M, /, **changes: Any) -> M:
    """Copy of a frozen config with the non-None ``changes`` applied and revalidated."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return config
    data = config.model_dump(by_alias=False)
    data.update(changes)
    return validate(type(config), data)
