"""
Runtime settings and the sectioned key=value case-file reader
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError
from .models import SolverConfig


class Settings(BaseSettings):
    # Logging
    LOG_LEVEL: str = "INFO"

    # Output
    OUTPUT_DIR: str = "output"

    # Poisson solver defaults
    POISSON_TOL: float = 1.0e-10
    POISSON_MAX_ITER: int = 2000

    # Geometry tolerances
    NODE_TIE_EPS: float = 1.0e-12
    SNAP_TOL: float = 1.0e-14

    model_config = SettingsConfigDict(env_file=".env", env_prefix="EBFLOW_", case_sensitive=True)


# Global settings instance
_settings: Optional[Settings] = None


def get_settings() -> Settings:
    """Get settings instance (singleton pattern)"""
    global _settings
    if _settings is None:
        _settings = Settings()
    return _settings


# Sections whose keys live at the top level of SolverConfig
_TOP_LEVEL_SECTIONS = ("run",)
_LIST_SECTIONS = {"probe": "probes", "line": "lines"}

Location = Tuple[str, int]


def parse_value(raw: str) -> Union[str, List[str]]:
    """Split vector values on commas or whitespace; scalars stay strings"""
    text = raw.strip()
    if "," in text:
        return [part.strip() for part in text.split(",") if part.strip()]
    parts = text.split()
    if len(parts) > 1:
        return parts
    return text


def _section_path(section: str, line: int) -> Tuple[Any, ...]:
    if section in _TOP_LEVEL_SECTIONS:
        return ()
    head, _, tail = section.partition(".")
    if head in _LIST_SECTIONS:
        if not tail:
            raise ConfigError(f"section [{section}] needs a name, e.g. [{head}.p1]", section, line)
        return (_LIST_SECTIONS[head], tail)
    return (section,)


def _insert(tree: Dict[str, Any], path: Tuple[str, ...], value: Any) -> None:
    node = tree
    for part in path[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError("key conflicts with a scalar value", ".".join(path))
    node[path[-1]] = value


def read_sections(lines: Iterable[str]) -> Tuple[Dict[str, Any], Dict[Tuple[str, ...], Location]]:
    """Read `[section]` / `key = value` text into a nested dict plus key locations"""
    tree: Dict[str, Any] = {}
    locations: Dict[Tuple[str, ...], Location] = {}
    section = "run"
    prefix: Tuple[Any, ...] = ()
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("["):
            if not text.endswith("]"):
                raise ConfigError("unterminated section header", text, number)
            section = text[1:-1].strip()
            prefix = _section_path(section, number)
            continue
        if "=" not in text:
            raise ConfigError("expected 'key = value'", f"{section}", number)
        key, _, value = text.partition("=")
        key = key.strip()
        if not key:
            raise ConfigError("empty key", section, number)
        path = prefix + tuple(key.split("."))
        _insert(tree, path, parse_value(value))
        locations[path] = (f"{section}.{key}", number)
    return tree, locations


def _listify(tree: Dict[str, Any]) -> Dict[str, Any]:
    """Turn named probe/line sections into lists of dicts carrying their names"""
    result = dict(tree)
    for field in _LIST_SECTIONS.values():
        named = result.get(field)
        if isinstance(named, dict):
            result[field] = [{"name": name, **body} for name, body in named.items()]
    return result


def _locate(loc: Tuple[Any, ...], locations: Dict[Tuple[str, ...], Location],
            list_names: Dict[str, List[str]]) -> Optional[Location]:
    path = list(loc)
    # Pydantic reports list entries by position; map back to section names
    if len(path) >= 2 and path[0] in list_names and isinstance(path[1], int):
        names = list_names[path[0]]
        if path[1] < len(names):
            path[1] = names[path[1]]
    for end in range(len(path), 0, -1):
        candidate = tuple(str(p) for p in path[:end])
        if candidate in locations:
            return locations[candidate]
    return None


def validate_tree(tree: Dict[str, Any], locations: Optional[Dict[Tuple[str, ...], Location]] = None) -> SolverConfig:
    """Validate a nested dict into a SolverConfig, mapping errors to file locations"""
    locations = locations or {}
    list_names = {
        field: list(tree[field].keys())
        for field in _LIST_SECTIONS.values()
        if isinstance(tree.get(field), dict)
    }
    try:
        return SolverConfig(**_listify(tree))
    except ValidationError as exc:
        error = exc.errors()[0]
        loc = tuple(error.get("loc", ()))
        where = _locate(loc, locations, list_names)
        dotted = ".".join(str(p) for p in loc) or "config"
        if where is not None:
            raise ConfigError(error["msg"], where[0], where[1]) from exc
        raise ConfigError(error["msg"], dotted) from exc


def parse_config(path: Union[str, Path]) -> SolverConfig:
    """Read and validate a case file"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        tree, locations = read_sections(handle.readlines())
    return validate_tree(tree, locations)


def apply_overrides(tree: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply dotted `key=value` overrides to a raw config tree"""
    result = _deep_copy(tree)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value, got '{item}'")
        key, _, value = item.partition("=")
        path = tuple(part for part in key.strip().split(".") if part)
        if not path:
            raise ConfigError(f"empty override key in '{item}'")
        if path[0] in _TOP_LEVEL_SECTIONS:
            path = path[1:]
        _insert(result, path, parse_value(value))
    return result


def _deep_copy(tree: Any) -> Any:
    if isinstance(tree, dict):
        return {k: _deep_copy(v) for k, v in tree.items()}
    if isinstance(tree, list):
        return [_deep_copy(v) for v in tree]
    return tree
