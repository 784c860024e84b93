"""Project configuration (becov.json) and focal-unit resolution."""

from __future__ import annotations

import fnmatch
import importlib
import json
import pkgutil
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from becov_tracer.canon import BUILTIN_PROFILES, HashProfile

CONFIG_NAME = "becov.json"

_KNOWN_KEYS = {"include_patterns", "exclude_patterns", "profile", "max_value_bytes"}

_WILDCARDS = set("*?[")


class ConfigError(ValueError):
    """becov.json is missing, malformed or inconsistent."""


@dataclass(frozen=True)
class FocalConfig:
    """Which fully qualified names to observe, and under which hash profile."""

    include_patterns: tuple
    exclude_patterns: tuple = ()
    profile: str = "default"
    max_value_bytes: int = 65536
    hash_profile: HashProfile = field(init=False, compare=False, default=None)

    def __post_init__(self):
        if not self.include_patterns:
            raise ConfigError("include_patterns must be non-empty")
        base = BUILTIN_PROFILES.get(self.profile)
        if base is None:
            raise ConfigError(f"unknown profile {self.profile!r}")
        object.__setattr__(
            self,
            "hash_profile",
            HashProfile(
                name=base.name,
                scrub_rules=base.scrub_rules,
                max_value_bytes=self.max_value_bytes,
                include_latency_in_hash=base.include_latency_in_hash,
            ),
        )


def load_config(path: Path) -> FocalConfig:
    """Parse a becov.json file into a FocalConfig."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}")
    if "include_patterns" not in raw:
        raise ConfigError(f"{path}: include_patterns is required")
    try:
        return FocalConfig(
            include_patterns=tuple(raw["include_patterns"]),
            exclude_patterns=tuple(raw.get("exclude_patterns", ())),
            profile=raw.get("profile", "default"),
            max_value_bytes=raw.get("max_value_bytes", 65536),
        )
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _import_base(pattern: str):
    """Deepest importable module for the literal prefix of a glob pattern.

    Returns None when no prefix imports (the pattern matches nothing).
    """
    parts = pattern.split(".")
    literal = []
    for part in parts:
        if _WILDCARDS & set(part):
            break
        literal.append(part)
    module = None
    for depth in range(len(literal), 0, -1):
        name = ".".join(literal[:depth])
        try:
            module = importlib.import_module(name)
            break
        except ModuleNotFoundError:
            continue
    return module


def _candidate_modules(module) -> list:
    """The module itself plus, for packages, its direct submodules."""
    modules = [module]
    if hasattr(module, "__path__"):
        for info in pkgutil.iter_modules(module.__path__, module.__name__ + "."):
            try:
                modules.append(importlib.import_module(info.name))
            except ModuleNotFoundError as exc:
                raise ImportError(f"cannot import focal module {info.name}") from exc
    return modules


def resolve_focal_units(config: FocalConfig) -> list:
    """Callables whose FQN matches include minus exclude patterns.

    Returns a deterministic list of (unit_id, module, attribute_name, obj)
    sorted by unit_id. An include pattern that matches nothing importable is
    a warning, not an error.
    """
    found = {}
    for pattern in config.include_patterns:
        base = _import_base(pattern)
        if base is None:
            warnings.warn(f"include pattern {pattern!r} matches no importable module")
            continue
        for module in _candidate_modules(base):
            for name, obj in sorted(vars(module).items()):
                if not callable(obj):
                    continue
                if getattr(obj, "__module__", None) != module.__name__:
                    continue
                fqn = f"{module.__name__}.{name}"
                if fnmatch.fnmatchcase(fqn, pattern):
                    found[fqn] = (module, name, obj)
    for pattern in config.exclude_patterns:
        for fqn in [f for f in found if fnmatch.fnmatchcase(f, pattern)]:
            del found[fqn]
    if not found:
        warnings.warn("focal-unit configuration resolved to an empty set")
    return [(fqn, mod, name, obj) for fqn, (mod, name, obj) in sorted(found.items())]
