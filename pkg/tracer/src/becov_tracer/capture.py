"""Call-boundary capture: wrapping, value serialization and record emission.

A wrapped unit behaves exactly like the original: same return value, same
exception propagation. Capture only adds a timed observation on the side,
and only while a test is active.
"""

from __future__ import annotations

import functools
import hashlib
import inspect
import os
import platform
import re
import sys
import time
from dataclasses import dataclass
from pathlib import Path

from becov_tracer.canon import canonical_json, hash_observation, scrub_volatiles, source_fingerprint
from becov_tracer.config import FocalConfig, resolve_focal_units

SCHEMA_VERSION = 1
NULL_COMMIT = "0" * 40

_COMMIT_RE = re.compile(r"^[0-9a-f]{40}$")
_SLUG_RE = re.compile(r"[^a-z0-9_-]+")

# Environment variables excluded from the env digest: they vary per run by
# design and would make otherwise identical sessions look different.
_VOLATILE_ENV_PREFIXES = ("BECOV_", "PYTEST_")
_VOLATILE_ENV_NAMES = {"PWD", "OLDPWD", "SHLVL", "_", "TMPDIR", "COLUMNS", "LINES"}


def serialize_value(value, profile, _seen=None):
    """Structured form of an arbitrary runtime value.

    JSON-shaped data passes through; everything else falls back to
    {"__class__": FQN, "__repr__": scrubbed textual representation} so the
    payload stays bounded and serialization can never fail the test.
    """
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        return value
    if _seen is None:
        _seen = set()
    if isinstance(value, (list, tuple, dict)):
        if id(value) in _seen:
            return {"__class__": _fqn_of(value), "__repr__": "<cycle>"}
        _seen = _seen | {id(value)}
        if isinstance(value, dict):
            if all(isinstance(k, str) for k in value):
                return {k: serialize_value(v, profile, _seen) for k, v in value.items()}
        else:
            return [serialize_value(v, profile, _seen) for v in value]
    return _fallback_form(value, profile)


def _fqn_of(value) -> str:
    cls = type(value)
    module = getattr(cls, "__module__", "builtins")
    return f"{module}.{cls.__qualname__}"


def _fallback_form(value, profile) -> dict:
    try:
        text = repr(value)
    except Exception:
        text = "<unrepresentable>"
    return {"__class__": _fqn_of(value), "__repr__": scrub_volatiles(text, profile)}


def unit_source_fingerprint(obj) -> str:
    """Fingerprint of a callable's source, falling back to its dotted name."""
    try:
        source = inspect.getsource(obj)
    except (OSError, TypeError):
        source = getattr(obj, "__qualname__", repr(obj))
    return source_fingerprint(source)


def env_digest() -> str:
    """Digest of the non-volatile environment, for run context comparison."""
    lines = sorted(
        f"{k}={v}"
        for k, v in os.environ.items()
        if k not in _VOLATILE_ENV_NAMES
        and not k.startswith(_VOLATILE_ENV_PREFIXES)
    )
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()


def repo_slug(root: Path) -> str:
    slug = _SLUG_RE.sub("-", root.name.lower()).strip("-")
    return slug or "project"


@dataclass
class WrappedUnit:
    unit_id: str
    module: object
    attribute: str
    original: object
    unit_hash: str


class Recorder:
    """Session-scoped capture state: wrappers, counters and pending records."""

    def __init__(self, config: FocalConfig, root: Path, commit_id: str | None):
        self.config = config
        self.profile = config.hash_profile
        self.root = Path(root)
        if not commit_id or not _COMMIT_RE.match(commit_id):
            commit_id = NULL_COMMIT
        self.commit_id = commit_id
        self.run_id = f"{commit_id}-r0"
        self.repo = repo_slug(self.root)
        self.records: list = []
        self.wrapped: list[WrappedUnit] = []
        self._counters: dict = {}
        self._test_id: str | None = None
        self._test_hash: str | None = None
        self._context = {
            "platform": platform.platform(),
            "runtime_version": "cpython-" + ".".join(map(str, sys.version_info[:3])),
            "command": " ".join(sys.argv) or "pytest",
            "env_digest": env_digest(),
        }

    # -- unit wrapping -----------------------------------------------------

    def install(self) -> int:
        """Wrap every resolved focal unit in place; returns the unit count."""
        for unit_id, module, attribute, obj in resolve_focal_units(self.config):
            unit = WrappedUnit(
                unit_id=unit_id,
                module=module,
                attribute=attribute,
                original=obj,
                unit_hash=unit_source_fingerprint(obj),
            )
            setattr(module, attribute, self._make_wrapper(unit))
            self.wrapped.append(unit)
        return len(self.wrapped)

    def uninstall(self) -> None:
        """Restore every wrapped attribute to the original callable."""
        for unit in reversed(self.wrapped):
            setattr(unit.module, unit.attribute, unit.original)
        self.wrapped.clear()

    def _make_wrapper(self, unit: WrappedUnit):
        @functools.wraps(unit.original)
        def wrapper(*args, **kwargs):
            if self._test_id is None:
                return unit.original(*args, **kwargs)
            start = time.perf_counter_ns()
            try:
                result = unit.original(*args, **kwargs)
            except BaseException as exc:
                latency = time.perf_counter_ns() - start
                self._record(
                    unit, args, kwargs, "exception",
                    {"type": type(exc).__name__, "message": str(exc)}, latency,
                )
                raise
            latency = time.perf_counter_ns() - start
            self._record(
                unit, args, kwargs, "return",
                serialize_value(result, self.profile), latency,
            )
            return result

        return wrapper

    # -- per-test lifecycle --------------------------------------------------

    def begin_test(self, test_id: str, test_source: str) -> None:
        self._test_id = test_id
        self._test_hash = source_fingerprint(test_source)

    def end_test(self) -> None:
        self._test_id = None
        self._test_hash = None

    def _record(self, unit, args, kwargs, kind, response_value, latency_ns) -> None:
        stimulus = [serialize_value(a, self.profile) for a in args]
        if kwargs:
            stimulus.append(
                {"__kwargs__": {
                    k: serialize_value(v, self.profile) for k, v in kwargs.items()
                }}
            )
        key = (self._test_id, unit.unit_id)
        index = self._counters.get(key, 0)
        self._counters[key] = index + 1
        digest, truncated = hash_observation(
            stimulus, kind, response_value, latency_ns, self.profile
        )
        self.records.append(
            {
                "schema_version": SCHEMA_VERSION,
                "run_id": self.run_id,
                "repo": self.repo,
                "commit": {
                    "commit_id": self.commit_id,
                    "commit_time": 0,
                    "ordinal": 0,
                },
                "test_id": self._test_id,
                "test_hash": self._test_hash,
                "unit_id": unit.unit_id,
                "unit_hash": unit.unit_hash,
                "invocation_index": index,
                "obs": {
                    "stimulus": stimulus,
                    "response_kind": kind,
                    "response_value": response_value,
                    "latency_ns": latency_ns,
                },
                "obs_hash": digest,
                "context": dict(self._context),
                "truncated": truncated,
            }
        )

    # -- emission -------------------------------------------------------------

    def emit_run_file(self, out_path) -> int:
        """Write one wire-format line per record, atomically; returns count."""
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        tmp = out_path.with_name(out_path.name + ".tmp")
        with open(tmp, "w", encoding="utf-8") as fh:
            for record in self.records:
                fh.write(canonical_json(record))
                fh.write("\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, out_path)
        return len(self.records)
