"""Domain types for observation records and wire-format validation."""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

from becov import normalize
from becov.errors import HashMismatch, SchemaError, VersionError
from becov.normalize import SerializationProfile, canonical_json

SCHEMA_VERSION = 1
WIRE_EXTENSION = ".becov.ndjson"

_SHA1_RE = re.compile(r"^[0-9a-f]{40}$")
_SHA256_RE = re.compile(r"^[0-9a-f]{64}$")
_REPO_RE = re.compile(r"^[a-z0-9_-]+$")

RESPONSE_KINDS = ("return", "exception")


class ChangeCategory(str, Enum):
    STABLE = "Stable"
    BEHAVIOR_PRESERVED = "BehaviorPreserved"
    BEHAVIORAL_DRIFT = "BehavioralDrift"
    INSTABILITY = "Instability"
    CO_EVOLUTION = "CoEvolution"
    TEST_EVOLUTION = "TestEvolution"
    ADDED = "Added"
    REMOVED = "Removed"


@dataclass(frozen=True)
class CommitRef:
    commit_id: str
    commit_time: int
    ordinal: int

    def __post_init__(self):
        if not isinstance(self.commit_id, str) or not _SHA1_RE.match(self.commit_id):
            raise SchemaError(f"commit_id is not a 40-char hex sha: {self.commit_id!r}")
        if not isinstance(self.commit_time, int) or isinstance(self.commit_time, bool):
            raise SchemaError("commit_time must be an integer")
        if not isinstance(self.ordinal, int) or isinstance(self.ordinal, bool) or self.ordinal < 0:
            raise SchemaError("ordinal must be a non-negative integer")


@dataclass(frozen=True)
class ContextInfo:
    platform: str
    runtime_version: str
    command: str
    env_digest: str

    def __post_init__(self):
        for name in ("platform", "runtime_version", "command", "env_digest"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise SchemaError(f"context.{name} must be a non-empty string")
        if not _SHA256_RE.match(self.env_digest):
            raise SchemaError("context.env_digest is not a sha256 hex digest")


def _check_structured(value, where: str) -> None:
    if value is None or isinstance(value, (bool, int, float, str)):
        return
    if isinstance(value, list):
        for i, item in enumerate(value):
            _check_structured(item, f"{where}[{i}]")
        return
    if isinstance(value, dict):
        for k, v in value.items():
            if not isinstance(k, str):
                raise SchemaError(f"{where}: map key {k!r} is not a string")
            _check_structured(v, f"{where}.{k}")
        return
    raise SchemaError(f"{where}: unsupported value type {type(value).__name__}")


@dataclass(frozen=True)
class Observation:
    """Stimulus and response of one captured invocation."""

    stimulus: tuple
    response_kind: str
    response_value: object
    latency_ns: int

    def __post_init__(self):
        object.__setattr__(self, "stimulus", tuple(self.stimulus))
        for i, v in enumerate(self.stimulus):
            _check_structured(v, f"stimulus[{i}]")
        if self.response_kind not in RESPONSE_KINDS:
            raise SchemaError(f"response_kind must be one of {RESPONSE_KINDS}")
        _check_structured(self.response_value, "response_value")
        if self.response_kind == "exception":
            rv = self.response_value
            if not isinstance(rv, dict) or set(rv) != {"type", "message"}:
                raise SchemaError(
                    "exception response_value must be a map with keys {type, message}"
                )
        if not isinstance(self.latency_ns, int) or isinstance(self.latency_ns, bool) or self.latency_ns < 0:
            raise SchemaError("latency_ns must be a non-negative integer")

    def to_wire(self) -> dict:
        return {
            "stimulus": list(self.stimulus),
            "response_kind": self.response_kind,
            "response_value": self.response_value,
            "latency_ns": self.latency_ns,
        }


@dataclass(frozen=True)
class ObservationRecord:
    """One captured invocation keyed by commit, test and unit."""

    schema_version: int
    run_id: str
    repo: str
    commit: CommitRef
    test_id: str
    test_hash: str
    unit_id: str
    unit_hash: str
    invocation_index: int
    obs: Observation
    obs_hash: str
    context: ContextInfo
    truncated: bool

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise VersionError(f"unsupported schema_version {self.schema_version!r}")
        if not isinstance(self.run_id, str) or not self.run_id:
            raise SchemaError("run_id must be a non-empty string")
        if not isinstance(self.repo, str) or not _REPO_RE.match(self.repo):
            raise SchemaError(f"repo is not a valid slug: {self.repo!r}")
        if not isinstance(self.test_id, str) or not self.test_id or "\n" in self.test_id:
            raise SchemaError("test_id must be non-empty without newlines")
        if (
            not isinstance(self.unit_id, str)
            or not self.unit_id
            or "\n" in self.unit_id
            or "." not in self.unit_id
        ):
            raise SchemaError("unit_id must be a dotted fully qualified name")
        for name in ("test_hash", "unit_hash", "obs_hash"):
            v = getattr(self, name)
            if not isinstance(v, str) or not _SHA256_RE.match(v):
                raise SchemaError(f"{name} is not a sha256 hex digest")
        if (
            not isinstance(self.invocation_index, int)
            or isinstance(self.invocation_index, bool)
            or self.invocation_index < 0
        ):
            raise SchemaError("invocation_index must be a non-negative integer")
        if not isinstance(self.truncated, bool):
            raise SchemaError("truncated must be a boolean")

    def to_wire(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "run_id": self.run_id,
            "repo": self.repo,
            "commit": {
                "commit_id": self.commit.commit_id,
                "commit_time": self.commit.commit_time,
                "ordinal": self.commit.ordinal,
            },
            "test_id": self.test_id,
            "test_hash": self.test_hash,
            "unit_id": self.unit_id,
            "unit_hash": self.unit_hash,
            "invocation_index": self.invocation_index,
            "obs": self.obs.to_wire(),
            "obs_hash": self.obs_hash,
            "context": {
                "platform": self.context.platform,
                "runtime_version": self.context.runtime_version,
                "command": self.context.command,
                "env_digest": self.context.env_digest,
            },
            "truncated": self.truncated,
        }


def serialize_record(record: ObservationRecord) -> str:
    """One deterministic wire-format line (no trailing newline)."""
    return canonical_json(record.to_wire())


_RECORD_FIELDS = {
    "schema_version",
    "run_id",
    "repo",
    "commit",
    "test_id",
    "test_hash",
    "unit_id",
    "unit_hash",
    "invocation_index",
    "obs",
    "obs_hash",
    "context",
    "truncated",
}
_COMMIT_FIELDS = {"commit_id", "commit_time", "ordinal"}
_OBS_FIELDS = {"stimulus", "response_kind", "response_value", "latency_ns"}
_CONTEXT_FIELDS = {"platform", "runtime_version", "command", "env_digest"}


def _exact_fields(raw: dict, expected: set, where: str) -> None:
    if not isinstance(raw, dict):
        raise SchemaError(f"{where} must be a map")
    got = set(raw)
    missing = expected - got
    extra = got - expected
    if missing:
        raise SchemaError(f"{where}: missing field(s) {sorted(missing)}")
    if extra:
        raise SchemaError(f"{where}: unexpected field(s) {sorted(extra)}")


def record_from_wire(raw: dict, verify_hash: bool = False,
                     profile: SerializationProfile | None = None) -> ObservationRecord:
    """Build a record from a parsed wire-format map, checking all invariants.

    With verify_hash, the stated obs_hash is recomputed under the given
    profile and must match.
    """
    _exact_fields(raw, _RECORD_FIELDS, "record")
    _exact_fields(raw["commit"], _COMMIT_FIELDS, "commit")
    _exact_fields(raw["obs"], _OBS_FIELDS, "obs")
    _exact_fields(raw["context"], _CONTEXT_FIELDS, "context")

    sv = raw["schema_version"]
    if not isinstance(sv, int) or isinstance(sv, bool):
        raise SchemaError("schema_version must be an integer")
    if sv != SCHEMA_VERSION:
        raise VersionError(f"unsupported schema_version {sv}")

    obs_raw = raw["obs"]
    if not isinstance(obs_raw["stimulus"], list):
        raise SchemaError("obs.stimulus must be a list")
    obs = Observation(
        stimulus=tuple(obs_raw["stimulus"]),
        response_kind=obs_raw["response_kind"],
        response_value=obs_raw["response_value"],
        latency_ns=obs_raw["latency_ns"],
    )
    record = ObservationRecord(
        schema_version=sv,
        run_id=raw["run_id"],
        repo=raw["repo"],
        commit=CommitRef(**raw["commit"]),
        test_id=raw["test_id"],
        test_hash=raw["test_hash"],
        unit_id=raw["unit_id"],
        unit_hash=raw["unit_hash"],
        invocation_index=raw["invocation_index"],
        obs=obs,
        obs_hash=raw["obs_hash"],
        context=ContextInfo(**raw["context"]),
        truncated=raw["truncated"],
    )
    if verify_hash:
        computed = normalize.obs_hash(obs, profile or normalize.DEFAULT_PROFILE)
        if computed != record.obs_hash:
            raise HashMismatch(
                f"stated obs_hash {record.obs_hash} != recomputed {computed}"
            )
    return record


def validate_record(raw: dict,
                    profile: SerializationProfile | None = None) -> ObservationRecord:
    """Validate one parsed wire-format record, including obs_hash recomputation."""
    return record_from_wire(raw, verify_hash=True, profile=profile)
