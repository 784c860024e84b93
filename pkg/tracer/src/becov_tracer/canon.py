"""Wire-compatible canonicalization and fingerprints, implemented standalone.

The archive engine recomputes every obs_hash at ingest and rejects records
on mismatch, so this module must produce byte-identical canonical text and
digests. It is deliberately a second implementation (stdlib json based, not
shared code) so the golden cross-tests actually prove format compatibility.

Canonical form:
- map keys sorted by Unicode code point, no insignificant whitespace
- integers verbatim, floats as shortest round-trip decimal (lowercase "e")
- NaN / +-Infinity encoded as the JSON strings "NaN" / "Infinity" / "-Infinity"
- strings minimally escaped, non-ASCII kept verbatim (UTF-8 on the wire)
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from typing import Any

MIN_VALUE_BYTES = 1024

DEFAULT_SCRUB_RULES = (
    (r"0x[0-9a-fA-F]{6,16}", "<ADDR>"),
    (
        r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-"
        r"[0-9a-fA-F]{4}-[0-9a-fA-F]{12}",
        "<UUID>",
    ),
    (r"(?:/private)?(?:/var)?/tmp(?=[/\s\"'\\\\]|$)", "<TMP>"),
)


@dataclass(frozen=True)
class HashProfile:
    """Normalization rules the archive applies before fingerprinting."""

    name: str = "default"
    scrub_rules: tuple = DEFAULT_SCRUB_RULES
    max_value_bytes: int = 65536
    include_latency_in_hash: bool = False
    _compiled: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if self.max_value_bytes < MIN_VALUE_BYTES:
            raise ValueError(f"max_value_bytes must be >= {MIN_VALUE_BYTES}")
        object.__setattr__(
            self,
            "_compiled",
            tuple((re.compile(p), ph) for p, ph in self.scrub_rules),
        )


BUILTIN_PROFILES = {
    "default": HashProfile(),
    "latency-sensitive": HashProfile(
        name="latency-sensitive", include_latency_in_hash=True
    ),
}


def _jsonable(value: Any) -> Any:
    """Copy a structured value, encoding non-finite floats as their names."""
    if isinstance(value, float):
        if math.isnan(value):
            return "NaN"
        if math.isinf(value):
            return "Infinity" if value > 0 else "-Infinity"
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        out = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError(f"map key is not a string: {k!r}")
            out[k] = _jsonable(v)
        return out
    return value


def canonical_json(value: Any) -> str:
    """Deterministic JSON text for a structured value."""
    return json.dumps(
        _jsonable(value),
        ensure_ascii=False,
        sort_keys=True,
        separators=(",", ":"),
        allow_nan=False,
    )


def scrub_volatiles(text: str, profile: HashProfile) -> str:
    """Replace volatile tokens with stable placeholders, rule by rule in order."""
    for pattern, placeholder in profile._compiled:
        text = pattern.sub(placeholder, text)
    return text


def _truncate_utf8(text: str, cap: int) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    return raw[:cap].decode("utf-8", errors="ignore")


def _capped_value_text(value: Any, cap: int) -> tuple[str, bool]:
    text = canonical_json(value)
    if len(text.encode("utf-8")) <= cap:
        return text, False
    return _truncate_utf8(text, cap), True


def hash_observation(
    stimulus: list,
    response_kind: str,
    response_value: Any,
    latency_ns: int,
    profile: HashProfile,
) -> tuple[str, bool]:
    """Fingerprint one invocation; returns (sha256 hex, truncated flag).

    Each stimulus value and the response value is serialized and size-capped
    independently, then the payload is scrubbed and hashed as a whole.
    """
    cap = profile.max_value_bytes
    truncated = False
    stim_parts = []
    for v in stimulus:
        t, cut = _capped_value_text(v, cap)
        truncated = truncated or cut
        stim_parts.append(t)
    resp_text, cut = _capped_value_text(response_value, cap)
    truncated = truncated or cut

    parts = ["{"]
    if profile.include_latency_in_hash:
        parts.append(f'"latency_ns":{latency_ns},')
    parts.append('"response":{"kind":')
    parts.append(canonical_json(response_kind))
    parts.append(',"value":')
    parts.append(resp_text)
    parts.append('},"stimulus":[')
    parts.append(",".join(stim_parts))
    parts.append("]}")
    text = scrub_volatiles("".join(parts), profile)
    return hashlib.sha256(text.encode("utf-8")).hexdigest(), truncated


def normalize_source(source: str) -> str:
    """Whitespace-normal form of a unit's source text."""
    source = source.replace("\r\n", "\n")
    lines = [line.rstrip() for line in source.split("\n")]
    indents = [len(line) - len(line.lstrip(" ")) for line in lines if line.strip()]
    if indents:
        common = min(indents)
        if common:
            lines = [line[common:] if line.strip() else line for line in lines]
    return "\n".join(lines).rstrip("\n") + "\n"


def source_fingerprint(source: str) -> str:
    """SHA-256 of the normalized source text of one unit or test."""
    return hashlib.sha256(normalize_source(source).encode("utf-8")).hexdigest()
