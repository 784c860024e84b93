"""Canonical serialization, volatile-token scrubbing and fingerprint computation.

The canonical JSON encoder is the hot kernel of ingest and validation; a
compiled Cython build is used when available, with the pure-Python module as
fallback (force it with BECOV_PURE_PYTHON=1).
"""

from __future__ import annotations

import hashlib
import os
import re
from dataclasses import dataclass, field

from becov import _canon_py
from becov.errors import SchemaError

if os.environ.get("BECOV_PURE_PYTHON") == "1":
    _impl = _canon_py
else:
    try:
        from becov import _canon as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _canon_py

canonical_json = _impl.canonical_json

USING_COMPILED_KERNEL = _impl is not _canon_py

MIN_VALUE_BYTES = 1024

DEFAULT_SCRUB_RULES = [
    (r"0x[0-9a-fA-F]{6,16}", "<ADDR>"),
    (
        r"[0-9a-fA-F]{8}-[0-9a-fA-F]{4}-[0-9a-fA-F]{4}-"
        r"[0-9a-fA-F]{4}-[0-9a-fA-F]{12}",
        "<UUID>",
    ),
    (r"(?:/private)?(?:/var)?/tmp(?=[/\s\"'\\\\]|$)", "<TMP>"),
]


@dataclass(frozen=True)
class SerializationProfile:
    """Normalization rules applied before fingerprinting.

    Timestamps are deliberately not scrubbed by the default profile: date
    values are often real behavior, not noise.
    """

    name: str = "default"
    scrub_rules: tuple = tuple(DEFAULT_SCRUB_RULES)
    max_value_bytes: int = 65536
    include_latency_in_hash: bool = False
    _compiled: tuple = field(init=False, repr=False, compare=False, default=())

    def __post_init__(self):
        if self.max_value_bytes < MIN_VALUE_BYTES:
            raise ValueError(f"max_value_bytes must be >= {MIN_VALUE_BYTES}")
        rules = tuple((str(p), str(ph)) for p, ph in self.scrub_rules)
        for _, placeholder in rules:
            if not placeholder:
                raise ValueError("scrub placeholder must be non-empty")
        object.__setattr__(self, "scrub_rules", rules)
        object.__setattr__(
            self, "_compiled", tuple((re.compile(p), ph) for p, ph in rules)
        )

    def to_config(self) -> dict:
        return {
            "name": self.name,
            "scrub_rules": [list(r) for r in self.scrub_rules],
            "max_value_bytes": self.max_value_bytes,
            "include_latency_in_hash": self.include_latency_in_hash,
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "SerializationProfile":
        try:
            return cls(
                name=cfg["name"],
                scrub_rules=tuple(tuple(r) for r in cfg["scrub_rules"]),
                max_value_bytes=cfg["max_value_bytes"],
                include_latency_in_hash=cfg["include_latency_in_hash"],
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"invalid profile config: {exc}") from exc


DEFAULT_PROFILE = SerializationProfile()

BUILTIN_PROFILES = {
    "default": DEFAULT_PROFILE,
    "latency-sensitive": SerializationProfile(
        name="latency-sensitive", include_latency_in_hash=True
    ),
}


def scrub_volatiles(text: str, profile: SerializationProfile = DEFAULT_PROFILE) -> str:
    """Replace volatile tokens with stable placeholders, rule by rule in order."""
    for pattern, placeholder in profile._compiled:
        text = pattern.sub(placeholder, text)
    return text


def _truncate_utf8(text: str, cap: int) -> str:
    """Cut text to at most cap UTF-8 bytes, backing off to a valid boundary."""
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    cut = raw[:cap]
    while cut:
        try:
            return cut.decode("utf-8")
        except UnicodeDecodeError:
            cut = cut[:-1]
    return ""


def _capped_value_text(value, cap: int) -> tuple[str, bool]:
    text = canonical_json(value)
    if len(text.encode("utf-8")) <= cap:
        return text, False
    return _truncate_utf8(text, cap), True


def payload_text(obs, profile: SerializationProfile = DEFAULT_PROFILE) -> tuple[str, bool]:
    """Pre-scrub fingerprint text for one observation.

    Each stimulus value and the response value is serialized independently so
    an oversized value can be truncated at max_value_bytes without losing the
    rest of the payload. Returns (text, truncated).
    """
    cap = profile.max_value_bytes
    truncated = False
    stim_parts = []
    for v in obs.stimulus:
        t, cut = _capped_value_text(v, cap)
        truncated = truncated or cut
        stim_parts.append(t)
    resp_text, cut = _capped_value_text(obs.response_value, cap)
    truncated = truncated or cut

    parts = ["{"]
    if profile.include_latency_in_hash:
        parts.append(f'"latency_ns":{obs.latency_ns},')
    parts.append('"response":{"kind":')
    parts.append(canonical_json(obs.response_kind))
    parts.append(',"value":')
    parts.append(resp_text)
    parts.append('},"stimulus":[')
    parts.append(",".join(stim_parts))
    parts.append("]}")
    return "".join(parts), truncated


def hash_observation(obs, profile: SerializationProfile = DEFAULT_PROFILE) -> tuple[str, bool]:
    """Fingerprint an observation; returns (sha256 hex, truncated flag)."""
    text, truncated = payload_text(obs, profile)
    text = scrub_volatiles(text, profile)
    return hashlib.sha256(text.encode("utf-8")).hexdigest(), truncated


def obs_hash(obs, profile: SerializationProfile = DEFAULT_PROFILE) -> str:
    """Normalized fingerprint of an observation (string-equality comparable)."""
    return hash_observation(obs, profile)[0]


def normalize_source(source: str) -> str:
    """Whitespace-normal form of a unit's source text."""
    source = source.replace("\r\n", "\n")
    lines = [line.rstrip() for line in source.split("\n")]
    indents = [
        len(line) - len(line.lstrip(" ")) for line in lines if line.strip()
    ]
    if indents:
        common = min(indents)
        if common:
            lines = [line[common:] if line.strip() else line for line in lines]
    text = "\n".join(lines)
    return text.rstrip("\n") + "\n"


def source_fingerprint(source: str) -> str:
    """SHA-256 of the normalized source text of one unit or test."""
    return hashlib.sha256(normalize_source(source).encode("utf-8")).hexdigest()
