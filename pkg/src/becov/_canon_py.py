"""Pure-Python canonical JSON encoder.

Reference implementation for the fingerprint text form; becov._canon is a
Cython build of the same algorithm and must produce byte-identical output.

Canonical form:
- map keys sorted by Unicode code point, no insignificant whitespace
- integers verbatim, floats as shortest round-trip decimal (lowercase "e")
- NaN / +-Infinity encoded as the JSON strings "NaN" / "Infinity" / "-Infinity"
- strings minimally escaped, non-ASCII kept verbatim (UTF-8 on the wire)
"""

from __future__ import annotations

import math
from typing import Any

from becov.errors import UnsupportedValue

_ESCAPES = {
    '"': '\\"',
    "\\": "\\\\",
    "\b": "\\b",
    "\f": "\\f",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


def _escape_string(s: str) -> str:
    out = ['"']
    for ch in s:
        esc = _ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ch < "\x20":
            out.append(f"\\u{ord(ch):04x}")
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


def _format_float(f: float) -> str:
    if math.isnan(f):
        return '"NaN"'
    if math.isinf(f):
        return '"Infinity"' if f > 0 else '"-Infinity"'
    # repr() is shortest round-trip for binary64 and uses lowercase "e"
    return repr(f)


def _encode(value: Any, out: list) -> None:
    if value is None:
        out.append("null")
    elif value is True:
        out.append("true")
    elif value is False:
        out.append("false")
    elif isinstance(value, int):
        out.append(repr(value))
    elif isinstance(value, float):
        out.append(_format_float(value))
    elif isinstance(value, str):
        out.append(_escape_string(value))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i, item in enumerate(value):
            if i:
                out.append(",")
            _encode(item, out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        first = True
        for key in sorted(value.keys()):
            if not isinstance(key, str):
                raise UnsupportedValue(f"map key is not a string: {key!r}")
            if not first:
                out.append(",")
            first = False
            out.append(_escape_string(key))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    else:
        raise UnsupportedValue(f"cannot canonicalize value of type {type(value).__name__}")


def canonical_json(value: Any) -> str:
    """Deterministic JSON text for a structured value."""
    out: list = []
    _encode(value, out)
    return "".join(out)
