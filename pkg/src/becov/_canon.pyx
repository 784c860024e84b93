# cython: language_level=3
"""Cython build of the canonical JSON encoder.

Must stay byte-identical to becov._canon_py; tests compare the two on
randomized values. Kept free of external C dependencies.
"""

import math

from becov.errors import UnsupportedValue

cdef dict _ESCAPES = {
    '"': '\\"',
    "\\": "\\\\",
    "\b": "\\b",
    "\f": "\\f",
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
}


cdef str _escape_string(str s):
    cdef list out = ['"']
    cdef Py_UCS4 ch
    for ch in s:
        esc = _ESCAPES.get(ch)
        if esc is not None:
            out.append(esc)
        elif ch < 0x20:
            out.append("\\u%04x" % <int>ch)
        else:
            out.append(ch)
    out.append('"')
    return "".join(out)


cdef str _format_float(double f):
    if math.isnan(f):
        return '"NaN"'
    if math.isinf(f):
        return '"Infinity"' if f > 0 else '"-Infinity"'
    return repr(f)


cdef void _encode(object value, list out) except *:
    cdef Py_ssize_t i
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
        out.append(_escape_string(<str>value))
    elif isinstance(value, (list, tuple)):
        out.append("[")
        for i in range(len(value)):
            if i:
                out.append(",")
            _encode(value[i], out)
        out.append("]")
    elif isinstance(value, dict):
        out.append("{")
        first = True
        for key in sorted(value.keys()):
            if not isinstance(key, str):
                raise UnsupportedValue("map key is not a string: %r" % (key,))
            if not first:
                out.append(",")
            first = False
            out.append(_escape_string(<str>key))
            out.append(":")
            _encode(value[key], out)
        out.append("}")
    else:
        raise UnsupportedValue(
            "cannot canonicalize value of type %s" % type(value).__name__
        )


def canonical_json(value):
    """Deterministic JSON text for a structured value."""
    cdef list out = []
    _encode(value, out)
    return "".join(out)
