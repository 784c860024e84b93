"""becov-tracer: pytest plugin emitting behavioral observation records.

Deliberately standalone: it shares no code with the archive engine and
talks to it only through the wire format (.becov.ndjson), the becov.json
project config and the BECOV_OUT / BECOV_COMMIT environment handshake.
Fingerprint computation is duplicated here on purpose so the engine can
verify record integrity at ingest.
"""

__version__ = "0.1.0"
