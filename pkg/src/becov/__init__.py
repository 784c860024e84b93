"""becov — behavioral co-versioning engine.

Couples a git history with an append-only archive of run-time test
observations, enabling behavior-aware change classification and
longitudinal queries across revisions.
"""

__version__ = "0.1.0"
