"""Exception hierarchy shared by all becov modules."""

from __future__ import annotations


class BecovError(Exception):
    """Base class for all errors raised by becov."""


# --- record / normalization errors ---------------------------------------


class SchemaError(BecovError):
    """A wire-format record is structurally invalid (missing/extra field, wrong type)."""


class VersionError(SchemaError):
    """Record carries an unsupported schema_version."""


class HashMismatch(BecovError):
    """Stated obs_hash does not equal the recomputed fingerprint."""


class UnsupportedValue(BecovError):
    """Value cannot be represented in the structured-value model."""


class ValidationError(BecovError):
    """A batch of records failed validation during ingest."""


class ProfileMismatch(ValidationError):
    """Record was fingerprinted under a different serialization profile than the archive's."""


# --- archive errors -------------------------------------------------------


class AlreadyExists(BecovError):
    """Archive root already contains data."""


class IoError(BecovError):
    """Filesystem-level failure (also raised when the writer lock is held)."""


class CorruptSegment(BecovError):
    """A segment line failed validation; message carries file and line number."""

    def __init__(self, file: str, line_no: int, cause: str):
        super().__init__(f"{file}:{line_no}: {cause}")
        self.file = file
        self.line_no = line_no


class UnknownCommit(BecovError):
    """Commit is not present in the archive."""


class UnknownUnit(BecovError):
    """Unit was never observed in the archive."""


# --- diff / query errors --------------------------------------------------


class BothAbsent(BecovError):
    """classify_cell called with neither side present."""


class TooFewCommits(BecovError):
    """Operation needs at least two commits."""


class NoCodeDelta(BecovError):
    """Ripple query: the named unit did not change at the given commit pair."""


class InvalidPredicate(BecovError):
    """Predicate references an unknown field path or operator."""


# --- replay errors --------------------------------------------------------


class NotARepo(BecovError):
    """Path is not a git repository."""


class GitError(BecovError):
    """Git invocation failed."""


class CheckoutError(BecovError):
    """Could not materialize a commit into a worktree."""


class CommandError(BecovError):
    """Test command exited nonzero and produced no record file."""


class Timeout(BecovError):
    """Test command exceeded the per-commit timeout."""


class NoRecords(BecovError):
    """Test command produced a zero-length record file."""
