"""Historical replay: run an instrumented test command per commit and ingest.

Coupling to the tracer is the environment-variable handshake only: the test
command is started with BECOV_OUT (record file to write) and BECOV_COMMIT
(the 40-char commit id) in its environment, cwd set to a detached worktree
of the commit.
"""

from __future__ import annotations

import json
import os
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from becov.archive import ArchiveHandle
from becov.errors import (
    CheckoutError,
    CommandError,
    GitError,
    HashMismatch,
    NoRecords,
    NotARepo,
    SchemaError,
    Timeout,
    ValidationError,
)
from becov.model import CommitRef, ObservationRecord, validate_record


@dataclass(frozen=True)
class ReplayPlan:
    repo_path: Path
    commit_list: tuple
    test_command: str
    output_dir: Path
    per_commit_timeout_s: int = 600

    def __post_init__(self):
        if not self.commit_list:
            raise ValueError("commit_list must be non-empty")
        if self.per_commit_timeout_s < 1:
            raise ValueError("per_commit_timeout_s must be >= 1")


@dataclass
class ReplaySummary:
    attempted: int = 0
    succeeded: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)

    def to_wire(self) -> dict:
        return {
            "attempted": self.attempted,
            "succeeded": self.succeeded,
            "failed": self.failed,
            "failures": list(self.failures),
        }


def _git(repo_path, *args: str) -> str:
    proc = subprocess.run(
        ["git", "-C", str(repo_path), *args],
        capture_output=True,
        text=True,
    )
    if proc.returncode != 0:
        raise GitError(f"git {' '.join(args)} failed: {proc.stderr.strip()}")
    return proc.stdout


def plan_commits(repo_path, n: int) -> list:
    """Last n first-parent commits of the current branch, oldest first."""
    if n < 1:
        raise ValueError("n must be >= 1")
    repo_path = Path(repo_path)
    probe = subprocess.run(
        ["git", "-C", str(repo_path), "rev-parse", "--git-dir"],
        capture_output=True,
        text=True,
    )
    if probe.returncode != 0:
        raise NotARepo(f"{repo_path} is not a git repository")
    out = _git(repo_path, "log", "--first-parent", f"--max-count={n}",
               "--format=%H %ct")
    lines = [line for line in out.splitlines() if line.strip()]
    lines.reverse()  # git log is newest-first
    refs = []
    for ordinal, line in enumerate(lines):
        commit_id, commit_time = line.split()
        refs.append(
            CommitRef(commit_id=commit_id, commit_time=int(commit_time), ordinal=ordinal)
        )
    return refs


def _parse_record_file(path: Path, commit: CommitRef, profile=None) -> list:
    """Parse and validate a record file, stamping replay commit metadata.

    The tracer only knows BECOV_COMMIT, so commit_time and ordinal are
    rewritten from the plan before validation.
    """
    records: list = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except ValueError as exc:
                raise ValidationError(f"{path}:{line_no}: not JSON: {exc}") from exc
            try:
                stated = raw["commit"]["commit_id"]
            except (KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{line_no}: missing commit") from exc
            if stated != commit.commit_id:
                raise ValidationError(
                    f"{path}:{line_no}: record carries commit {stated}, "
                    f"expected {commit.commit_id}"
                )
            raw["commit"]["commit_time"] = commit.commit_time
            raw["commit"]["ordinal"] = commit.ordinal
            try:
                records.append(validate_record(raw, profile=profile))
            except (SchemaError, HashMismatch) as exc:
                raise ValidationError(f"{path}:{line_no}: {exc}") from exc
    return records


def replay_commit(plan: ReplayPlan, commit: CommitRef) -> dict:
    """Materialize one commit in a worktree and run the test command.

    Returns {"status": "ok", "record_file": path} on success. A nonzero exit
    with a non-empty record file still counts as success: failing tests are
    behavior, not replay errors.
    """
    output_dir = Path(plan.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    record_file = output_dir / f"records-{commit.commit_id}.becov.ndjson"
    if record_file.exists():
        record_file.unlink()

    worktree = Path(tempfile.mkdtemp(prefix=f"becov-wt-{commit.commit_id[:12]}-"))
    try:
        try:
            _git(plan.repo_path, "worktree", "add", "--detach", "--force",
                 str(worktree), commit.commit_id)
        except GitError as exc:
            raise CheckoutError(str(exc)) from exc
        env = dict(os.environ)
        env["BECOV_OUT"] = str(record_file)
        env["BECOV_COMMIT"] = commit.commit_id
        try:
            proc = subprocess.run(
                plan.test_command,
                shell=True,
                cwd=worktree,
                env=env,
                capture_output=True,
                text=True,
                timeout=plan.per_commit_timeout_s,
            )
        except subprocess.TimeoutExpired as exc:
            raise Timeout(
                f"test command exceeded {plan.per_commit_timeout_s}s at "
                f"{commit.commit_id[:12]}"
            ) from exc
        if not record_file.exists():
            if proc.returncode != 0:
                raise CommandError(
                    f"test command exited {proc.returncode} with no record file "
                    f"at {commit.commit_id[:12]}: {proc.stderr.strip()[-500:]}"
                )
            raise NoRecords(f"no record file produced at {commit.commit_id[:12]}")
        if record_file.stat().st_size == 0:
            raise NoRecords(f"empty record file at {commit.commit_id[:12]}")
        return {"status": "ok", "record_file": record_file, "exit_code": proc.returncode}
    finally:
        subprocess.run(
            ["git", "-C", str(plan.repo_path), "worktree", "remove", "--force",
             str(worktree)],
            capture_output=True,
        )
        shutil.rmtree(worktree, ignore_errors=True)


_FAILURE_REASONS = (
    (CheckoutError, "checkout_error"),
    (Timeout, "timeout"),
    (NoRecords, "no_records"),
    (CommandError, "command_error"),
    (ValidationError, "command_error"),
)


def _failure_reason(exc: Exception) -> str:
    for cls, reason in _FAILURE_REASONS:
        if isinstance(exc, cls):
            return reason
    return "command_error"


def replay_range(plan: ReplayPlan, handle: ArchiveHandle) -> ReplaySummary:
    """Replay every planned commit in order; failures are data, not errors."""
    summary = ReplaySummary()
    for commit in plan.commit_list:
        summary.attempted += 1
        try:
            outcome = replay_commit(plan, commit)
            records = _parse_record_file(
                outcome["record_file"], commit, profile=handle.profile
            )
            if not records:
                raise NoRecords(f"zero records at {commit.commit_id[:12]}")
            handle.append_run(records, run_id=f"{commit.commit_id}-r0")
        except (CheckoutError, CommandError, Timeout, NoRecords, ValidationError) as exc:
            summary.failed += 1
            summary.failures.append(
                {
                    "commit_id": commit.commit_id,
                    "reason": _failure_reason(exc),
                    "detail": str(exc),
                }
            )
            continue
        summary.succeeded += 1
    return summary
