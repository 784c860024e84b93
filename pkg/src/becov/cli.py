"""becov command-line interface.

Machine output (--json) goes to stdout; logs and errors go to stderr.
Exit codes: 0 success, 1 user/input error, 2 data/validation error,
3 environment error.
"""

from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

import click

from becov import archive as archive_mod
from becov import diff as diff_mod
from becov import errors as E
from becov import normalize, queries, replay
from becov.diff import CATEGORY_CAVEATS
from becov.model import validate_record

EXIT_OK = 0
EXIT_USER = 1
EXIT_DATA = 2
EXIT_ENV = 3

_USER_ERRORS = (E.AlreadyExists, E.NotARepo)
_DATA_ERRORS = (
    E.SchemaError,
    E.HashMismatch,
    E.ValidationError,
    E.CorruptSegment,
    E.UnknownCommit,
    E.UnknownUnit,
    E.TooFewCommits,
    E.NoCodeDelta,
    E.InvalidPredicate,
    E.BothAbsent,
    E.UnsupportedValue,
)
_ENV_ERRORS = (E.IoError, E.GitError, E.CheckoutError, E.CommandError, E.Timeout)


def _emit(ctx_obj: dict, payload, human_lines=None) -> None:
    if ctx_obj["json"]:
        click.echo(json.dumps(payload, sort_keys=True, indent=2))
    elif human_lines is not None:
        for line in human_lines:
            click.echo(line)
    else:
        click.echo(json.dumps(payload, sort_keys=True, indent=2))


def _open(ctx_obj: dict) -> archive_mod.ArchiveHandle:
    return archive_mod.open_archive(ctx_obj["archive"])


@click.group()
@click.option("--archive", "archive_path", required=True, type=click.Path(),
              help="Path to the behavioral archive directory.")
@click.option("--json", "json_out", is_flag=True, help="Emit machine-readable JSON.")
@click.option("--profile", "profile_name", default="default",
              help="Serialization profile name (used by init).")
@click.pass_context
def cli(ctx, archive_path, json_out, profile_name):
    """Behavioral co-versioning: archive, diff and query run-time observations."""
    ctx.obj = {"archive": archive_path, "json": json_out, "profile": profile_name}


@cli.command()
@click.option("--repo", required=True, help="Repository slug recorded in the archive.")
@click.pass_obj
def init(obj, repo):
    """Create an empty archive."""
    name = obj["profile"]
    if name not in normalize.BUILTIN_PROFILES:
        raise click.UsageError(
            f"unknown profile {name!r}; builtin: {sorted(normalize.BUILTIN_PROFILES)}"
        )
    archive_mod.init_archive(obj["archive"], repo, normalize.BUILTIN_PROFILES[name])
    _emit(obj, {"initialized": obj["archive"], "repo": repo, "profile": name},
          [f"initialized archive at {obj['archive']} (repo={repo}, profile={name})"])


@cli.command()
@click.argument("files", nargs=-1, required=True,
                type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
def ingest(obj, files):
    """Ingest wire-format .becov.ndjson files into the archive."""
    handle = _open(obj)
    receipts = []
    for file in files:
        by_run: dict = {}
        with open(file, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    raw = json.loads(line)
                except ValueError as exc:
                    raise E.SchemaError(f"{file}:{line_no}: not JSON: {exc}") from exc
                record = validate_record(raw, profile=handle.profile)
                by_run.setdefault(record.run_id, []).append(record)
        for run_id in sorted(by_run):
            receipt = handle.append_run(by_run[run_id], run_id)
            receipts.append(
                {
                    "file": str(file),
                    "run_id": run_id,
                    "segments_written": receipt.segments_written,
                    "records_written": receipt.records_written,
                    "skipped_duplicate_run": receipt.skipped_duplicate_run,
                }
            )
    _emit(obj, receipts, [
        f"{r['file']} run {r['run_id']}: {r['records_written']} records, "
        f"{r['segments_written']} segments"
        + (" (duplicate run skipped)" if r["skipped_duplicate_run"] else "")
        for r in receipts
    ])


@cli.command("replay")
@click.option("--repo", "repo_path", required=True, type=click.Path(exists=True),
              help="Path to the git repository to replay.")
@click.option("--commits", "n_commits", required=True, type=int,
              help="Number of trailing first-parent commits to replay.")
@click.option("--cmd", "test_command", required=True,
              help="Test command run per commit (BECOV_OUT/BECOV_COMMIT set).")
@click.option("--timeout", "timeout_s", default=600, show_default=True,
              help="Per-commit timeout in seconds.")
@click.option("--out", "out_dir", type=click.Path(), default=None,
              help="Keep per-commit record files in this directory.")
@click.pass_obj
def replay_cmd(obj, repo_path, n_commits, test_command, timeout_s, out_dir):
    """Replay history: run the test command per commit and ingest its records."""
    handle = _open(obj)
    commits = replay.plan_commits(repo_path, n_commits)
    output_dir = Path(out_dir) if out_dir else Path(tempfile.mkdtemp(prefix="becov-replay-"))
    plan = replay.ReplayPlan(
        repo_path=Path(repo_path),
        commit_list=tuple(commits),
        test_command=test_command,
        output_dir=output_dir,
        per_commit_timeout_s=timeout_s,
    )
    summary = replay.replay_range(plan, handle)
    _emit(obj, summary.to_wire(), [
        f"replayed {summary.attempted} commits: "
        f"{summary.succeeded} succeeded, {summary.failed} failed",
        *(
            f"  {f['commit_id'][:12]} {f['reason']}: {f['detail']}"
            for f in summary.failures
        ),
    ])


def _report_lines(report) -> list:
    lines = [f"{report.from_commit[:12]} -> {report.to_commit[:12]}"]
    for entry in report.entries:
        caveat = CATEGORY_CAVEATS[entry.category]
        lines.append(
            f"  {entry.category.value:<18} {entry.unit_id}  [{entry.test_id}]  ({caveat})"
        )
    summary = ", ".join(
        f"{cat.value}={n}" for cat, n in sorted(report.summary.items())
    )
    lines.append(f"  summary: {summary}")
    return lines


@cli.command("diff")
@click.argument("from_commit")
@click.argument("to_commit")
@click.pass_obj
def diff_cmd(obj, from_commit, to_commit):
    """Behavior-aware change report between two commits."""
    handle = _open(obj)
    report = diff_mod.diff_commits(handle, from_commit, to_commit)
    _emit(obj, report.to_wire(), _report_lines(report))


@cli.command()
@click.option("--last", "last_n", required=True, type=int,
              help="Classify over the last N commits in replay order.")
@click.pass_obj
def classify(obj, last_n):
    """Change reports for each adjacent pair of the last N commits."""
    handle = _open(obj)
    commits = [c.commit_id for c in handle.commits()[-last_n:]]
    reports = diff_mod.classify_range(handle, commits)
    lines = []
    for report in reports:
        lines.extend(_report_lines(report))
    _emit(obj, [r.to_wire() for r in reports], lines)


@cli.command()
@click.pass_obj
def stats(obj):
    """Archive statistics."""
    handle = _open(obj)
    st = handle.stats().to_wire()
    _emit(obj, st, [
        f"records: {st['total_records']}  bytes: {st['total_bytes']}",
        f"commits: {st['commit_count']}  tests: {st['test_count']}  "
        f"units: {st['unit_count']}",
        *(
            f"  {u['unit_id']}: {u['records']} records, {u['bytes']} bytes"
            for u in st["per_unit"]
        ),
    ])


@cli.group()
def query():
    """Longitudinal queries over the archive."""


@query.command("latency")
@click.option("--unit", required=True, help="Fully qualified unit name.")
@click.option("--last", "last_n", required=True, type=int)
@click.pass_obj
def query_latency(obj, unit, last_n):
    """Per-commit latency summaries (nearest-rank percentiles) for a unit."""
    handle = _open(obj)
    series = queries.latency_series(handle, unit, last_n)
    _emit(obj, [s.to_wire() for s in series], [
        f"{s.commit_id[:12]}  n={s.n}  min={s.min}  p50={s.p50}  "
        f"p95={s.p95}  max={s.max}"
        for s in series
    ])


@query.command("instability")
@click.option("--last", "last_n", required=True, type=int)
@click.pass_obj
def query_instability(obj, last_n):
    """Units ranked by instability events over the last N commits."""
    handle = _open(obj)
    window = [c.commit_id for c in handle.commits()[-last_n:]]
    rows = queries.instability_ranking(handle, window)
    _emit(obj, rows, [
        f"{r['unit_id']}: {r['instability_events']} events over "
        f"{r['commits_observed']} commits"
        for r in rows
    ] or ["no instability observed"])


@query.command("ripple")
@click.option("--unit", required=True, help="The unit that was edited.")
@click.option("--commit", required=True, help="Commit at which it was edited.")
@click.pass_obj
def query_ripple(obj, unit, commit):
    """Candidate downstream effects of an edit (co-occurrence, not causality)."""
    handle = _open(obj)
    rows = queries.ripple_report(handle, unit, commit)
    _emit(obj, rows, [
        f"{r['unit_id']}: {r['category']}" for r in rows
    ] or ["no candidate downstream effects"])


@query.command("first")
@click.option("--where", "clauses", multiple=True, required=True,
              help='Predicate atom: "path OP literal" (conjunction when repeated).')
@click.pass_obj
def query_first(obj, clauses):
    """Earliest commit containing a record matching all --where clauses."""
    handle = _open(obj)
    predicate = queries.Predicate.parse(list(clauses))
    hit = queries.first_occurrence(handle, predicate)
    if hit is None:
        _emit(obj, None, ["no match"])
        return
    payload = {
        "commit_id": hit["commit_id"],
        "ordinal": hit["ordinal"],
        "matching_record": hit["matching_record"].to_wire(),
    }
    _emit(obj, payload, [
        f"first match at commit {hit['commit_id']} (ordinal {hit['ordinal']})",
        f"  witness: {hit['matching_record'].test_id} -> "
        f"{hit['matching_record'].unit_id}",
    ])


def dispatch(argv) -> int:
    """Run the CLI on argv (without program name); returns an exit code."""
    try:
        cli.main(args=list(argv), prog_name="becov", standalone_mode=False)
        return EXIT_OK
    except click.exceptions.Exit as exc:
        return EXIT_OK if exc.exit_code == 0 else EXIT_USER
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return EXIT_USER
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return EXIT_USER
    except click.Abort:
        return EXIT_USER
    except _USER_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_USER
    except _DATA_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except _ENV_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ENV
    except E.BecovError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_DATA
    except OSError as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_ENV


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
