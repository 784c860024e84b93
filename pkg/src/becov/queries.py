"""Longitudinal analytics over the behavioral archive.

Ripple reports are co-occurrence, not causality: the archive stores no call
graph, so listed units are candidate downstream effects only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from becov.archive import ArchiveHandle
from becov.diff import classify_cell, diff_commits
from becov.errors import (
    InvalidPredicate,
    NoCodeDelta,
    TooFewCommits,
    UnknownCommit,
    UnknownUnit,
)
from becov.model import ChangeCategory, ObservationRecord

PREDICATE_OPERATORS = ("eq", "ne", "lt", "gt", "contains", "matches")


@dataclass(frozen=True)
class LatencySummary:
    commit_id: str
    unit_id: str
    n: int
    min: int
    p50: int
    p95: int
    max: int

    def to_wire(self) -> dict:
        return {
            "commit_id": self.commit_id,
            "unit_id": self.unit_id,
            "n": self.n,
            "min": self.min,
            "p50": self.p50,
            "p95": self.p95,
            "max": self.max,
        }


def nearest_rank(sorted_values: list, percent: int):
    """Nearest-rank percentile: value at 1-based index ceil(percent/100 * n).

    Integer arithmetic only, so no float-rounding surprises at exact ranks.
    """
    n = len(sorted_values)
    if n < 1:
        raise ValueError("empty sample")
    idx = -(-(percent * n) // 100)  # ceil
    return sorted_values[max(idx, 1) - 1]


def latency_series(handle: ArchiveHandle, unit: str, last_n: int) -> list:
    """Per-commit latency summaries for one unit over the last_n commits."""
    if last_n < 1:
        raise ValueError("last_n must be >= 1")
    if unit not in {s.partition_key for s in handle.manifest.segments}:
        raise UnknownUnit(unit)
    commits = handle.commits()[-last_n:]
    snaps = handle.snapshots_for([c.commit_id for c in commits])
    series = []
    for commit in commits:
        samples: list = []
        for (_test, unit_id), cell in snaps[commit.commit_id].items():
            if unit_id == unit:
                samples.extend(cell.latency_ns_values)
        if not samples:
            continue
        samples.sort()
        series.append(
            LatencySummary(
                commit_id=commit.commit_id,
                unit_id=unit,
                n=len(samples),
                min=samples[0],
                p50=nearest_rank(samples, 50),
                p95=nearest_rank(samples, 95),
                max=samples[-1],
            )
        )
    return series


def instability_ranking(handle: ArchiveHandle, window: list) -> list:
    """Units ranked by Instability events over adjacent pairs in the window.

    window is an ordered list of commit_ids in replay order. Result rows are
    {unit_id, instability_events, commits_observed}, sorted by events
    descending then unit_id ascending; units with zero events are omitted.
    """
    if len(window) < 2:
        raise TooFewCommits("instability ranking needs at least two commits")
    snaps = handle.snapshots_for(window)
    events: dict = {}
    observed: dict = {}
    for cid in window:
        for (_test, unit_id) in snaps[cid]:
            observed.setdefault(unit_id, set()).add(cid)
    for a, b in zip(window, window[1:]):
        prev_cells, curr_cells = snaps[a], snaps[b]
        for key in set(prev_cells) & set(curr_cells):
            entry = classify_cell(prev_cells[key], curr_cells[key])
            if entry.category is ChangeCategory.INSTABILITY:
                events[key[1]] = events.get(key[1], 0) + 1
    rows = [
        {
            "unit_id": unit_id,
            "instability_events": count,
            "commits_observed": len(observed[unit_id]),
        }
        for unit_id, count in events.items()
    ]
    rows.sort(key=lambda r: (-r["instability_events"], r["unit_id"]))
    return rows


def ripple_report(handle: ArchiveHandle, changed_unit: str, commit: str) -> list:
    """Candidate downstream effects of an edit to changed_unit at commit.

    Lists the other units whose observations changed at (predecessor, commit)
    without any local code change — co-occurrence with the named edit, not a
    proven causal link.
    """
    commits = handle.commits()
    by_id = {c.commit_id: i for i, c in enumerate(commits)}
    if commit not in by_id:
        raise UnknownCommit(commit)
    idx = by_id[commit]
    if idx == 0:
        raise UnknownCommit(f"{commit} has no predecessor in the archive")
    prev = commits[idx - 1].commit_id
    report = diff_commits(handle, prev, commit)
    if not any(e.unit_id == changed_unit and e.code_delta for e in report.entries):
        raise NoCodeDelta(f"{changed_unit} did not change at {prev[:12]}..{commit[:12]}")
    out: dict = {}
    for entry in report.entries:
        if entry.unit_id == changed_unit:
            continue
        if entry.category in (ChangeCategory.BEHAVIORAL_DRIFT, ChangeCategory.INSTABILITY) \
                and not entry.code_delta:
            out.setdefault(entry.unit_id, entry.category)
    return [
        {"unit_id": unit_id, "category": out[unit_id].value}
        for unit_id in sorted(out)
    ]


# --- retrospective audit predicates ----------------------------------------


@dataclass(frozen=True)
class Atom:
    path: str
    op: str
    literal: object


@dataclass(frozen=True)
class Predicate:
    """Conjunction of field atoms over ObservationRecord wire fields."""

    atoms: tuple

    @classmethod
    def parse(cls, clauses: list) -> "Predicate":
        """Parse CLI clauses of the form "path OP literal"."""
        import json as _json

        atoms = []
        for clause in clauses:
            parts = clause.split(None, 2)
            if len(parts) != 3:
                raise InvalidPredicate(f"cannot parse clause {clause!r}")
            path, op, literal = parts
            if op not in PREDICATE_OPERATORS:
                raise InvalidPredicate(f"unknown operator {op!r}")
            try:
                value = _json.loads(literal)
            except ValueError:
                value = literal
            atoms.append(Atom(path=path, op=op, literal=value))
        return cls(atoms=tuple(atoms))


def _resolve_path(wire: dict, path: str):
    segments = path.split(".")
    node: object = wire
    if segments[0] not in wire:
        # allow observation-level shorthand, e.g. "response_kind"
        if segments[0] in wire["obs"]:
            node = wire["obs"]
        else:
            raise InvalidPredicate(f"unknown field path {path!r}")
    for seg in segments:
        if isinstance(node, dict) and seg in node:
            node = node[seg]
        elif isinstance(node, list) and seg.isdigit() and int(seg) < len(node):
            node = node[int(seg)]
        else:
            return None, False
    return node, True


def _atom_matches(wire: dict, atom: Atom) -> bool:
    value, found = _resolve_path(wire, atom.path)
    if not found:
        return False
    if atom.op == "eq":
        return value == atom.literal
    if atom.op == "ne":
        return value != atom.literal
    if atom.op in ("lt", "gt"):
        try:
            return value < atom.literal if atom.op == "lt" else value > atom.literal
        except TypeError:
            return False
    if atom.op == "contains":
        try:
            return atom.literal in value  # type: ignore[operator]
        except TypeError:
            return False
    if atom.op == "matches":
        if not isinstance(value, str) or not isinstance(atom.literal, str):
            return False
        try:
            return re.search(atom.literal, value) is not None
        except re.error as exc:
            raise InvalidPredicate(f"bad regex {atom.literal!r}: {exc}") from exc
    raise InvalidPredicate(f"unknown operator {atom.op!r}")


def record_matches(record: ObservationRecord, predicate: Predicate) -> bool:
    wire = record.to_wire()
    return all(_atom_matches(wire, atom) for atom in predicate.atoms)


_RECORD_PATH_ROOTS = {
    "schema_version", "run_id", "repo", "commit", "test_id", "test_hash",
    "unit_id", "unit_hash", "invocation_index", "obs", "obs_hash", "context",
    "truncated", "stimulus", "response_kind", "response_value", "latency_ns",
}


def _check_predicate(predicate: Predicate) -> None:
    for atom in predicate.atoms:
        if atom.op not in PREDICATE_OPERATORS:
            raise InvalidPredicate(f"unknown operator {atom.op!r}")
        root = atom.path.split(".")[0]
        if root not in _RECORD_PATH_ROOTS:
            raise InvalidPredicate(f"unknown field path {atom.path!r}")


def first_occurrence(handle: ArchiveHandle, predicate: Predicate) -> dict | None:
    """Earliest commit (by replay ordinal) with a record matching the predicate.

    Returns {commit_id, ordinal, matching_record} with one witness record, or
    None when nothing matches.
    """
    _check_predicate(predicate)
    best = None
    for record in handle.scan():
        if not record_matches(record, predicate):
            continue
        key = (
            record.commit.ordinal,
            record.unit_id,
            record.test_id,
            record.invocation_index,
        )
        if best is None or key < best[0]:
            best = (key, record)
    if best is None:
        return None
    record = best[1]
    return {
        "commit_id": record.commit.commit_id,
        "ordinal": record.commit.ordinal,
        "matching_record": record,
    }
