"""Behavior-aware change classification between commits.

Categories are diagnostic heuristics over observed executions, not
ground-truth verdicts: a BehavioralDrift entry is a candidate regression (or
intended change), Instability a candidate flakiness/nondeterminism signal.
"""

from __future__ import annotations

from dataclasses import dataclass

from becov.archive import ArchiveHandle, SnapshotCell
from becov.errors import BothAbsent, TooFewCommits
from becov.model import ChangeCategory

# Human-readable caveat per category, used for developer-feedback output.
CATEGORY_CAVEATS = {
    ChangeCategory.STABLE: "no change observed",
    ChangeCategory.BEHAVIOR_PRESERVED: "candidate refactoring/optimization",
    ChangeCategory.BEHAVIORAL_DRIFT: "candidate regression or intended change",
    ChangeCategory.INSTABILITY: "candidate flakiness/nondeterminism/environment drift",
    ChangeCategory.CO_EVOLUTION: "test and code co-changed; drift not attributable",
    ChangeCategory.TEST_EVOLUTION: "test changed; observations not comparable",
    ChangeCategory.ADDED: "newly observed pair",
    ChangeCategory.REMOVED: "no longer observed pair",
}


@dataclass(frozen=True)
class ChangeEntry:
    test_id: str
    unit_id: str
    category: ChangeCategory
    test_delta: bool
    code_delta: bool
    obs_delta: bool
    prev_obs_multiset: tuple
    curr_obs_multiset: tuple

    def to_wire(self) -> dict:
        return {
            "test_id": self.test_id,
            "unit_id": self.unit_id,
            "category": self.category.value,
            "test_delta": self.test_delta,
            "code_delta": self.code_delta,
            "obs_delta": self.obs_delta,
            "prev_obs_multiset": list(self.prev_obs_multiset),
            "curr_obs_multiset": list(self.curr_obs_multiset),
        }


@dataclass(frozen=True)
class ChangeReport:
    from_commit: str
    to_commit: str
    entries: tuple
    summary: dict

    def to_wire(self) -> dict:
        return {
            "from_commit": self.from_commit,
            "to_commit": self.to_commit,
            "entries": [e.to_wire() for e in self.entries],
            "summary": {cat.value: n for cat, n in sorted(self.summary.items())},
        }


def classify_cell(prev: SnapshotCell | None, curr: SnapshotCell | None) -> ChangeEntry:
    """Classify one (test, unit) pair between two snapshots.

    Decision table over the three deltas (test/code/observation hash
    equality) plus the two absence cases; total and deterministic.
    """
    if prev is None and curr is None:
        raise BothAbsent("classify_cell needs at least one side")
    if prev is None or curr is None:
        present = curr if prev is None else prev
        return ChangeEntry(
            test_id=present.test_id,
            unit_id=present.unit_id,
            category=ChangeCategory.ADDED if prev is None else ChangeCategory.REMOVED,
            test_delta=True,
            code_delta=True,
            obs_delta=(prev.obs_multiset if prev else ()) != (curr.obs_multiset if curr else ()),
            prev_obs_multiset=prev.obs_multiset if prev else (),
            curr_obs_multiset=curr.obs_multiset if curr else (),
        )

    test_delta = prev.test_hash != curr.test_hash
    code_delta = prev.unit_hash != curr.unit_hash
    obs_delta = prev.obs_multiset != curr.obs_multiset

    if test_delta and code_delta:
        category = ChangeCategory.CO_EVOLUTION
    elif test_delta:
        category = ChangeCategory.TEST_EVOLUTION
    elif code_delta:
        category = (
            ChangeCategory.BEHAVIORAL_DRIFT if obs_delta else ChangeCategory.BEHAVIOR_PRESERVED
        )
    elif obs_delta:
        category = ChangeCategory.INSTABILITY
    else:
        category = ChangeCategory.STABLE

    return ChangeEntry(
        test_id=curr.test_id,
        unit_id=curr.unit_id,
        category=category,
        test_delta=test_delta,
        code_delta=code_delta,
        obs_delta=obs_delta,
        prev_obs_multiset=prev.obs_multiset,
        curr_obs_multiset=curr.obs_multiset,
    )


def diff_snapshots(from_commit: str, to_commit: str,
                   prev_cells: dict, curr_cells: dict) -> ChangeReport:
    keys = sorted(set(prev_cells) | set(curr_cells), key=lambda k: (k[1], k[0]))
    entries = tuple(
        classify_cell(prev_cells.get(k), curr_cells.get(k)) for k in keys
    )
    summary: dict = {}
    for entry in entries:
        summary[entry.category] = summary.get(entry.category, 0) + 1
    return ChangeReport(
        from_commit=from_commit, to_commit=to_commit, entries=entries, summary=summary
    )


def diff_commits(handle: ArchiveHandle, from_commit: str, to_commit: str) -> ChangeReport:
    """Classify every (test, unit) pair between two commits."""
    snaps = handle.snapshots_for([from_commit, to_commit])
    return diff_snapshots(
        from_commit, to_commit, snaps[from_commit], snaps[to_commit]
    )


def classify_range(handle: ArchiveHandle, commits: list) -> list:
    """One ChangeReport per adjacent commit pair, in the given replay order.

    Snapshots for the whole range are built in a single archive pass.
    """
    if len(commits) < 2:
        raise TooFewCommits("classify_range needs at least two commits")
    snaps = handle.snapshots_for(commits)
    return [
        diff_snapshots(a, b, snaps[a], snaps[b])
        for a, b in zip(commits, commits[1:])
    ]
