"""Append-only partitioned on-disk behavioral archive.

Layout (bit-exact):
    <root>/archive.json                          config: repo, profile
    <root>/archive.lock                          writer lock file
    <root>/manifest.json                         segment index
    <root>/units/<pct-encoded-unit-id>/run-<pct-encoded-run-id>.becov.ndjson

Segments are newline-delimited JSON, partitioned by unit so scans over a
unit subset never open other partitions. A segment, once listed in the
manifest, is never rewritten; ingest of an already-seen run is a no-op.
"""

from __future__ import annotations

import fcntl
import json
import os
import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator
from urllib.parse import quote, unquote

from becov import normalize
from becov.errors import (
    AlreadyExists,
    BecovError,
    CorruptSegment,
    IoError,
    ProfileMismatch,
    SchemaError,
    UnknownCommit,
    ValidationError,
)
from becov.model import (
    WIRE_EXTENSION,
    CommitRef,
    ObservationRecord,
    record_from_wire,
    serialize_record,
)
from becov.normalize import SerializationProfile, canonical_json

ARCHIVE_SCHEMA_VERSION = 1
_REPO_RE = re.compile(r"^[a-z0-9_-]+$")


@dataclass(frozen=True)
class Segment:
    partition_key: str
    file: str
    run_ids: tuple
    commit_ids: tuple
    record_count: int
    byte_size: int

    def to_wire(self) -> dict:
        return {
            "partition_key": self.partition_key,
            "file": self.file,
            "run_ids": list(self.run_ids),
            "commit_ids": list(self.commit_ids),
            "record_count": self.record_count,
            "byte_size": self.byte_size,
        }

    @classmethod
    def from_wire(cls, raw: dict) -> "Segment":
        return cls(
            partition_key=raw["partition_key"],
            file=raw["file"],
            run_ids=tuple(raw["run_ids"]),
            commit_ids=tuple(raw["commit_ids"]),
            record_count=raw["record_count"],
            byte_size=raw["byte_size"],
        )


@dataclass
class Manifest:
    schema_version: int = ARCHIVE_SCHEMA_VERSION
    segments: list = field(default_factory=list)

    def to_wire(self) -> dict:
        segs = sorted(self.segments, key=lambda s: (s.partition_key, s.file))
        return {
            "schema_version": self.schema_version,
            "segments": [s.to_wire() for s in segs],
        }


@dataclass(frozen=True)
class AppendReceipt:
    segments_written: int
    records_written: int
    skipped_duplicate_run: bool


@dataclass(frozen=True)
class SnapshotCell:
    """Aggregated observations for one (test, unit) at one commit."""

    test_id: str
    unit_id: str
    test_hash: str
    unit_hash: str
    obs_multiset: tuple
    invocation_count: int
    latency_ns_values: tuple


@dataclass(frozen=True)
class ArchiveStats:
    total_records: int
    total_bytes: int
    per_unit: tuple
    commit_count: int
    test_count: int
    unit_count: int

    def to_wire(self) -> dict:
        return {
            "total_records": self.total_records,
            "total_bytes": self.total_bytes,
            "per_unit": [dict(u) for u in self.per_unit],  # copies
            "commit_count": self.commit_count,
            "test_count": self.test_count,
            "unit_count": self.unit_count,
        }


def _encode_component(name: str) -> str:
    return quote(name, safe="")


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    try:
        tmp.write_bytes(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


class ArchiveHandle:
    """An opened behavioral archive. Single writer, many readers."""

    def __init__(self, root_path: Path, repo: str, profile: SerializationProfile,
                 manifest: Manifest):
        self.root_path = Path(root_path)
        self.repo = repo
        self.profile = profile
        self.manifest = manifest
        # I/O accounting: number of segment files opened by scans; tests use
        # this to check partition pruning.
        self.files_opened = 0

    # --- paths ------------------------------------------------------------

    @property
    def _units_dir(self) -> Path:
        return self.root_path / "units"

    def _segment_path(self, unit_id: str, run_id: str) -> Path:
        return (
            self._units_dir
            / _encode_component(unit_id)
            / f"run-{_encode_component(run_id)}{WIRE_EXTENSION}"
        )

    # --- locking ----------------------------------------------------------

    @contextmanager
    def writer_lock(self):
        lock_path = self.root_path / "archive.lock"
        try:
            fd = os.open(lock_path, os.O_RDWR)
        except OSError as exc:
            raise IoError(f"cannot open lock file: {exc}") from exc
        try:
            try:
                fcntl.flock(fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
            except OSError as exc:
                raise IoError("archive is locked by another writer") from exc
            yield
        finally:
            os.close(fd)

    # --- ingest -----------------------------------------------------------

    def append_run(self, records: Iterable[ObservationRecord], run_id: str) -> AppendReceipt:
        """Ingest one run's records, grouped into per-unit segments.

        Idempotent: a (partition, run_id) pair already in the manifest is
        skipped without touching its bytes.
        """
        records = list(records)
        for rec in records:
            if rec.run_id != run_id:
                raise ValidationError(
                    f"record run_id {rec.run_id!r} does not match {run_id!r}"
                )
            computed = normalize.obs_hash(rec.obs, self.profile)
            if computed != rec.obs_hash:
                raise ProfileMismatch(
                    f"obs_hash {rec.obs_hash} was not produced under archive "
                    f"profile {self.profile.name!r}"
                )

        by_unit: dict = {}
        for rec in records:
            by_unit.setdefault(rec.unit_id, []).append(rec)

        with self.writer_lock():
            existing = {
                (seg.partition_key, rid)
                for seg in self.manifest.segments
                for rid in seg.run_ids
            }
            new_segments = []
            skipped = False
            written_records = 0
            for unit_id in sorted(by_unit):
                if (unit_id, run_id) in existing:
                    skipped = True
                    continue
                unit_records = by_unit[unit_id]
                path = self._segment_path(unit_id, run_id)
                path.parent.mkdir(parents=True, exist_ok=True)
                payload = "".join(serialize_record(r) + "\n" for r in unit_records)
                data = payload.encode("utf-8")
                _atomic_write(path, data)
                new_segments.append(
                    Segment(
                        partition_key=unit_id,
                        file=str(path.relative_to(self.root_path)),
                        run_ids=(run_id,),
                        commit_ids=tuple(
                            sorted({r.commit.commit_id for r in unit_records})
                        ),
                        record_count=len(unit_records),
                        byte_size=len(data),
                    )
                )
                written_records += len(unit_records)
            if new_segments:
                self.manifest.segments.extend(new_segments)
                self._write_manifest()
            return AppendReceipt(
                segments_written=len(new_segments),
                records_written=written_records,
                skipped_duplicate_run=skipped,
            )

    def _write_manifest(self) -> None:
        data = (canonical_json(self.manifest.to_wire()) + "\n").encode("utf-8")
        _atomic_write(self.root_path / "manifest.json", data)

    # --- reads ------------------------------------------------------------

    def _select_segments(self, unit_ids=None, commit_ids=None, run_ids=None) -> list:
        segs = self.manifest.segments
        if unit_ids is not None:
            wanted = set(unit_ids)
            segs = [s for s in segs if s.partition_key in wanted]
        if run_ids is not None:
            wanted = set(run_ids)
            segs = [s for s in segs if any(r in wanted for r in s.run_ids)]
        if commit_ids is not None:
            wanted = set(commit_ids)
            segs = [s for s in segs if any(c in wanted for c in s.commit_ids)]
        return sorted(segs, key=lambda s: (s.partition_key, s.file))

    def _iter_raw(self, unit_ids=None, commit_ids=None, test_ids=None,
                  run_ids=None) -> Iterator[dict]:
        unit_set = set(unit_ids) if unit_ids is not None else None
        commit_set = set(commit_ids) if commit_ids is not None else None
        test_set = set(test_ids) if test_ids is not None else None
        run_set = set(run_ids) if run_ids is not None else None
        for seg in self._select_segments(unit_ids, commit_ids, run_ids):
            path = self.root_path / seg.file
            self.files_opened += 1
            try:
                fh = open(path, "r", encoding="utf-8")
            except OSError as exc:
                raise IoError(f"cannot open segment {seg.file}: {exc}") from exc
            with fh:
                for line_no, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        raw = json.loads(line)
                    except ValueError as exc:
                        raise CorruptSegment(seg.file, line_no, str(exc)) from exc
                    try:
                        if unit_set is not None and raw["unit_id"] not in unit_set:
                            continue
                        if commit_set is not None and raw["commit"]["commit_id"] not in commit_set:
                            continue
                        if test_set is not None and raw["test_id"] not in test_set:
                            continue
                        if run_set is not None and raw["run_id"] not in run_set:
                            continue
                    except (KeyError, TypeError) as exc:
                        raise CorruptSegment(seg.file, line_no, f"bad record shape: {exc}") from exc
                    yield raw, seg.file, line_no

    def scan(self, unit_ids=None, commit_ids=None, test_ids=None,
             run_ids=None) -> Iterator[ObservationRecord]:
        """Yield validated records matching all given filters (conjunction).

        Segments are pruned via the manifest, so a unit_ids filter never
        opens other partitions. Hashes were verified at ingest and are not
        recomputed here.
        """
        for raw, file, line_no in self._iter_raw(unit_ids, commit_ids, test_ids, run_ids):
            try:
                yield record_from_wire(raw)
            except SchemaError as exc:
                raise CorruptSegment(file, line_no, str(exc)) from exc

    # --- snapshots ----------------------------------------------------------

    def commit_ids(self) -> set:
        return {c for seg in self.manifest.segments for c in seg.commit_ids}

    def commits(self) -> list:
        """All commits in the archive as CommitRefs, in replay order."""
        seen: dict = {}
        for raw, _file, _line in self._iter_raw():
            c = raw["commit"]
            seen[c["commit_id"]] = (c["ordinal"], c["commit_time"])
        refs = [
            CommitRef(commit_id=cid, commit_time=t, ordinal=o)
            for cid, (o, t) in seen.items()
        ]
        return sorted(refs, key=lambda r: r.ordinal)

    def snapshots_for(self, commit_ids: Iterable[str]) -> dict:
        """Per-commit snapshot maps, built in a single scan pass.

        Returns {commit_id: {(test_id, unit_id): SnapshotCell}}. When several
        runs cover the same (commit, test), the lexicographically greatest
        run_id wins.
        """
        wanted = list(commit_ids)
        known = self.commit_ids()
        for cid in wanted:
            if cid not in known:
                raise UnknownCommit(cid)
        # commit -> test -> run -> list of per-record tuples
        groups: dict = {}
        for raw, file, line_no in self._iter_raw(commit_ids=wanted):
            try:
                cid = raw["commit"]["commit_id"]
                obs = raw["obs"]
                groups.setdefault(cid, {}).setdefault(raw["test_id"], {}).setdefault(
                    raw["run_id"], []
                ).append(
                    (
                        raw["unit_id"],
                        raw["test_hash"],
                        raw["unit_hash"],
                        raw["obs_hash"],
                        obs["latency_ns"],
                        raw["invocation_index"],
                    )
                )
            except (KeyError, TypeError) as exc:
                raise CorruptSegment(file, line_no, f"bad record shape: {exc}") from exc
        result: dict = {}
        for cid in wanted:
            cells: dict = {}
            for test_id, runs in groups.get(cid, {}).items():
                run_id = max(runs)
                per_unit: dict = {}
                for row in runs[run_id]:
                    per_unit.setdefault(row[0], []).append(row)
                for unit_id, rows in per_unit.items():
                    rows.sort(key=lambda r: r[5])
                    cells[(test_id, unit_id)] = SnapshotCell(
                        test_id=test_id,
                        unit_id=unit_id,
                        test_hash=rows[0][1],
                        unit_hash=rows[0][2],
                        obs_multiset=tuple(sorted(r[3] for r in rows)),
                        invocation_count=len(rows),
                        latency_ns_values=tuple(r[4] for r in rows),
                    )
            result[cid] = cells
        return result

    def snapshot(self, commit_id: str) -> dict:
        """Snapshot of one commit: {(test_id, unit_id): SnapshotCell}."""
        return self.snapshots_for([commit_id])[commit_id]

    # --- stats --------------------------------------------------------------

    def stats(self) -> ArchiveStats:
        per_unit: dict = {}
        for seg in self.manifest.segments:
            entry = per_unit.setdefault(
                seg.partition_key, {"unit_id": seg.partition_key, "records": 0, "bytes": 0}
            )
            entry["records"] += seg.record_count
            entry["bytes"] += seg.byte_size
        test_ids = {raw["test_id"] for raw, _f, _l in self._iter_raw()}
        units = sorted(per_unit)
        return ArchiveStats(
            total_records=sum(s.record_count for s in self.manifest.segments),
            total_bytes=sum(s.byte_size for s in self.manifest.segments),
            per_unit=tuple(per_unit[u] for u in units),
            commit_count=len(self.commit_ids()),
            test_count=len(test_ids),
            unit_count=len(units),
        )


def init_archive(root, repo: str, profile: SerializationProfile | None = None) -> ArchiveHandle:
    """Create a fresh archive at root (which must be empty or nonexistent)."""
    root = Path(root)
    if not _REPO_RE.match(repo):
        raise BecovError(f"repo is not a valid slug: {repo!r}")
    profile = profile or normalize.DEFAULT_PROFILE
    if root.exists():
        if not root.is_dir():
            raise AlreadyExists(f"{root} exists and is not a directory")
        if any(root.iterdir()):
            raise AlreadyExists(f"{root} is not empty")
    else:
        try:
            root.mkdir(parents=True)
        except OSError as exc:
            raise IoError(f"cannot create {root}: {exc}") from exc
    config = {
        "schema_version": ARCHIVE_SCHEMA_VERSION,
        "repo": repo,
        "profile": profile.to_config(),
    }
    _atomic_write(root / "archive.json", (canonical_json(config) + "\n").encode("utf-8"))
    (root / "archive.lock").touch()
    (root / "units").mkdir()
    handle = ArchiveHandle(root, repo, profile, Manifest())
    handle._write_manifest()
    return handle


def open_archive(root) -> ArchiveHandle:
    """Open an existing archive."""
    root = Path(root)
    config_path = root / "archive.json"
    if not config_path.is_file():
        raise IoError(f"{root} is not a becov archive (missing archive.json)")
    try:
        config = json.loads(config_path.read_text(encoding="utf-8"))
        manifest_raw = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read archive metadata: {exc}") from exc
    try:
        profile = SerializationProfile.from_config(config["profile"])
        repo = config["repo"]
        manifest = Manifest(
            schema_version=manifest_raw["schema_version"],
            segments=[Segment.from_wire(s) for s in manifest_raw["segments"]],
        )
    except (KeyError, TypeError) as exc:
        raise IoError(f"archive metadata is malformed: {exc}") from exc
    return ArchiveHandle(root, repo, profile, manifest)


def decode_partition_name(name: str) -> str:
    """Inverse of the partition directory encoding."""
    return unquote(name)
