"""Archive layout, ingest idempotence, partition pruning and snapshots."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import pytest

from becov.archive import init_archive, open_archive
from becov.errors import AlreadyExists, ProfileMismatch, UnknownCommit, ValidationError
from conftest import commit_ref, make_record


def archive_digest(root: Path) -> dict:
    """Checksum of every file under the archive root."""
    out = {}
    for path in sorted(root.rglob("*")):
        if path.is_file():
            out[str(path.relative_to(root))] = hashlib.sha256(path.read_bytes()).hexdigest()
    return out


# --- init -------------------------------------------------------------------


def test_init_creates_layout(tmp_path):
    handle = init_archive(tmp_path / "a", "demo")
    root = tmp_path / "a"
    assert (root / "archive.json").is_file()
    assert (root / "archive.lock").is_file()
    assert (root / "manifest.json").is_file()
    assert (root / "units").is_dir()
    assert handle.manifest.segments == []


def test_init_empty_dir_ok(tmp_path):
    (tmp_path / "a").mkdir()
    init_archive(tmp_path / "a", "demo")


def test_init_refuses_nonempty_dir(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "a" / "foreign.txt").write_text("x")
    with pytest.raises(AlreadyExists):
        init_archive(tmp_path / "a", "demo")


def test_open_roundtrip(tmp_path):
    handle = init_archive(tmp_path / "a", "demo")
    c = commit_ref(0)
    handle.append_run([make_record(c)], run_id=f"{c.commit_id}-r0")
    reopened = open_archive(tmp_path / "a")
    assert reopened.repo == "demo"
    assert reopened.profile == handle.profile
    assert len(reopened.manifest.segments) == 1


# --- append -----------------------------------------------------------------


def test_append_groups_by_unit(empty_archive):
    c = commit_ref(0)
    records = [
        make_record(c, unit_id="demo.a.f", invocation_index=0),
        make_record(c, unit_id="demo.a.f", invocation_index=1),
        make_record(c, unit_id="demo.b.g"),
    ]
    receipt = empty_archive.append_run(records, run_id=f"{c.commit_id}-r0")
    assert receipt.segments_written == 2
    assert receipt.records_written == 3
    assert not receipt.skipped_duplicate_run
    unit_dirs = sorted(p.name for p in (empty_archive.root_path / "units").iterdir())
    assert unit_dirs == ["demo.a.f", "demo.b.g"]


def test_append_idempotent_byte_identical(empty_archive):
    c = commit_ref(0)
    records = [make_record(c, unit_id="demo.a.f"), make_record(c, unit_id="demo.b.g")]
    empty_archive.append_run(records, run_id=f"{c.commit_id}-r0")
    before = archive_digest(empty_archive.root_path)
    receipt = empty_archive.append_run(records, run_id=f"{c.commit_id}-r0")
    assert receipt == type(receipt)(0, 0, True)
    assert archive_digest(empty_archive.root_path) == before


def test_append_empty_list(empty_archive):
    receipt = empty_archive.append_run([], run_id="r0")
    assert (receipt.segments_written, receipt.records_written,
            receipt.skipped_duplicate_run) == (0, 0, False)


def test_append_rejects_wrong_run_id(empty_archive):
    c = commit_ref(0)
    with pytest.raises(ValidationError):
        empty_archive.append_run([make_record(c, run_id="other")], run_id="r0")


def test_append_rejects_foreign_profile(empty_archive):
    from becov.normalize import BUILTIN_PROFILES

    c = commit_ref(0)
    record = make_record(c, latency_ns=123,
                         profile=BUILTIN_PROFILES["latency-sensitive"])
    with pytest.raises(ProfileMismatch):
        empty_archive.append_run([record], run_id=record.run_id)


def test_append_only_never_rewrites_segments(empty_archive):
    c0, c1 = commit_ref(0), commit_ref(1)
    empty_archive.append_run([make_record(c0)], run_id=f"{c0.commit_id}-r0")
    before = archive_digest(empty_archive.root_path)
    segment_files = [k for k in before if k.startswith("units/")]
    empty_archive.append_run([make_record(c1)], run_id=f"{c1.commit_id}-r0")
    after = archive_digest(empty_archive.root_path)
    for seg in segment_files:
        assert after[seg] == before[seg]


def test_unit_id_percent_encoding(empty_archive):
    c = commit_ref(0)
    record = make_record(c, unit_id="demo.mod.Cls/odd name")
    empty_archive.append_run([record], run_id=record.run_id)
    [unit_dir] = (empty_archive.root_path / "units").iterdir()
    assert "/" not in unit_dir.name.replace("units/", "")
    assert [r.unit_id for r in empty_archive.scan()] == ["demo.mod.Cls/odd name"]


# --- scan -------------------------------------------------------------------


def build_two_unit_archive(tmp_path):
    handle = init_archive(tmp_path / "arch2", "demo")
    c0, c1 = commit_ref(0), commit_ref(1)
    records = []
    for c in (c0, c1):
        records = [
            make_record(c, unit_id="demo.a.f", test_id="t.py::t1", stimulus=(1,)),
            make_record(c, unit_id="demo.b.g", test_id="t.py::t1", stimulus=(2,)),
            make_record(c, unit_id="demo.b.g", test_id="t.py::t2", stimulus=(3,)),
        ]
        handle.append_run(records, run_id=f"{c.commit_id}-r0")
    return handle, c0, c1


def test_scan_unit_filter_prunes_partitions(tmp_path):
    handle, c0, c1 = build_two_unit_archive(tmp_path)
    handle.files_opened = 0
    records = list(handle.scan(unit_ids=["demo.a.f"]))
    assert {r.unit_id for r in records} == {"demo.a.f"}
    # only demo.a.f's two segment files (one per run) were opened
    assert handle.files_opened == 2


def test_scan_empty_filter_returns_all(tmp_path):
    handle, *_ = build_two_unit_archive(tmp_path)
    assert len(list(handle.scan())) == 6


def test_scan_conjunction_equals_brute_force(tmp_path):
    handle, c0, c1 = build_two_unit_archive(tmp_path)
    everything = list(handle.scan())
    filtered = list(handle.scan(commit_ids=[c0.commit_id], test_ids=["t.py::t1"]))
    brute = [
        r for r in everything
        if r.commit.commit_id == c0.commit_id and r.test_id == "t.py::t1"
    ]
    assert sorted(filtered, key=lambda r: (r.unit_id, r.test_id)) == sorted(
        brute, key=lambda r: (r.unit_id, r.test_id)
    )


def test_scan_order_by_unit_then_file(tmp_path):
    handle, *_ = build_two_unit_archive(tmp_path)
    units = [r.unit_id for r in handle.scan()]
    assert units == sorted(units)


# --- snapshot -----------------------------------------------------------------


def test_snapshot_aggregates_invocations(empty_archive):
    c = commit_ref(0)
    records = [
        make_record(c, invocation_index=0, latency_ns=10),
        make_record(c, invocation_index=1, latency_ns=20),
    ]
    empty_archive.append_run(records, run_id=records[0].run_id)
    cells = empty_archive.snapshot(c.commit_id)
    [cell] = cells.values()
    assert cell.invocation_count == 2
    assert len(cell.obs_multiset) == 2
    assert cell.obs_multiset[0] == cell.obs_multiset[1]
    assert cell.latency_ns_values == (10, 20)
    assert list(cell.obs_multiset) == sorted(cell.obs_multiset)


def test_snapshot_unknown_commit(empty_archive):
    c = commit_ref(0)
    empty_archive.append_run([make_record(c)], run_id=f"{c.commit_id}-r0")
    with pytest.raises(UnknownCommit):
        empty_archive.snapshot("f" * 40)


def test_snapshot_latest_run_wins(empty_archive):
    c = commit_ref(0)
    r_a = make_record(c, stimulus=(1,), response_value=10, run_id="run-a")
    r_b = make_record(c, stimulus=(1,), response_value=99, run_id="run-b")
    empty_archive.append_run([r_a], run_id="run-a")
    empty_archive.append_run([r_b], run_id="run-b")
    [cell] = empty_archive.snapshot(c.commit_id).values()
    assert cell.obs_multiset == (r_b.obs_hash,)


def test_snapshot_repeatable(tmp_path):
    handle, c0, _ = build_two_unit_archive(tmp_path)
    assert handle.snapshot(c0.commit_id) == handle.snapshot(c0.commit_id)


# --- stats --------------------------------------------------------------------


def test_stats_empty(empty_archive):
    st = empty_archive.stats()
    assert (st.total_records, st.total_bytes, st.commit_count,
            st.test_count, st.unit_count) == (0, 0, 0, 0, 0)
    assert st.per_unit == ()


def test_stats_counts(tmp_path):
    handle, *_ = build_two_unit_archive(tmp_path)
    st = handle.stats()
    assert st.total_records == 6
    assert st.unit_count == 2
    assert st.commit_count == 2
    assert st.test_count == 2
    assert sum(u["bytes"] for u in st.per_unit) == st.total_bytes
    assert sum(u["records"] for u in st.per_unit) == st.total_records


def test_manifest_matches_file_bytes(tmp_path):
    handle, *_ = build_two_unit_archive(tmp_path)
    for seg in handle.manifest.segments:
        path = handle.root_path / seg.file
        data = path.read_bytes()
        assert seg.byte_size == len(data)
        assert seg.record_count == sum(1 for line in data.splitlines() if line.strip())


def test_manifest_consistency_with_stats(tmp_path):
    handle, *_ = build_two_unit_archive(tmp_path)
    assert sum(s.record_count for s in handle.manifest.segments) == handle.stats().total_records


def test_writer_lock_excludes_second_writer(tmp_path):
    handle = init_archive(tmp_path / "a", "demo")
    other = open_archive(tmp_path / "a")
    from becov.errors import IoError

    with handle.writer_lock():
        with pytest.raises(IoError):
            with other.writer_lock():
                pass
