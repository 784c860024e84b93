"""Latency series, instability ranking, ripple and first-occurrence queries."""

from __future__ import annotations

import pytest

from becov.errors import (
    InvalidPredicate,
    NoCodeDelta,
    TooFewCommits,
    UnknownUnit,
)
from becov.queries import (
    Predicate,
    first_occurrence,
    instability_ranking,
    latency_series,
    nearest_rank,
    record_matches,
    ripple_report,
)
from conftest import commit_ref, make_record

UNIT = "demo.mod.func"


# --- nearest-rank percentiles ------------------------------------------------


def test_nearest_rank_hand_applied():
    # oracle: value at 1-based index ceil(q * n), applied by hand
    samples = [10, 20, 30, 40]
    assert nearest_rank(samples, 50) == 20   # ceil(0.5*4)=2
    assert nearest_rank(samples, 95) == 40   # ceil(0.95*4)=4
    assert nearest_rank(samples, 100) == 40
    assert nearest_rank([7], 50) == 7


def test_nearest_rank_exact_boundary():
    # 0.95*20 is exactly 19; float math must not bump it to 20
    samples = list(range(1, 21))
    assert nearest_rank(samples, 95) == 19


def test_latency_series_single_commit(empty_archive):
    c = commit_ref(0)
    records = [
        make_record(c, invocation_index=i, latency_ns=v)
        for i, v in enumerate([40, 10, 30, 20])
    ]
    empty_archive.append_run(records, run_id=records[0].run_id)
    [summary] = latency_series(empty_archive, UNIT, last_n=5)
    assert (summary.min, summary.p50, summary.p95, summary.max) == (10, 20, 40, 40)
    assert summary.n == 4
    assert summary.min <= summary.p50 <= summary.p95 <= summary.max


def test_latency_series_degenerate(empty_archive):
    c = commit_ref(0)
    r = make_record(c, latency_ns=7)
    empty_archive.append_run([r], run_id=r.run_id)
    [summary] = latency_series(empty_archive, UNIT, last_n=1)
    assert (summary.min, summary.p50, summary.p95, summary.max, summary.n) == (7, 7, 7, 7, 1)


def test_latency_series_skips_commits_without_unit(empty_archive):
    c0, c1, c2 = commit_ref(0), commit_ref(1), commit_ref(2)
    r0 = make_record(c0, latency_ns=1)
    r1 = make_record(c1, unit_id="demo.other.u", latency_ns=2)
    r2 = make_record(c2, latency_ns=3)
    for r in (r0, r1, r2):
        empty_archive.append_run([r], run_id=r.run_id)
    series = latency_series(empty_archive, UNIT, last_n=3)
    assert [s.commit_id for s in series] == [c0.commit_id, c2.commit_id]


def test_latency_series_unknown_unit(empty_archive):
    c = commit_ref(0)
    r = make_record(c)
    empty_archive.append_run([r], run_id=r.run_id)
    with pytest.raises(UnknownUnit):
        latency_series(empty_archive, "no.such.unit", last_n=1)


# --- instability ranking ------------------------------------------------------


def build_instability_archive(empty_archive):
    """demo.flaky.f returns a different value at every commit (same source);
    demo.solid.s is fully deterministic."""
    commits = [commit_ref(i) for i in range(3)]
    for i, c in enumerate(commits):
        records = [
            make_record(c, unit_id="demo.flaky.f", response_value=i * 17 + 1,
                        unit_src="def f():\n    return rng()\n"),
            make_record(c, unit_id="demo.solid.s", response_value=42,
                        unit_src="def s():\n    return 42\n"),
        ]
        empty_archive.append_run(records, run_id=records[0].run_id)
    return [c.commit_id for c in commits]


def test_instability_ranking_flaky_unit_first(empty_archive):
    window = build_instability_archive(empty_archive)
    rows = instability_ranking(empty_archive, window)
    assert rows == [
        {"unit_id": "demo.flaky.f", "instability_events": 2, "commits_observed": 3}
    ]


def test_instability_ranking_deterministic_archive_empty(empty_archive):
    commits = [commit_ref(i) for i in range(3)]
    for c in commits:
        r = make_record(c)
        empty_archive.append_run([r], run_id=r.run_id)
    assert instability_ranking(empty_archive, [c.commit_id for c in commits]) == []


def test_instability_ranking_tie_breaks_lexicographically(empty_archive):
    commits = [commit_ref(i) for i in range(2)]
    for i, c in enumerate(commits):
        records = [
            make_record(c, unit_id="demo.z.f", response_value=i),
            make_record(c, unit_id="demo.a.g", response_value=i + 100),
        ]
        empty_archive.append_run(records, run_id=records[0].run_id)
    rows = instability_ranking(empty_archive, [c.commit_id for c in commits])
    assert [r["unit_id"] for r in rows] == ["demo.a.g", "demo.z.f"]


def test_instability_ranking_needs_two_commits(empty_archive):
    c = commit_ref(0)
    r = make_record(c)
    empty_archive.append_run([r], run_id=r.run_id)
    with pytest.raises(TooFewCommits):
        instability_ranking(empty_archive, [c.commit_id])


# --- ripple -------------------------------------------------------------------


def build_ripple_archive(empty_archive):
    """demo.helper.h is edited at commit 1; demo.caller.c (source unchanged)
    shifts its observations; demo.bystander.b stays put."""
    c0, c1 = commit_ref(0), commit_ref(1)
    recs0 = [
        make_record(c0, unit_id="demo.helper.h", response_value=1,
                    unit_src="def h():\n    return 1\n"),
        make_record(c0, unit_id="demo.caller.c", response_value=11,
                    unit_src="def c():\n    return h() + 10\n"),
        make_record(c0, unit_id="demo.bystander.b", response_value=5,
                    unit_src="def b():\n    return 5\n"),
    ]
    recs1 = [
        make_record(c1, unit_id="demo.helper.h", response_value=2,
                    unit_src="def h():\n    return 2\n"),
        make_record(c1, unit_id="demo.caller.c", response_value=12,
                    unit_src="def c():\n    return h() + 10\n"),
        make_record(c1, unit_id="demo.bystander.b", response_value=5,
                    unit_src="def b():\n    return 5\n"),
    ]
    empty_archive.append_run(recs0, run_id=recs0[0].run_id)
    empty_archive.append_run(recs1, run_id=recs1[0].run_id)
    return c0, c1


def test_ripple_lists_drifting_dependent(empty_archive):
    _, c1 = build_ripple_archive(empty_archive)
    rows = ripple_report(empty_archive, "demo.helper.h", c1.commit_id)
    assert rows == [{"unit_id": "demo.caller.c", "category": "Instability"}]


def test_ripple_excludes_changed_unit_itself(empty_archive):
    _, c1 = build_ripple_archive(empty_archive)
    rows = ripple_report(empty_archive, "demo.helper.h", c1.commit_id)
    assert all(r["unit_id"] != "demo.helper.h" for r in rows)


def test_ripple_empty_when_nothing_drifts(empty_archive):
    c0, c1 = commit_ref(0), commit_ref(1)
    r0 = make_record(c0, unit_id="demo.helper.h", unit_src="def h():\n    return 1\n")
    r1 = make_record(c1, unit_id="demo.helper.h", unit_src="def h():\n    return 2\n")
    empty_archive.append_run([r0], run_id=r0.run_id)
    empty_archive.append_run([r1], run_id=r1.run_id)
    assert ripple_report(empty_archive, "demo.helper.h", c1.commit_id) == []


def test_ripple_requires_code_delta(empty_archive):
    _, c1 = build_ripple_archive(empty_archive)
    with pytest.raises(NoCodeDelta):
        ripple_report(empty_archive, "demo.bystander.b", c1.commit_id)


# --- first occurrence -----------------------------------------------------------


def build_exception_archive(empty_archive):
    commits = [commit_ref(i) for i in range(5)]
    for i, c in enumerate(commits):
        if i >= 3:
            r = make_record(
                c,
                response_kind="exception",
                response_value={"type": "OverflowError", "message": "too big"},
            )
        else:
            r = make_record(c, response_value=i)
        empty_archive.append_run([r], run_id=r.run_id)
    return commits


def test_first_occurrence_earliest_commit(empty_archive):
    commits = build_exception_archive(empty_archive)
    predicate = Predicate.parse(
        ['response_kind eq "exception"', 'obs.response_value.type eq "OverflowError"']
    )
    hit = first_occurrence(empty_archive, predicate)
    assert hit is not None
    assert hit["commit_id"] == commits[3].commit_id
    assert hit["ordinal"] == 3
    assert hit["matching_record"].obs.response_value["type"] == "OverflowError"


def test_first_occurrence_unsatisfiable(empty_archive):
    build_exception_archive(empty_archive)
    predicate = Predicate.parse(['unit_id eq "no.such.unit"'])
    assert first_occurrence(empty_archive, predicate) is None


def test_first_occurrence_commit_zero(empty_archive):
    commits = build_exception_archive(empty_archive)
    predicate = Predicate.parse(['response_kind eq "return"'])
    hit = first_occurrence(empty_archive, predicate)
    assert hit["commit_id"] == commits[0].commit_id
    assert hit["ordinal"] == 0


def test_predicate_operators(empty_archive):
    c = commit_ref(0)
    r = make_record(c, stimulus=("2003-09-25",), response_value=7, latency_ns=100)
    empty_archive.append_run([r], run_id=r.run_id)
    assert record_matches(r, Predicate.parse(["obs.latency_ns lt 200"]))
    assert record_matches(r, Predicate.parse(["obs.latency_ns gt 50"]))
    assert record_matches(r, Predicate.parse(['stimulus.0 contains "2003"']))
    assert record_matches(r, Predicate.parse(['unit_id matches "^demo[.]mod"']))
    assert not record_matches(r, Predicate.parse(["obs.latency_ns ne 100"]))


def test_invalid_predicate_rejected(empty_archive):
    with pytest.raises(InvalidPredicate):
        Predicate.parse(["unit_id like pattern"])
    with pytest.raises(InvalidPredicate):
        first_occurrence(empty_archive, Predicate.parse(['nonsense_field eq 1']))
