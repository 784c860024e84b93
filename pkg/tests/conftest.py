"""Shared fixtures: record factory and small archive builders."""

from __future__ import annotations

import pytest

from becov import normalize
from becov.archive import init_archive
from becov.model import CommitRef, ContextInfo, Observation, ObservationRecord
from becov.normalize import DEFAULT_PROFILE, source_fingerprint

CONTEXT = ContextInfo(
    platform="linux-x86_64",
    runtime_version="cpython-3.11",
    command="pytest",
    env_digest="0" * 64,
)


def commit_ref(i: int, commit_time: int | None = None) -> CommitRef:
    return CommitRef(
        commit_id=format(i + 1, "040x"),
        commit_time=commit_time if commit_time is not None else 1700000000 + i * 60,
        ordinal=i,
    )


def make_record(
    commit: CommitRef,
    test_id: str = "tests/test_demo.py::test_one",
    unit_id: str = "demo.mod.func",
    stimulus=(1,),
    response_value=2,
    response_kind: str = "return",
    latency_ns: int = 1000,
    invocation_index: int = 0,
    run_id: str | None = None,
    test_src: str = "def test_one():\n    assert True\n",
    unit_src: str = "def func(x):\n    return x + 1\n",
    profile=DEFAULT_PROFILE,
    repo: str = "demo",
) -> ObservationRecord:
    obs = Observation(
        stimulus=tuple(stimulus),
        response_kind=response_kind,
        response_value=response_value,
        latency_ns=latency_ns,
    )
    obs_hash, truncated = normalize.hash_observation(obs, profile)
    return ObservationRecord(
        schema_version=1,
        run_id=run_id or f"{commit.commit_id}-r0",
        repo=repo,
        commit=commit,
        test_id=test_id,
        test_hash=source_fingerprint(test_src),
        unit_id=unit_id,
        unit_hash=source_fingerprint(unit_src),
        invocation_index=invocation_index,
        obs=obs,
        obs_hash=obs_hash,
        context=CONTEXT,
        truncated=truncated,
    )


@pytest.fixture
def empty_archive(tmp_path):
    return init_archive(tmp_path / "arch", "demo")
