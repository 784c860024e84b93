"""pytest integration: activate capture per session and emit the run file.

The plugin stays dormant unless both conditions hold: BECOV_OUT is set in
the environment and a becov.json exists at the pytest root. Test outcomes
are never affected by capture; an emission failure aborts with a nonzero
session exit after results are already reported.

Limitation: single-process, single-threaded test runs only (no xdist).
"""

from __future__ import annotations

import inspect
import os
from pathlib import Path

import pytest

from becov_tracer.capture import Recorder
from becov_tracer.config import CONFIG_NAME, load_config

_RECORDER_KEY = pytest.StashKey[Recorder]()


def pytest_configure(config):
    out = os.environ.get("BECOV_OUT")
    if not out:
        return
    root = Path(config.rootpath)
    config_path = root / CONFIG_NAME
    if not config_path.is_file():
        return
    focal = load_config(config_path)
    recorder = Recorder(focal, root, os.environ.get("BECOV_COMMIT"))
    config.stash[_RECORDER_KEY] = recorder


def _recorder(config) -> Recorder | None:
    return config.stash.get(_RECORDER_KEY, None)


def pytest_collection_finish(session):
    recorder = _recorder(session.config)
    if recorder is not None:
        recorder.install()


def _test_source(item) -> str:
    func = getattr(item, "function", None)
    if func is not None:
        try:
            return inspect.getsource(func)
        except (OSError, TypeError):
            pass
    return item.nodeid


def pytest_runtest_setup(item):
    recorder = _recorder(item.config)
    if recorder is not None:
        recorder.begin_test(item.nodeid, _test_source(item))


def pytest_runtest_teardown(item):
    recorder = _recorder(item.config)
    if recorder is not None:
        recorder.end_test()


def pytest_sessionfinish(session, exitstatus):
    recorder = _recorder(session.config)
    if recorder is None:
        return
    recorder.uninstall()
    try:
        count = recorder.emit_run_file(os.environ["BECOV_OUT"])
    except OSError as exc:
        print(f"becov-tracer: failed to write record file: {exc}")
        session.exitstatus = 3
        return
    tr = session.config.pluginmanager.get_plugin("terminalreporter")
    if tr is not None:
        tr.write_line(f"becov-tracer: wrote {count} observation record(s)")
