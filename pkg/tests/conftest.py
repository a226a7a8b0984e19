from __future__ import annotations

import shutil
from pathlib import Path

import pytest

from synth import JARS


@pytest.fixture
def jar_copy(tmp_path: Path):
    """Copy named fixture Jars into a fresh directory and return it."""
    def copy(*names: str) -> Path:
        for name in names:
            shutil.copy(JARS / name, tmp_path / name)
        return tmp_path
    return copy


# -- acceptance report -------------------------------------------------------------

_acceptance: dict[str, tuple[str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(criterion): one acceptance criterion, reported in the summary")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when not in ("setup", "call"):
        return
    label = marker.args[0]
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        _acceptance[label] = ("FAIL", call.duration)
    elif call.when == "call":
        _acceptance[label] = ("PASS", call.duration)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, (status, seconds) in _acceptance.items():
        terminalreporter.write_line(f"{status}  {label}  ({seconds:.2f}s)")
