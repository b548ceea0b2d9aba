from __future__ import annotations

import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """record(name, ok, detail): registers one acceptance line for the summary."""

    def record(name: str, ok: bool, detail: str = "") -> None:
        _RESULTS.append((name, bool(ok), detail))

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())
