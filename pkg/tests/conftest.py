from __future__ import annotations

import pytest

_RESULTS: dict = {}


@pytest.fixture
def criterion():
    """Record one acceptance outcome; the summary prints them in order."""

    def record(k: int, ok: bool, detail: str = "") -> bool:
        _RESULTS[k] = (bool(ok), detail)
        print(f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        ok, detail = _RESULTS[k]
        terminalreporter.write_line(f"CRITERION {k}: {'PASS' if ok else 'FAIL'} {detail}")
