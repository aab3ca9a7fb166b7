"""Collects acceptance verdicts and prints one line per criterion at the end."""

import pytest

_RESULTS: dict[int, list] = {}
_TITLES: dict[int, str] = {}


class Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        _TITLES[number] = title
        _RESULTS.setdefault(number, [])

    def record(self, part: str, ok: bool, detail: str) -> bool:
        line = f"criterion {self.number:>2} [{part}] {'PASS' if ok else 'FAIL'}: {detail}"
        print(line)
        _RESULTS[self.number].append((part, bool(ok), detail))
        return ok


@pytest.fixture
def criterion():
    return Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        parts = _RESULTS[n]
        ok = bool(parts) and all(p[1] for p in parts)
        tr.write_line(f"criterion {n:>2} {'PASS' if ok else 'FAIL'}  {_TITLES[n]}")
        for part, good, detail in parts:
            tr.write_line(f"      {part}: {'pass' if good else 'fail'}  {detail}")
