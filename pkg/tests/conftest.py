import contextlib

import numpy as np
import pytest

_RESULTS: dict[int, list] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@contextlib.contextmanager
def _check(number: int, label: str):
    """Record the outcome of one acceptance criterion (or one part of it)."""
    try:
        yield
    except BaseException as exc:
        msg = str(exc).strip().splitlines()[0] if str(exc).strip() else type(exc).__name__
        _RESULTS.setdefault(number, []).append((False, f"{label}: {msg}"))
        raise
    else:
        _RESULTS.setdefault(number, []).append((True, label))


@pytest.fixture
def criterion():
    return _check


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        parts = _RESULTS[number]
        ok = all(p for p, _ in parts)
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}")
        for passed, label in parts:
            terminalreporter.write_line(f"    [{'ok' if passed else 'fail'}] {label}")
