from contextlib import contextmanager

import pytest

RESULTS = {}


class _Entry:
    def __init__(self, title):
        self.title = title
        self.detail = ""


@pytest.fixture
def criterion():
    """``with criterion(n, title) as c:`` records PASS, or FAIL with the error."""

    @contextmanager
    def run(n, title):
        entry = _Entry(title)
        try:
            yield entry
        except BaseException as exc:
            RESULTS[n] = (title, False, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}")
            raise
        RESULTS[n] = (title, True, entry.detail)

    return run


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        title, ok, detail = RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")
