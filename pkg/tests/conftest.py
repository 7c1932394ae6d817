import time
from contextlib import contextmanager

import pytest

_RESULTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_RESULTS] = []


@pytest.fixture
def criterion(request, capsys):
    """Time one acceptance criterion and record a PASS/FAIL line for the summary."""
    results = request.config.stash[_RESULTS]

    @contextmanager
    def run(number, name, limit_seconds):
        started = time.perf_counter()
        status, note = "FAIL", ""
        try:
            yield
            elapsed = time.perf_counter() - started
            if elapsed < limit_seconds:
                status = "PASS"
            else:
                note = " (over the %gs limit)" % limit_seconds
        except BaseException as exc:
            note = " (%s)" % type(exc).__name__
            raise
        finally:
            elapsed = time.perf_counter() - started
            line = "criterion %d %s: %s in %.2fs, limit %gs%s" % (
                number, name, status, elapsed, limit_seconds, note)
            results.append(line)
            with capsys.disabled():
                print("\n" + line)
        assert elapsed < limit_seconds, line

    return run


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash.get(_RESULTS, [])
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
