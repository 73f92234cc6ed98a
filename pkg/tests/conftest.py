import pytest

# filled by tests/test_acceptance.py: (criterion, passed, detail)
ACCEPTANCE: list = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))


@pytest.fixture
def criterion():
    """Context-manager factory recording one pass/fail line per acceptance criterion."""
    from contextlib import contextmanager

    @contextmanager
    def record(name: str, detail=lambda: ""):
        try:
            yield
        except BaseException as e:
            msg = str(e).splitlines()[0] if str(e) else type(e).__name__
            ACCEPTANCE.append((name, False, msg[:200]))
            print(f"[FAIL] {name}: {msg[:200]}")
            raise
        else:
            d = detail() if callable(detail) else detail
            ACCEPTANCE.append((name, True, d))
            print(f"[PASS] {name}" + (f": {d}" if d else ""))

    return record
