import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def acceptance():
    """Record ``(criterion, ok, detail)`` for the end-of-run acceptance summary."""

    def record(key: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE[key] = (bool(ok), detail)
        print(f"criterion {key:<3} {'PASS' if ok else 'FAIL'}  {detail}")
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    order = sorted(ACCEPTANCE, key=lambda k: (int("".join(ch for ch in k if ch.isdigit())), k))
    for key in order:
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<3} {'PASS' if ok else 'FAIL'}  {detail}")
