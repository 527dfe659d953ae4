import pytest


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for the acceptance summary and assert it."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def check(name: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip()
        lines.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
