import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(label: int | str, title: str, checks: dict[str, bool], detail: str = "") -> bool:
        ok = all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        note = detail if ok else f"failed: {', '.join(failed)}; {detail}"
        head = f"criterion {label:2d}" if isinstance(label, int) else f"{label:12s}"
        order = (0, label) if isinstance(label, int) else (1, 0)
        lines.append((order, f"{head} {'PASS' if ok else 'FAIL'}  {title}  ({note})"))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
