import pytest

_VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then fail the test if any check failed."""

    def record(number, title, checks):
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}: {text}" for name, (_, text) in checks.items())
        line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}"
        _VERDICTS.append(line)
        print(line)
        bad = [name for name, (passed, _) in checks.items() if not passed]
        assert not bad, f"criterion {number} failed checks: {', '.join(bad)}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split()[0])):
            terminalreporter.write_line(line)
