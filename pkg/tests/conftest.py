import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, title: str, checks: dict[str, tuple[bool, str]]):
        ok = all(passed for passed, _ in checks.values())
        details = "; ".join(f"{name}: {'ok' if passed else 'FAIL'} ({info})" for name, (passed, info) in checks.items())
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title} -- {details}"
        _VERDICTS.append(line)
        print(line)
        failed = [name for name, (passed, _) in checks.items() if not passed]
        assert not failed, f"criterion {number} failed checks: {', '.join(failed)}"

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
