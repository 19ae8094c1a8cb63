import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

_VERDICTS: dict[int, tuple[str, bool, str]] = {}


@pytest.fixture
def verdict():
    """Record (and print) the outcome of one acceptance criterion."""
    def record(number: int, title: str, ok: bool, detail: str = ""):
        _VERDICTS[number] = (title, bool(ok), detail)
        print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {title}. {detail}")
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_VERDICTS):
        title, ok, detail = _VERDICTS[k]
        terminalreporter.write_line(f"criterion {k:2d} {'PASS' if ok else 'FAIL'}: {title}. {detail}")
