import sys
import time
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """Log one acceptance line: record(n, ok, detail)."""
    start = time.perf_counter()

    def log(n, ok, detail=""):
        elapsed = time.perf_counter() - start
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.1f}s) {detail}".rstrip()
        request.config._acceptance[n] = line
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
