import sys

import numpy as np
import pytest

from blurvitals.vidio import VideoClip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_clip(rng):
    data = rng.integers(0, 256, size=(6, 12, 10), dtype=np.uint8)
    return VideoClip(data, fps=20.0)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
