import re

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


def random_psd(rng, k, rank=None, jitter=0.1):
    a = rng.normal(size=(k, rank or k))
    return a @ a.T + jitter * np.eye(k)


ACCEPTANCE_NOTES = {}


@pytest.fixture
def note(request):
    """Attach measured values to the acceptance summary line of the current test."""

    def add(text):
        ACCEPTANCE_NOTES[request.node.nodeid] = text

    return add


_CRITERION = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter):
    lines = {}
    for outcome in ("passed", "failed", "skipped", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            m = _CRITERION.search(getattr(rep, "nodeid", ""))
            if not m or (outcome == "passed" and rep.when != "call"):
                continue
            label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP", "error": "ERROR"}[outcome]
            line = f"criterion {m.group(1)} [{label}] {m.group(2).replace('_', ' ')}"
            if rep.nodeid in ACCEPTANCE_NOTES:
                line += f" -- {ACCEPTANCE_NOTES[rep.nodeid]}"
            elif outcome == "skipped" and isinstance(rep.longrepr, tuple):
                line += f" -- {rep.longrepr[2]}"
            lines[int(m.group(1))] = line
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
