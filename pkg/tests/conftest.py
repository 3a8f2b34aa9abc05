"""Shared fixtures and the acceptance-criteria summary hook.

Acceptance tests register their verdict through the ``criterion`` fixture;
criterion 7 (module invariant suites) is judged over the rest of the suite
by ``pytest_terminal_summary``.  After the normal pytest output the hook
prints one PASS/FAIL line per criterion.
"""

from contextlib import contextmanager

import pytest

from crosstalk.corpus import SyntheticSpec, generate_conversation
from crosstalk.timelines import Annotation

MODULE_SUITES_BUDGET = 120.0  # seconds allowed for the non-acceptance suite


def pytest_configure(config):
    config._criteria = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion verdict; stays FAIL if the body raises."""
    config = request.config

    @contextmanager
    def _criterion(number: int, title: str):
        config._criteria[number] = (title, "FAIL")
        yield
        config._criteria[number] = (title, "PASS")

    return _criterion


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = dict(getattr(config, "_criteria", {}))
    tr = terminalreporter

    # criterion 7 is judged over the rest of the suite: every module
    # invariant test must pass, within the wall-clock budget
    module_reports = []
    for reports in tr.stats.values():
        for r in reports:
            nodeid = getattr(r, "nodeid", "")
            if nodeid and "test_acceptance" not in nodeid and hasattr(r, "duration"):
                module_reports.append(r)
    ran = [r for r in module_reports
           if getattr(r, "when", "") == "call" and r.outcome == "passed"]
    bad = [r for r in module_reports if r.outcome == "failed"]
    if ran or bad:
        elapsed = sum(r.duration for r in module_reports)
        ok = not bad and elapsed < MODULE_SUITES_BUDGET
        criteria[7] = (
            f"module invariant suites pass in {elapsed:.1f}s "
            f"(budget {MODULE_SUITES_BUDGET:.0f}s)",
            "PASS" if ok else "FAIL",
        )

    if not criteria:
        return
    tr.section("acceptance criteria")
    for number in sorted(criteria):
        title, verdict = criteria[number]
        tr.write_line(f"criterion {number}: {verdict} - {title}")


@pytest.fixture(scope="session")
def small_recording():
    """One 60 s two-speaker synthetic conversation, ~19% overlapped speech."""
    spec = SyntheticSpec(n_speakers=2, duration=60.0, overlap_fraction=0.19, seed=7)
    return generate_conversation(spec)


@pytest.fixture
def make_annotation():
    """Random-annotation factory on a dyadic grid, so durations sum exactly."""

    def _make(rng, n_speakers=4, n_segments=10, grid=1.0 / 256.0,
              horizon=512, uri="rec"):
        entries = []
        for _ in range(n_segments):
            a = int(rng.integers(0, horizon - 2))
            b = int(rng.integers(a + 1, min(a + 65, horizon) + 1))
            entries.append((a * grid, b * grid, f"s{int(rng.integers(n_speakers))}"))
        return Annotation(entries, uri=uri)

    return _make
