import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=300)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(autouse=True)
def _isolated_output_root(tmp_path, monkeypatch):
    # the CLI falls back to $DHTSIM_OUT; keep test runs out of the checkout
    monkeypatch.setenv("DHTSIM_OUT", str(tmp_path / "runs"))


# acceptance lines collected by tests/test_acceptance.py, echoed after the run
ACCEPTANCE_LINES: list[tuple[str, str]] = []  # (criterion key, line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES, key=lambda kv: (int(kv[0].rstrip("ab")), kv[0])):
            terminalreporter.write_line(line)
