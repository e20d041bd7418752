import pytest

from v2xsim.scenario import ScenarioConfig


@pytest.fixture
def config():
    return ScenarioConfig()


@pytest.fixture
def quiet_config():
    """Deterministic channel: no shadowing and LOS at every practical distance."""
    return ScenarioConfig(shadow_los=0.0, shadow_nlos=0.0, los_decay=1e12)


_ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one verdict line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, {})

    def report(criterion: int, ok: bool, detail: str) -> None:
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[criterion] = line
        print(line)

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for k in sorted(lines):
            terminalreporter.write_line(lines[k])
