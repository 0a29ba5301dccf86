import pytest

from cascadia.models import (
    MicropolisParams,
    NetworkParams,
    PumpParams,
    ScadaParams,
    SubstationParams,
    TankParams,
)

ACCEPTANCE_RESULTS = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance criterion outcome; printed in the terminal summary."""

    def record(number, title, ok, detail=""):
        ACCEPTANCE_RESULTS[number] = (title, bool(ok), detail)
        assert ok, f"criterion {number} ({title}) failed: {detail}"

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, ok, detail = ACCEPTANCE_RESULTS[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}  {detail}")


@pytest.fixture
def quiet_params():
    return MicropolisParams(substation=SubstationParams(sigma_eps=0.0))


@pytest.fixture
def params():
    return {
        "substation": SubstationParams(),
        "scada": ScadaParams(),
        "network": NetworkParams(),
        "tank": TankParams(),
        "pump": PumpParams(),
    }
