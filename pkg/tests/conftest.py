import pytest

from wgmtransfer.emitter_coupling import Emitter
from wgmtransfer.wgm_modes import Sphere, fundamental_mode, synthesize_spectrum

SILICA = 1.45724
_CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[k])


@pytest.fixture
def criterion():
    """Record one pass/fail line per acceptance criterion and assert it."""

    def record(number, name, passed, detail):
        line = f"CRITERION {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
        _CRITERIA[number] = line
        print(line)
        assert passed, line

    return record


@pytest.fixture(scope="session")
def sphere35():
    return Sphere.from_diameter(35e-6, SILICA)


@pytest.fixture(scope="session")
def sphere96():
    return Sphere.from_diameter(96e-6, SILICA)


@pytest.fixture(scope="session")
def fund35(sphere35):
    """Fundamental TE mode of the 35 um sphere near 670 nm, loaded Q 3e7."""
    return fundamental_mode(sphere35, 670e-9, "TE", q_loaded=3e7)


@pytest.fixture(scope="session")
def spectrum96(sphere96):
    return synthesize_spectrum(sphere96, (606e-9, 612e-9), 2)


@pytest.fixture(scope="session")
def donor():
    return Emitter("donor", 610e-9, 20e-9, 1e-20, 1, 50e-9)


@pytest.fixture(scope="session")
def acceptor():
    return Emitter("acceptor", 650e-9, 20e-9, 1e-20, 1, 0.0)


@pytest.fixture(scope="session")
def scenario_budget(sphere35, donor, acceptor):
    from wgmtransfer.transfer import aggregate_eta
    return aggregate_eta(sphere35, donor, acceptor, 3e7, gamma_cav=6e-14, span=46e-9,
                         explicit=True)
