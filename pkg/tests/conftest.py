import numpy as np
import pytest

from zenochem.experiments import paper_params, paper_system
from zenochem.spin_algebra import Nucleus, SystemSpec

ACCEPTANCE_LINES = []


@pytest.fixture
def paper_spec():
    return paper_system()


@pytest.fixture
def bare_spec():
    """One spin-1/2 nucleus with no hyperfine coupling."""
    return SystemSpec((Nucleus(0.5, np.zeros((3, 3))),))


@pytest.fixture
def fig2b_params():
    return paper_params(B_field=(0, 0, 49.0))


@pytest.fixture
def acceptance_report():
    def record(number, title, ok, detail):
        ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} -- {detail}")

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)


# Expensive paper scenarios, shared across modules. rho samples every 0.1 us.
RHO_STRIDE = 100


@pytest.fixture(scope="session")
def scenarios():
    from zenochem.experiments import builtin_scenarios

    return builtin_scenarios()


@pytest.fixture(scope="session")
def fig2b_result(scenarios):
    from zenochem.experiments import run_scenario

    return run_scenario(scenarios["fig2b-lowfield"], rho_stride=RHO_STRIDE)


@pytest.fixture(scope="session")
def fig2c_result(scenarios):
    from zenochem.experiments import run_scenario

    return run_scenario(scenarios["fig2c-lowfield-phenomenological"], rho_stride=RHO_STRIDE)


@pytest.fixture(scope="session")
def fig3_results(scenarios):
    """kSR -> ScenarioResult for the relaxation family."""
    from zenochem.experiments import run_scenario

    scen = scenarios["fig3-relaxation"]
    return {k: run_scenario(scen, kSR=k, rho_stride=RHO_STRIDE) for k in scen.sweep_ksr}


@pytest.fixture(scope="session")
def highfield_result(scenarios):
    from zenochem.experiments import run_scenario

    return run_scenario(scenarios["fig2-highfield"], rho_stride=RHO_STRIDE)
