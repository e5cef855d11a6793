import pytest

from magnon_link.model import SystemParams

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_report(request):
    """Collects one line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash[_LINES]

    def report(number: int, passed: bool, text: str):
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {text}"
        lines.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_params():
    return SystemParams()


@pytest.fixture(scope="session")
def closed_params():
    return SystemParams(gamma_q=0.0, gamma_phi=0.0, kappa_c=0.0, kappa_mL=0.0, kappa_mR=0.0)
