import pytest

from metadiag.data import telomerase_dataset
from metadiag.inference.marginals import posterior_marginals
from metadiag.model import PriorBundle


@pytest.fixture(scope="session")
def telomerase():
    return telomerase_dataset()


@pytest.fixture(scope="session")
def telomerase_fit(telomerase):
    """Default PC priors with intercept variance 1000."""
    return posterior_marginals(telomerase, PriorBundle(intercept_prior_variance=1000.0))


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
