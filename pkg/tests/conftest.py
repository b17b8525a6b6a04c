import pytest

from siqrng.model import reference_receiver

# lines reported by the acceptance module, printed once at the end of the run
ACCEPTANCE_LINES = []


@pytest.fixture
def reference_model():
    return reference_receiver()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
