import pytest

from markov_billiard.rng import stream


@pytest.fixture
def rng(request):
    """Stream keyed by the test name, so tests do not share draws."""
    return stream(20261016, 0, request.node.name)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import SUMMARIES
    if SUMMARIES:
        terminalreporter.section("acceptance criteria")
        for line in SUMMARIES:
            terminalreporter.write_line(line)
