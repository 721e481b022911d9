import numpy as np
import pytest

from attnfc.synthetic import write_jhu_fixture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def jhu_dir(tmp_path_factory):
    return write_jhu_fixture(tmp_path_factory.mktemp("jhu"))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
