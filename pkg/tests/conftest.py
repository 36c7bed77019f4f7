import numpy as np
import pytest

# "PASS|FAIL criterion k: ..." lines collected by the acceptance module
ACCEPTANCE_LINES = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_sparse_codes(rng, n, N, s):
    X = np.zeros((n, N))
    for i in range(N):
        support = rng.choice(n, size=s, replace=False)
        X[support, i] = rng.normal(size=s)
    return X


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
