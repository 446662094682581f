import numpy as np
import pytest

from qlab.core import Dataset, Method, reference_dataset, reference_model


@pytest.fixture(scope="session")
def ref_data() -> Dataset:
    return reference_dataset()


@pytest.fixture(scope="session")
def published_independent():
    return reference_model(Method.INDEPENDENT)


@pytest.fixture(scope="session")
def published_cjqr():
    return reference_model(Method.CJQR)


def random_dataset(rng: np.random.Generator, n: int, p: int = 2, ties: bool = False) -> Dataset:
    cov = rng.uniform(0.0, 10.0, size=(n, p - 1))
    y = 1.0 + 0.3 * cov.sum(axis=1) + rng.standard_normal(n)
    if ties:
        y = np.round(y)
    return Dataset.from_arrays(cov, y)


# One line per acceptance clause, printed after the run (see test_acceptance.py).
VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
