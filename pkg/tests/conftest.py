import numpy as np
import pytest

from mixdisc.data import Dataset, cell_patterns
from mixdisc.simulation import ExperimentSpec, generate_dataset


def random_dataset(rng, n, p, d, q, scale=1.0):
    """Unstructured mixed data; every group is guaranteed at least one row when n >= q."""
    X = rng.normal(scale=scale, size=(n, p))
    Y = rng.integers(0, 2, size=(n, d))
    z = rng.integers(1, q + 1, size=n)
    z[:q] = np.arange(1, q + 1)[: min(q, n)]
    return Dataset(X, Y, z, q=q)


def reference_sample(n_per_group, seed, replication=0):
    """Training sample of the two-group reference design."""
    return generate_dataset(ExperimentSpec(seed=seed).with_size(n_per_group), replication)[0]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def patterns():
    return cell_patterns


ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def record(number: int, title: str, ok: bool, detail: str) -> bool:
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        ACCEPTANCE[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
