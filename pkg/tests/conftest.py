import numpy as np
import pytest

from icsdetect.detection import TableCache

ACCEPTANCE_RESULTS = []


def record(criterion, passed, detail):
    """Store one acceptance verdict; all verdicts are echoed in the terminal summary."""
    ACCEPTANCE_RESULTS.append((criterion, bool(passed), detail))
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE_RESULTS, key=lambda r: r[0]):
        terminalreporter.write_line(f"{criterion}: {'PASS' if passed else 'FAIL'} - {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def tables():
    """In-memory table cache shared by the whole session."""
    return TableCache()


def random_affine(p, rng, spread=1.0):
    """Well-conditioned random full-rank map and shift."""
    Q1, _ = np.linalg.qr(rng.standard_normal((p, p)))
    Q2, _ = np.linalg.qr(rng.standard_normal((p, p)))
    A = Q1 @ np.diag(np.exp(rng.uniform(-spread, spread, p))) @ Q2
    return A, rng.normal(0.0, 3.0, p)
