import numpy as np
import pytest

from trek import BlockLayout, FunctionalDataset, GaussianKernel, gram

ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> str:
    """Print and remember one acceptance line."""
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def random_dataset(rng, r, spread=True) -> FunctionalDataset:
    """Sorted uniform locations and standard normal values for block sizes ``r``."""
    locs = [np.sort(rng.uniform(0, 1, ri)) for ri in r]
    vals = [rng.standard_normal(ri) for ri in r]
    return FunctionalDataset.from_blocks(locs, vals)


def random_spd(rng, n, cond=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    w = np.geomspace(1.0, cond, n)
    S = (Q * w) @ Q.T
    return 0.5 * (S + S.T)


def random_projector(rng, n, k):
    C = rng.standard_normal((n, k))
    Q, _ = np.linalg.qr(C)
    P = Q @ Q.T
    return 0.5 * (P + P.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_gram(rng):
    lay = BlockLayout((2, 3, 4))
    locs = [np.sort(rng.uniform(0, 1, ri)) for ri in lay.r]
    return gram(GaussianKernel(3.0), lay, locs)
