import numpy as np
import pytest

from broadband_mps.mps import MpsState


def random_state(rng: np.random.Generator, n_sites: int, d: int, chi: int) -> MpsState:
    """Random (unnormalized, non-canonical) MPS with bond dimension up to ``chi``."""
    dims = [1] + [min(chi, d ** min(k, n_sites - k)) for k in range(1, n_sites)] + [1]
    tensors = [
        rng.normal(size=(dims[k], d, dims[k + 1])) + 1j * rng.normal(size=(dims[k], d, dims[k + 1]))
        for k in range(n_sites)
    ]
    return MpsState(tensors, d)


def random_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{label}: {'PASS' if ok else 'FAIL'} ({detail})"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
