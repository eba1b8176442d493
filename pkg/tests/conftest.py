import numpy as np
import pytest

from camp.model import geometric_singular_values, measure, sample_partial_hadamard, sample_signal, SignalPrior


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_problem(M, N, kappa, seed=0, rho=0.1, noise_variance=1e-3):
    """Partial-Hadamard problem with geometric singular values."""
    rng = np.random.default_rng(seed)
    ens = sample_partial_hadamard(M, N, geometric_singular_values(M, N, kappa), rng)
    x = sample_signal(SignalPrior(rho), N, rng)
    return ens, x, measure(ens, x, noise_variance, rng)


ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
