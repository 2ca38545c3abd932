import numpy as np
import pytest

from cmc_credit.model import ModelParams, TendencyDistribution, TransitionMatrix

SYNTH_P = np.array([
    [0.80, 0.15, 0.04, 0.01],
    [0.10, 0.75, 0.12, 0.03],
    [0.03, 0.12, 0.75, 0.10],
])
SYNTH_Q = np.array([[0.3, 0.6], [0.5, 0.2], [0.7, 0.4]])


def synthetic_params() -> ModelParams:
    pp = TransitionMatrix(SYNTH_P).p_plus
    chi = 0.5 * TendencyDistribution.independent(pp).mass + 0.5 * TendencyDistribution.comonotone(pp).mass
    return ModelParams.from_arrays(SYNTH_P, SYNTH_Q, chi)


def zero_default_params() -> ModelParams:
    p = np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0]])
    pp = TransitionMatrix(p).p_plus
    return ModelParams.from_arrays(p, [[0.5], [0.5]], TendencyDistribution.independent(pp).mass)


@pytest.fixture
def synth():
    return synthetic_params()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
