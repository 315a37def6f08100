import numpy as np
import pytest
from scipy.linalg import expm

from levent import analysis, riccati
from levent.gaussian import OMEGA
from levent.model import ModelConfig


def random_symplectic(rng, scale=0.5):
    """exp(Omega H) with H symmetric is symplectic for the local Omega."""
    H = rng.normal(scale=scale, size=(4, 4))
    return expm(OMEGA @ (H + H.T) / 2)


def local_symplectic(rng, scale=0.5):
    blocks = []
    for _ in range(2):
        H = rng.normal(scale=scale, size=(2, 2))
        blocks.append(expm(OMEGA[:2, :2] @ (H + H.T) / 2))
    S = np.zeros((4, 4))
    S[:2, :2], S[2:, 2:] = blocks
    return S


@pytest.fixture(scope="session")
def base_cfg():
    return ModelConfig()


@pytest.fixture(scope="session")
def static_cfg():
    return ModelConfig(alpha=0.0)


@pytest.fixture(scope="session")
def steady_base(base_cfg):
    return analysis.solve_steady(base_cfg)


@pytest.fixture(scope="session")
def steady_static(static_cfg):
    return analysis.solve_steady(static_cfg)


@pytest.fixture(scope="session")
def coarse_numerics():
    return analysis.Numerics(steps_per_period=500)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


__all__ = ["random_symplectic", "local_symplectic", "riccati", "ACCEPTANCE"]


# one line per acceptance criterion, echoed after the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
