import numpy as np
import pytest

from detbb84.channel import DetectorParams, FiberParams
from detbb84.core import PhotonStatistics, SourceModel
from detbb84.protocol import SessionConfig, Variant, run_session
from detbb84.timing import timing_for_fiber


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def lossless_fiber():
    return FiberParams(alpha=0.0, length=10.0, receiver_loss=0.0)


@pytest.fixture
def ideal_detector():
    return DetectorParams(efficiency=1.0, dark_prob=0.0, error_prob=0.0)


@pytest.fixture
def single_photon():
    return SourceModel(1.0, PhotonStatistics.SINGLE)


def lossless_session(variant=Variant.DET_PRACTICAL, n_target=50, seed=0, adversary=None, **cfg):
    """One session over a lossless, noiseless 10 km link with a single-photon source."""
    fiber = FiberParams(alpha=0.0, length=10.0, receiver_loss=0.0)
    det = DetectorParams(efficiency=1.0, dark_prob=0.0, error_prob=0.0)
    timing = timing_for_fiber(fiber, delta_cap=100, delta=50, delta_prime=60, epsilon=10)
    source = SourceModel(1.0, PhotonStatistics.SINGLE)
    scfg = SessionConfig(n_target=n_target, variant=variant, **cfg)
    kwargs = {} if adversary is None else {"adversary": adversary}
    return run_session(scfg, fiber, det, timing, source, rng=seed, **kwargs)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
