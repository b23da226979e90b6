import numpy as np
import pytest

from smcvar.experiment import two_state_hmm


@pytest.fixture
def chain3():
    """Two-state chain, uniform proposal, observations 0, 1, 1."""
    return two_state_hmm((0, 1, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
