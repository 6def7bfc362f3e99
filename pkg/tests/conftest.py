import logging

import numpy as np
import pytest


@pytest.fixture(autouse=True)
def _quiet_monitors():
    # soft-bound monitors warn on purpose in some runs; keep test output readable
    logging.getLogger("vortexflow").setLevel(logging.ERROR)
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
