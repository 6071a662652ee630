import os

# Let determinism tests vary the kernel thread count even on a
# single-core box; must be set before numba is first imported.
os.environ.setdefault("NUMBA_NUM_THREADS", "2")

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("ci", deadline=None, max_examples=50)
settings.load_profile("ci")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
