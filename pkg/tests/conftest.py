import numpy as np
import pytest

from helpers import SQRT_HALF, make_group


@pytest.fixture
def three_vector_fixture():
    """Three majority rollouts with embeddings (1,0), (0,1), (sqrt2/2, sqrt2/2)."""
    vecs = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([SQRT_HALF, SQRT_HALF])]
    return make_group(["5", "5", "5"], vecs)
