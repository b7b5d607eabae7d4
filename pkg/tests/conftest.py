import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240901)


def random_partition(rng, n, max_k=None):
    """Random canonical label vector of length n."""
    max_k = n if max_k is None else max_k
    labels = rng.integers(0, rng.integers(1, max_k + 1), size=n)
    from telescopic.partitions import canonicalize

    return canonicalize(labels.tolist())
