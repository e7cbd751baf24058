import numpy as np
import pytest

from sodm.data import Dataset


@pytest.fixture
def tiny_dataset():
    """Four well-spread 2-D points with mixed labels."""
    return Dataset.from_arrays(
        [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]],
        [1.0, 1.0, -1.0, -1.0],
    )


def make_dataset(feats, labels):
    return Dataset.from_arrays(np.asarray(feats, dtype=float), labels)
