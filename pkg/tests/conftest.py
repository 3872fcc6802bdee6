import numpy as np
import pytest

from torusdisc import _backend


@pytest.fixture(params=_backend.available())
def backend(request):
    return request.param


def random_table(rng: np.random.Generator, size: int) -> np.ndarray:
    return rng.integers(0, size, size=size).astype(np.int64)
