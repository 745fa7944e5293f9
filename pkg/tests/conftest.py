from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from splim.matrix_io import CooMatrix

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture
def data_dir():
    return DATA_DIR


def random_coo(rng, n_rows, n_cols, density, integer=False):
    mask = rng.random((n_rows, n_cols)) < density
    r, c = np.nonzero(mask)
    v = rng.integers(-5, 6, r.size).astype(float) if integer else rng.standard_normal(r.size)
    return CooMatrix.from_arrays(n_rows, n_cols, r, c, v)
