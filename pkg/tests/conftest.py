import numpy as np
import pytest

import rxindex as rx


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Pay any one-time kernel compile cost before timed tests run."""
    keys = np.arange(64, dtype=np.uint64)
    for name in ("rx", "sa", "ht", "bp"):
        idx = rx.build_named_index(name, keys)
        idx.point_lookup_batch(np.array([3, 200], dtype=np.uint64))
        if name != "ht":
            idx.range_lookup_batch(
                np.array([2], dtype=np.uint64), np.array([9], dtype=np.uint64)
            )
