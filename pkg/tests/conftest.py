import numpy as np
import pytest

from segroute.volume import PayloadKind, Volume


def hu_volume(data, spacing=(1.0, 1.0, 1.0), orientation="LPS"):
    return Volume.hu(np.asarray(data, dtype=np.int16), spacing, orientation)


def real_volume(data, spacing=(1.0, 1.0, 1.0), orientation="LPS"):
    return Volume.real(np.asarray(data, dtype=np.float64), spacing, orientation)


def mask_volume(data, spacing=(1.0, 1.0, 1.0), orientation="LPS"):
    return Volume.mask(np.asarray(data, dtype=np.uint8), spacing, orientation)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_volume(rng, dims, kind=PayloadKind.REAL):
    if kind is PayloadKind.HU:
        data = rng.integers(-1024, 2000, size=dims).astype(np.int16)
        return Volume.hu(data, (1.0, 1.0, 1.0), "LPS")
    if kind is PayloadKind.MASK:
        return Volume.mask(rng.integers(0, 2, size=dims).astype(np.uint8), (1.0, 1.0, 1.0), "LPS")
    return Volume.real(rng.uniform(0.0, 1.0, size=dims), (1.0, 1.0, 1.0), "LPS")
