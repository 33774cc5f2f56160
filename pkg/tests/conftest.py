import numpy as np
import pytest

from circsr.signal import SamplingGeometry, SignalRecord


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def make_record():
    def _make(data, rate=1.0, record_id="r"):
        return SignalRecord(np.asarray(data, dtype=float), rate, record_id)

    return _make


@pytest.fixture
def geom():
    def _geom(d_c, f, C=1):
        return SamplingGeometry.from_lr(C, d_c, f)

    return _geom
