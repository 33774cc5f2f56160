import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from circsr.degrade import (
    BaselineWander,
    DownsampleKind,
    EmgLike,
    NoiseSpec,
    apply_lr,
    downsample,
    downsample_array,
    interpolate,
)
from circsr.errors import GeometryError, ParameterError
from circsr.signal import SignalRecord
from circsr.sr import SrOperatorSpec, apply_sr

KINDS = list(DownsampleKind)


def catmull_rom_at(x, p):
    """Scalar Catmull-Rom evaluation with clamped indices, written independently."""
    i = int(np.floor(p))
    t = p - i
    get = lambda k: x[min(max(k, 0), len(x) - 1)]  # noqa: E731
    p0, p1, p2, p3 = get(i - 1), get(i), get(i + 1), get(i + 2)
    return 0.5 * (
        2 * p1
        + (-p0 + p2) * t
        + (2 * p0 - 5 * p1 + 4 * p2 - p3) * t**2
        + (-p0 + 3 * p1 - 3 * p2 + p3) * t**3
    )


def test_constant_nearest():
    out = downsample(SignalRecord(np.ones((1, 20)), 100.0), 10, "nearest")
    np.testing.assert_array_equal(out.data, [[1.0, 1.0]])
    assert out.sampling_rate_hz == 10.0


@pytest.mark.parametrize("kind", KINDS)
def test_ptbxl_length(kind):
    out = downsample(SignalRecord(np.random.default_rng(0).normal(size=(12, 2500)), 500.0), 10, kind)
    assert out.data.shape == (12, 250)
    assert out.sampling_rate_hz == 50.0


def test_area_block_mean():
    np.testing.assert_array_equal(downsample_array(np.arange(10.0), 2, "area"), [[0.5, 2.5, 4.5, 6.5, 8.5]])


@pytest.mark.parametrize("f", [2, 3, 4, 5, 10])
@pytest.mark.parametrize("kind,flag", [
    ("nearest", cv2.INTER_NEAREST), ("linear", cv2.INTER_LINEAR), ("area", cv2.INTER_AREA),
])
def test_matches_opencv_resize(kind, flag, f, rng):
    x = rng.normal(size=(1, 12 * f))
    ref = cv2.resize(x, (12, 1), interpolation=flag)
    np.testing.assert_allclose(downsample_array(x, f, kind), ref, rtol=0, atol=1e-7)


@pytest.mark.parametrize("f", [2, 3, 4, 7])
def test_cubic_matches_scalar_reference(f, rng):
    x = rng.normal(size=9 * f)
    expected = [catmull_rom_at(x, i * f + (f - 1) / 2) for i in range(9)]
    np.testing.assert_allclose(downsample_array(x, f, "cubic")[0], expected, atol=1e-12)


def test_interpolate_cubic_passes_through_nodes(rng):
    x = rng.normal(size=(2, 11))
    np.testing.assert_allclose(interpolate(x, np.arange(11.0), "cubic"), x, atol=1e-14)


@pytest.mark.parametrize("kind", KINDS)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**16))
@settings(max_examples=25, deadline=None)
def test_linearity(kind, a, b, seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(2, 1, 30))
    lhs = downsample_array(a * x + b * y, 3, kind)
    rhs = a * downsample_array(x, 3, kind) + b * downsample_array(y, 3, kind)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * (abs(a) + abs(b) + 1))


@pytest.mark.parametrize("kind", KINDS)
@given(c=st.floats(-1e3, 1e3, allow_nan=False))
@settings(max_examples=20, deadline=None)
def test_constants_are_fixed_points(kind, c):
    out = downsample_array(np.full((2, 20), c), 4, kind)
    np.testing.assert_allclose(out, c, rtol=1e-15, atol=0)


@given(arrays(np.float64, st.integers(2, 40), elements=st.floats(-1e6, 1e6)), st.integers(2, 6))
@settings(max_examples=40, deadline=None)
def test_nearest_after_replication_is_identity(x, f):
    from circsr.signal import SamplingGeometry

    op = SrOperatorSpec.replication(SamplingGeometry.from_lr(1, x.size, f))
    np.testing.assert_array_equal(downsample_array(apply_sr(op, x), f, "nearest")[0], x)


class TestErrors:
    def test_non_divisible(self):
        with pytest.raises(GeometryError):
            downsample_array(np.zeros(10), 3, "nearest")

    def test_factor_too_small(self):
        with pytest.raises(GeometryError):
            downsample_array(np.zeros(10), 1, "nearest")

    def test_unknown_kernel(self):
        with pytest.raises(ParameterError):
            DownsampleKind.parse("spline")


class TestApplyLr:
    def test_zero_noise_is_downsample(self, rng):
        sr = SignalRecord(rng.normal(size=(2, 40)), 100.0)
        a = apply_lr(sr, 4, "cubic", NoiseSpec(0.0, 3))
        assert a.data.tobytes() == downsample(sr, 4, "cubic").data.tobytes()

    def test_deterministic(self, rng):
        sr = SignalRecord(rng.normal(size=(1, 40)))
        spec = NoiseSpec(0.1, 42)
        assert apply_lr(sr, 4, "nearest", spec).data.tobytes() == apply_lr(sr, 4, "nearest", spec).data.tobytes()

    def test_noise_std(self):
        sr = SignalRecord(np.zeros((1, 20000)), 500.0)
        residual = apply_lr(sr, 2, "nearest", NoiseSpec(0.1, 5)).data - downsample(sr, 2).data
        assert residual.size == 10000
        assert 0.095 <= residual.std() <= 0.105

    def test_baseline_wander_amplitude(self):
        sr = SignalRecord(np.zeros((3, 5000)), 500.0)
        out = apply_lr(sr, 5, "nearest", NoiseSpec(0.0, 1, BaselineWander(0.2, 0.5)))
        np.testing.assert_allclose(np.abs(out.data).max(axis=1), 0.2, rtol=1e-3)

    def test_emg_like_is_highpassed(self):
        sr = SignalRecord(np.zeros((1, 20000)), 1000.0)
        out = apply_lr(sr, 2, "nearest", NoiseSpec(0.0, 1, EmgLike(0.1, 20.0))).data[0]
        spec = np.abs(np.fft.rfft(out)) ** 2
        freqs = np.fft.rfftfreq(out.size, 1 / 500.0)
        low = spec[(freqs > 0) & (freqs < 2)].mean()
        high = spec[(freqs > 50) & (freqs < 200)].mean()
        assert low < 0.01 * high

    def test_emg_cutoff_above_nyquist(self):
        sr = SignalRecord(np.zeros((1, 200)), 100.0)
        with pytest.raises(ParameterError):
            apply_lr(sr, 2, "nearest", NoiseSpec(0.0, 1, EmgLike(0.1, 40.0)))

    def test_negative_sigma(self):
        with pytest.raises(ParameterError):
            NoiseSpec(-1.0)
