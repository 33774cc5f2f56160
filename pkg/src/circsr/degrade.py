"""Degradation model: deterministic down-sampling plus optional additive noise.

Kernel conventions (per channel, LR index ``i``, factor ``f``)
--------------------------------------------------------------
nearest
    ``y[i] = x[i*f]`` (phase 0, the first sample of each block).
area
    ``y[i] = mean(x[i*f : (i+1)*f])``.
linear, cubic
    The order-1 / order-3 interpolant of ``x`` evaluated at the block centre
    ``i*f + (f-1)/2``. This is the half-sample alignment used by common image
    resizers for downscaling. Cubic is Catmull-Rom (Keys ``a = -0.5``).

Interpolants clamp indices to ``[0, n-1]`` (edge replication). The same
interpolants back the ``interp`` SR operators in :mod:`circsr.sr`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import signal as sps

from .errors import DimensionError, GeometryError, ParameterError
from .signal import SignalRecord

CUBIC_A = -0.5


class DownsampleKind(str, enum.Enum):
    NEAREST = "nearest"
    LINEAR = "linear"
    CUBIC = "cubic"
    AREA = "area"

    @classmethod
    def parse(cls, value) -> "DownsampleKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise ParameterError(f"unknown kernel {value!r}; choose one of {names}") from None


@dataclass(frozen=True)
class BaselineWander:
    """Low-frequency sinusoid with a random phase per channel."""

    amplitude: float
    freq_hz: float

    def __post_init__(self):
        if not (self.amplitude > 0 and self.freq_hz > 0):
            raise ParameterError("baseline wander amplitude and frequency must be positive")


@dataclass(frozen=True)
class EmgLike:
    """Gaussian noise passed through a 2nd-order Butterworth high-pass."""

    sigma: float
    highpass_hz: float

    def __post_init__(self):
        if not (self.sigma > 0 and self.highpass_hz > 0):
            raise ParameterError("EMG-like sigma and high-pass cutoff must be positive")


Artifact = Union[BaselineWander, EmgLike, None]


@dataclass(frozen=True)
class NoiseSpec:
    sigma: float = 0.0
    seed: int = 0
    artifact: Artifact = None

    def __post_init__(self):
        if not (math.isfinite(self.sigma) and self.sigma >= 0):
            raise ParameterError(f"noise sigma must be finite and >= 0, got {self.sigma}")

    @property
    def is_silent(self) -> bool:
        return self.sigma == 0 and self.artifact is None


# ---------------------------------------------------------------------------
# Interpolants
# ---------------------------------------------------------------------------


def _keys_weights(t: np.ndarray, a: float = CUBIC_A) -> np.ndarray:
    """Weights for samples at offsets -1, 0, 1, 2 given fractional part t."""
    s = np.stack([t + 1.0, t, 1.0 - t, 2.0 - t])
    s = np.abs(s)
    near = (a + 2) * s**3 - (a + 3) * s**2 + 1
    far = a * s**3 - 5 * a * s**2 + 8 * a * s - 4 * a
    return np.where(s <= 1, near, np.where(s < 2, far, 0.0))


def interpolate(x: np.ndarray, positions: np.ndarray, kind) -> np.ndarray:
    """Evaluate the interpolant of each row of ``x`` at fractional ``positions``.

    ``x`` has shape ``(C, n)``; the result has shape ``(C, len(positions))``.
    ``nearest`` and ``area`` both take ``x[floor(p)]`` here (piecewise-constant
    reconstruction), which is what those kernels mean when enlarging.
    """
    kind = DownsampleKind.parse(kind)
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    p = np.asarray(positions, dtype=np.float64)
    base = np.floor(p).astype(np.int64)
    frac = p - base
    if kind in (DownsampleKind.NEAREST, DownsampleKind.AREA):
        return x[..., np.clip(base, 0, n - 1)]
    if kind is DownsampleKind.LINEAR:
        lo = np.clip(base, 0, n - 1)
        hi = np.clip(base + 1, 0, n - 1)
        return x[..., lo] * (1.0 - frac) + x[..., hi] * frac
    weights = _keys_weights(frac)
    out = np.zeros(x.shape[:-1] + p.shape)
    for k, offset in enumerate((-1, 0, 1, 2)):
        out += x[..., np.clip(base + offset, 0, n - 1)] * weights[k]
    return out


# ---------------------------------------------------------------------------
# Down-sampling
# ---------------------------------------------------------------------------


def downsample_array(x: np.ndarray, f: int, kind) -> np.ndarray:
    """Down-sample each row of a ``(C, n)`` array by integer factor ``f``."""
    kind = DownsampleKind.parse(kind)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if int(f) != f or f < 2:
        raise GeometryError(f"down-sampling factor must be an integer >= 2, got {f}")
    f = int(f)
    n = x.shape[-1]
    if n % f:
        raise GeometryError(f"length {n} is not divisible by factor {f}")
    m = n // f
    if kind is DownsampleKind.NEAREST:
        return x[:, ::f].copy()
    if kind is DownsampleKind.AREA:
        return x.reshape(x.shape[0], m, f).mean(axis=2)
    centres = np.arange(m) * f + (f - 1) / 2.0
    return interpolate(x, centres, kind)


def downsample(sr: SignalRecord, f: int, kind=DownsampleKind.NEAREST) -> SignalRecord:
    data = downsample_array(sr.data, f, kind)
    return sr.with_data(data, sampling_rate_hz=sr.sampling_rate_hz / f)


def sample_noise(shape, rate_hz: float, noise: NoiseSpec) -> np.ndarray:
    """Draw the additive noise for an LR array of ``shape`` (C, n)."""
    rng = np.random.default_rng(noise.seed)
    out = np.zeros(shape)
    if noise.sigma > 0:
        out += rng.normal(0.0, noise.sigma, size=shape)
    art = noise.artifact
    if isinstance(art, BaselineWander):
        t = np.arange(shape[1]) / rate_hz
        phase = rng.uniform(0, 2 * np.pi, size=(shape[0], 1))
        out += art.amplitude * np.sin(2 * np.pi * art.freq_hz * t[None, :] + phase)
    elif isinstance(art, EmgLike):
        nyquist = rate_hz / 2
        if art.highpass_hz >= nyquist:
            raise ParameterError(
                f"EMG high-pass {art.highpass_hz} Hz must be below Nyquist {nyquist} Hz"
            )
        sos = sps.butter(2, art.highpass_hz, btype="highpass", fs=rate_hz, output="sos")
        white = rng.normal(0.0, art.sigma, size=shape)
        out += sps.sosfiltfilt(sos, white, axis=-1) if shape[1] > 15 else sps.sosfilt(sos, white, axis=-1)
    elif art is not None:
        raise ParameterError(f"unknown artifact {art!r}")
    return out


def apply_lr(
    sr: SignalRecord,
    f: int,
    kind=DownsampleKind.NEAREST,
    noise: Optional[NoiseSpec] = None,
) -> SignalRecord:
    """``DS(sr) + n`` with noise added after down-sampling."""
    lr = downsample(sr, f, kind)
    if noise is None or noise.is_silent:
        return lr
    n = sample_noise(lr.data.shape, lr.sampling_rate_hz, noise)
    return lr.with_data(lr.data + n)


def lr_vector(x: np.ndarray, channels: int, f: int, kind, noise: Optional[NoiseSpec] = None,
              rate_hz: float = 1.0) -> np.ndarray:
    """Flat-vector form of :func:`apply_lr` used inside the loop engine."""
    x = np.asarray(x, dtype=np.float64)
    if x.size % channels:
        raise DimensionError(f"vector length {x.size} does not split into {channels} channels")
    y = downsample_array(x.reshape(channels, -1), f, kind)
    if noise is not None and not noise.is_silent:
        y = y + sample_noise(y.shape, rate_hz, noise)
    return y.reshape(-1)
