"""Discrete PI pre-position unit and stability analysis.

The PI unit integrates the scaled LR error with the rectangle rule::

    s_p <- s_p + lam * dt * s_e

Stability analysis works with the Jacobian ``Q1`` of ``LS = LR o SR``. Its
scalar summary ``q1`` is the mean of all ``d*d`` entries, which
:func:`estimate_q1` obtains from a single directional difference along the
all-ones vector (``1^T Q1 1`` is the entry sum).

Note on scale: when ``Q1 = c*I`` the mean entry is ``c/d``, not ``c``. The
gain that actually governs the iteration ``s_e <- (I - lam*dt*Q1) s_e`` is the
Rayleigh quotient along the ones vector, ``d * q1``; :func:`loop_gain` and
:func:`spectral_midpoint` use that scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, NonFiniteError, ParameterError


@dataclass(frozen=True)
class PiState:
    s_p: np.ndarray
    lam: float
    dt: float = 1.0

    def __post_init__(self):
        s_p = np.array(self.s_p, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(s_p)):
            raise NonFiniteError("PI accumulator is non-finite")
        if not math.isfinite(self.lam):
            raise ParameterError(f"lambda must be finite, got {self.lam}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        s_p.setflags(write=False)
        object.__setattr__(self, "s_p", s_p)


def pi_step(state: PiState, s_e) -> PiState:
    s_e = np.asarray(s_e, dtype=np.float64).reshape(-1)
    if s_e.size != state.s_p.size:
        raise DimensionError(f"error has length {s_e.size}, accumulator {state.s_p.size}")
    if not np.all(np.isfinite(s_e)):
        raise NonFiniteError("PI input error is non-finite")
    return PiState(state.s_p + (state.lam * state.dt) * s_e, state.lam, state.dt)


def estimate_q1(ls: Callable[[np.ndarray], np.ndarray], base, epsilon: float = 1e-6) -> float:
    """Mean entry of the Jacobian of ``ls`` at ``base``.

    ``q1 = sum(LS(base + eps*1) - LS(base)) / (d**2 * eps)``. Exact up to
    rounding when ``ls`` is affine.
    """
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise ParameterError(f"epsilon must be > 0, got {epsilon}")
    base = np.asarray(base, dtype=np.float64).reshape(-1)
    d = base.size
    y0 = np.asarray(ls(base), dtype=np.float64).reshape(-1)
    y1 = np.asarray(ls(base + epsilon), dtype=np.float64).reshape(-1)
    if y0.size != d or y1.size != d:
        raise DimensionError(f"LS must map R^{d} to R^{d}, got output length {y0.size}")
    if not (np.all(np.isfinite(y0)) and np.all(np.isfinite(y1))):
        raise NonFiniteError("LS produced non-finite output")
    q1 = float(np.sum(y1 - y0)) / (d * d * epsilon)
    if not math.isfinite(q1):
        raise NonFiniteError("q1 estimate is non-finite")
    return q1


def loop_gain(q1: float, d: int) -> float:
    """Scalar gain ``g`` such that ``Q1 ~ g*I`` along the ones vector (``d * q1``)."""
    return d * q1


def spectral_midpoint(q1: float, d: int, dt: float = 1.0) -> float:
    """Gain ``lam`` that zeroes ``1 - dt*lam*g`` for ``g = loop_gain(q1, d)``."""
    g = loop_gain(q1, d)
    if g == 0:
        raise ParameterError("q1 is zero; no finite stabilizing gain")
    return 1.0 / (dt * g)


@dataclass(frozen=True)
class LambdaBounds:
    """Stability interval for the scalar gain.

    ``lower``/``upper`` are the Frobenius-norm bounds; ``spectral_upper`` is
    ``2/(dt*q1)``, the edge of ``|1 - dt*q1*lam| < 1``.
    """

    lower: float
    upper: float
    q1: float
    d: int
    dt: float
    spectral_upper: float

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, lam: float) -> bool:
        return self.lower < lam < self.upper


def lambda_bounds(q1: float, d: int, dt: float = 1.0) -> LambdaBounds:
    if q1 == 0 or not math.isfinite(q1):
        raise ParameterError(f"q1 must be finite and non-zero, got {q1}")
    if int(d) != d or d < 1:
        raise ParameterError(f"d must be an integer >= 1, got {d}")
    if not (math.isfinite(dt) and dt > 0):
        raise ParameterError(f"dt must be > 0, got {dt}")
    root = 1.0 / math.sqrt(d)
    a = (1.0 - root) / (dt * q1)
    b = (1.0 + root) / (dt * q1)
    lower, upper = (a, b) if q1 > 0 else (b, a)
    return LambdaBounds(lower, upper, float(q1), int(d), float(dt), 2.0 / (dt * q1))
