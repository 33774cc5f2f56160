"""PSNR and global SSIM with 8-bit range constants.

Both metrics work on whole flattened vectors with population (``1/D``)
statistics. By default signals are first mapped to ``[0, 255]`` using the
reference's global min/max (see :func:`normalize_to_255`), because the
constants ``255**2``, ``(0.01*255)**2`` and ``(0.03*255)**2`` assume that range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Literal, Optional

import numpy as np

from .errors import DimensionError, NonFiniteError
from .signal import SignalRecord

PEAK = 255.0
C1 = (0.01 * PEAK) ** 2
C2 = (0.03 * PEAK) ** 2

Normalization = Literal["raw", "ref_minmax_255"]


def _vectors(reference, candidate):
    x = reference.flat if isinstance(reference, SignalRecord) else np.asarray(reference, dtype=np.float64).reshape(-1)
    y = candidate.flat if isinstance(candidate, SignalRecord) else np.asarray(candidate, dtype=np.float64).reshape(-1)
    if x.size != y.size:
        raise DimensionError(f"reference has {x.size} samples, candidate {y.size}")
    return x, y


def normalize_to_255(reference, candidate):
    """Map both signals through ``255 * (v - min_ref) / (max_ref - min_ref)``.

    A constant reference maps both signals to zeros.
    """
    x, y = _vectors(reference, candidate)
    lo, hi = float(np.min(x)), float(np.max(x))
    if hi == lo:
        return np.zeros_like(x), np.zeros_like(y)
    scale = PEAK / (hi - lo)
    return (x - lo) * scale, (y - lo) * scale


def psnr(reference, candidate) -> float:
    """``10 log10(255^2 / MSE)`` in dB; ``inf`` when the signals are identical."""
    x, y = _vectors(reference, candidate)
    if x.size < 1:
        raise DimensionError("PSNR needs at least one sample")
    mse = float(np.mean((y - x) ** 2))
    if not math.isfinite(mse):
        raise NonFiniteError("PSNR inputs are non-finite")
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(PEAK**2 / mse)


def ssim(reference, candidate) -> float:
    x, y = _vectors(reference, candidate)
    if x.size < 2:
        raise DimensionError("SSIM needs at least two samples")
    mx, my = x.mean(), y.mean()
    vx = np.mean((x - mx) ** 2)
    vy = np.mean((y - my) ** 2)
    cov = np.mean((x - mx) * (y - my))
    num = (2 * mx * my + C1) * (2 * cov + C2)
    den = (mx**2 + my**2 + C1) * (vx + vy + C2)
    value = float(num / den)
    if not math.isfinite(value):
        raise NonFiniteError("SSIM inputs are non-finite")
    return value


@dataclass(frozen=True)
class MetricReport:
    psnr_db: float
    ssim: float
    normalization: str = "ref_minmax_255"
    per_channel: Optional[tuple] = None

    @property
    def psnr_infinite(self) -> bool:
        return math.isinf(self.psnr_db)


def _pair(reference, candidate, normalization: str):
    if normalization == "raw":
        return _vectors(reference, candidate)
    if normalization == "ref_minmax_255":
        return normalize_to_255(reference, candidate)
    raise ValueError(f"unknown normalization {normalization!r}")


def evaluate(reference, candidate, normalization: Normalization = "ref_minmax_255",
             per_channel: bool = False) -> MetricReport:
    """PSNR and SSIM of ``candidate`` against ``reference``.

    With ``per_channel`` and record inputs, each channel is also scored on its
    own (normalized with that channel's reference range).
    """
    x, y = _pair(reference, candidate, normalization)
    channels = None
    if per_channel and isinstance(reference, SignalRecord) and isinstance(candidate, SignalRecord):
        scores = []
        for ref_ch, cand_ch in zip(reference.data, candidate.data):
            a, b = _pair(ref_ch, cand_ch, normalization)
            scores.append((psnr(a, b), ssim(a, b)))
        channels = tuple(scores)
    return MetricReport(psnr(x, y), ssim(x, y), normalization, channels)


def aggregate(reports: Iterable[MetricReport]) -> tuple:
    """Arithmetic mean PSNR and SSIM over records."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to aggregate")
    return (
        float(np.mean([r.psnr_db for r in reports])),
        float(np.mean([r.ssim for r in reports])),
    )


def write_report(path, rows: Iterable[tuple]) -> Path:
    """Write ``(record_id, algorithm, MetricReport)`` rows as CSV."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "algorithm", "psnr_db", "ssim"])
        for record_id, algorithm, report in rows:
            writer.writerow([record_id, algorithm, f"{report.psnr_db:.4f}", f"{report.ssim:.4f}"])
    return path
