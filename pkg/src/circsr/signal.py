"""Signal records, sampling geometry, file I/O and a synthetic ECG generator.

Layout is channel-major throughout: ``data`` has shape ``(C, samples)`` and a
flattened vector concatenates channel 0, then channel 1, and so on.

File formats
------------
CSV
    Optional header row of channel names, then one row per time sample and
    one column per channel. An optional sidecar ``<file>.meta`` may supply
    ``rate_hz`` and ``record_id``.
raw
    Little-endian float32, channel-major, with a mandatory sidecar
    ``<file>.meta`` of ``key=value`` lines: ``channels``, ``samples``,
    ``rate_hz``, ``record_id``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal, Optional

import numpy as np

from .errors import DimensionError, FormatError, GeometryError, NonFiniteError, ParameterError

SIDECAR_SUFFIX = ".meta"
RecordFormat = Literal["csv", "raw"]


@dataclass(frozen=True)
class SignalRecord:
    """Immutable multi-channel sampled signal.

    Attributes
    ----------
    data : np.ndarray
        Float64 array of shape ``(channels, samples_per_channel)``. Stored
        read-only.
    sampling_rate_hz : float
        Sampling rate of every channel.
    record_id : str
        Free-form label carried through experiments and reports.
    """

    data: np.ndarray
    sampling_rate_hz: float = 1.0
    record_id: str = "record"
    channel_names: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr[None, :]
        if arr.ndim != 2:
            raise DimensionError(f"signal data must be 2-D (channels, samples), got ndim={arr.ndim}")
        if arr.shape[0] < 1 or arr.shape[1] < 2:
            raise DimensionError(f"need >= 1 channel and >= 2 samples, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NonFiniteError(f"record {self.record_id!r} contains non-finite samples")
        rate = float(self.sampling_rate_hz)
        if not (math.isfinite(rate) and rate > 0):
            raise ParameterError(f"sampling rate must be finite and > 0, got {self.sampling_rate_hz}")
        if self.channel_names is not None and len(self.channel_names) != arr.shape[0]:
            raise DimensionError("channel_names length does not match channel count")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "sampling_rate_hz", rate)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def samples_per_channel(self) -> int:
        return self.data.shape[1]

    @property
    def flat(self) -> np.ndarray:
        """Channel-major flattened copy, length ``channels * samples_per_channel``."""
        return self.data.reshape(-1).copy()

    def with_data(self, data, sampling_rate_hz=None, record_id=None) -> "SignalRecord":
        """Return a new record sharing metadata but holding ``data``.

        ``data`` may be flat (channel-major); it is reshaped to this record's
        channel count.
        """
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            if arr.size % self.channels:
                raise DimensionError(
                    f"flat vector of length {arr.size} cannot split into {self.channels} channels"
                )
            arr = arr.reshape(self.channels, -1)
        return SignalRecord(
            arr,
            self.sampling_rate_hz if sampling_rate_hz is None else sampling_rate_hz,
            self.record_id if record_id is None else record_id,
            self.channel_names,
        )


@dataclass(frozen=True)
class SamplingGeometry:
    """Dimensions linking an LR signal to its SR counterpart.

    ``d = C * d_c``, ``D = C * D_c``, ``f = D / d`` (integer >= 2), ``r = 1 / f``.
    """

    C: int
    d_c: int
    D_c: int

    def __post_init__(self):
        if self.C < 1 or self.d_c < 1:
            raise GeometryError(f"invalid geometry C={self.C}, d_c={self.d_c}")
        if self.D_c % self.d_c:
            raise GeometryError(f"SR length {self.D_c} is not an integer multiple of LR length {self.d_c}")
        if self.D_c // self.d_c < 2:
            raise GeometryError(f"SR factor must be >= 2, got {self.D_c / self.d_c:g}")

    @classmethod
    def from_lr(cls, channels: int, lr_samples: int, factor: int) -> "SamplingGeometry":
        return cls(channels, lr_samples, lr_samples * factor)

    @property
    def d(self) -> int:
        return self.C * self.d_c

    @property
    def D(self) -> int:
        return self.C * self.D_c

    @property
    def f(self) -> int:
        return self.D_c // self.d_c

    @property
    def r(self) -> float:
        return 1.0 / self.f


def geometry_from(lr: SignalRecord, sr: SignalRecord) -> SamplingGeometry:
    if lr.channels != sr.channels:
        raise DimensionError(f"channel mismatch: LR has {lr.channels}, SR has {sr.channels}")
    return SamplingGeometry(lr.channels, lr.samples_per_channel, sr.samples_per_channel)


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def read_sidecar(path) -> dict:
    meta = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = line.split("=", 1)
            meta[key.strip()] = value.strip()
    return meta


def write_sidecar(path, meta: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in meta.items():
            fh.write(f"{key}={value}\n")


def infer_format(path) -> RecordFormat:
    return "csv" if Path(path).suffix.lower() == ".csv" else "raw"


def _parse_float(token: str) -> Optional[float]:
    try:
        return float(token)
    except ValueError:
        return None


def _load_csv(path: Path, meta: dict) -> SignalRecord:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        rows = [row for row in csv.reader(fh) if row and any(cell.strip() for cell in row)]
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    names = None
    first = [cell.strip() for cell in rows[0]]
    if any(_parse_float(cell) is None for cell in first):
        names = tuple(first)
        rows = rows[1:]
    width = len(names) if names is not None else len(rows[0]) if rows else 0
    values = []
    for lineno, row in enumerate(rows, 2 if names else 1):
        if len(row) != width:
            raise FormatError(f"{path}:{lineno}: ragged row with {len(row)} columns, expected {width}")
        parsed = [_parse_float(cell.strip()) for cell in row]
        if any(v is None for v in parsed):
            raise FormatError(f"{path}:{lineno}: unparseable value in {row!r}")
        if not all(math.isfinite(v) for v in parsed):
            raise NonFiniteError(f"{path}:{lineno}: non-finite sample")
        values.append(parsed)
    if len(values) < 2:
        raise FormatError(f"{path}: need at least 2 sample rows, found {len(values)}")
    data = np.asarray(values, dtype=np.float64).T
    return SignalRecord(
        data,
        float(meta.get("rate_hz", 1.0)),
        meta.get("record_id", path.stem),
        names,
    )


def _load_raw(path: Path, meta: dict) -> SignalRecord:
    try:
        channels = int(meta["channels"])
        samples = int(meta["samples"])
        rate = float(meta["rate_hz"])
    except KeyError as exc:
        raise FormatError(f"{path}: sidecar missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise FormatError(f"{path}: bad sidecar value ({exc})") from None
    raw = np.fromfile(path, dtype="<f4")
    if raw.size != channels * samples:
        raise FormatError(
            f"{path}: holds {raw.size} floats, sidecar declares {channels} x {samples}"
        )
    if not np.all(np.isfinite(raw)):
        raise NonFiniteError(f"{path}: non-finite sample")
    return SignalRecord(raw.reshape(channels, samples), rate, meta.get("record_id", path.stem))


def load_record(path, format: Optional[RecordFormat] = None) -> SignalRecord:
    """Read a record from ``path``.

    ``format`` defaults to ``"csv"`` for ``.csv`` files and ``"raw"`` otherwise.
    CSV records without a sidecar get ``rate_hz=1`` and the file stem as id.
    """
    path = Path(path)
    fmt = format or infer_format(path)
    if not path.is_file():
        raise FileNotFoundError(f"record file not found: {path}")
    meta_path = sidecar_path(path)
    if fmt == "raw":
        if not meta_path.is_file():
            raise FileNotFoundError(f"raw record needs sidecar {meta_path}")
        return _load_raw(path, read_sidecar(meta_path))
    if fmt == "csv":
        meta = read_sidecar(meta_path) if meta_path.is_file() else {}
        return _load_csv(path, meta)
    raise ParameterError(f"unknown record format {fmt!r}")


def save_record(record: SignalRecord, path, format: Optional[RecordFormat] = None) -> Path:
    path = Path(path)
    fmt = format or infer_format(path)
    meta = {
        "channels": record.channels,
        "samples": record.samples_per_channel,
        "rate_hz": repr(record.sampling_rate_hz),
        "record_id": record.record_id,
    }
    if fmt == "raw":
        record.data.astype("<f4").tofile(path)
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            if record.channel_names is not None:
                writer.writerow(record.channel_names)
            # repr round-trips float64 exactly
            for row in record.data.T:
                writer.writerow([repr(float(v)) for v in row])
    else:
        raise ParameterError(f"unknown record format {fmt!r}")
    write_sidecar(sidecar_path(path), meta)
    return path


# ---------------------------------------------------------------------------
# Synthetic ECG
# ---------------------------------------------------------------------------

# (offset from R peak in s, gaussian width in s, amplitude in mV)
BEAT_WAVES = (
    ("P", -0.20, 0.025, 0.15),
    ("QRS", 0.00, 0.012, 1.00),
    ("T", 0.30, 0.045, 0.30),
)


def synthesize_ecg(
    C: int = 1,
    samples: int = 2500,
    rate_hz: float = 500.0,
    beat_rate_bpm: float = 60.0,
    seed: int = 0,
    record_id: Optional[str] = None,
) -> SignalRecord:
    """Periodic P-QRS-T waveform built from Gaussian bumps.

    Every beat is identical, so the signal is exactly periodic with period
    ``60 / beat_rate_bpm`` seconds. The seed controls the phase of the first
    beat and a per-channel gain in ``[0.5, 1.5]`` with random sign, which
    mimics differing lead projections.
    """
    if C < 1:
        raise ParameterError(f"channel count must be >= 1, got {C}")
    if samples < 2:
        raise ParameterError(f"need >= 2 samples, got {samples}")
    if not (math.isfinite(rate_hz) and rate_hz > 0):
        raise ParameterError(f"rate_hz must be > 0, got {rate_hz}")
    if not (20 <= beat_rate_bpm <= 300):
        raise ParameterError(f"beat_rate_bpm must lie in [20, 300], got {beat_rate_bpm}")

    rng = np.random.default_rng(seed)
    period = 60.0 / beat_rate_bpm
    phase = rng.uniform(0.0, period)
    gains = rng.uniform(0.5, 1.5, size=C) * rng.choice([-1.0, 1.0], size=C, p=[0.2, 0.8])

    t = np.arange(samples) / rate_hz
    # position inside the current beat, centred on the R peak
    tau = np.mod(t - phase + period / 2, period) - period / 2
    beat = np.zeros(samples)
    for _, offset, width, amp in BEAT_WAVES:
        # sum the neighbouring periods so waves near the boundary wrap smoothly
        for shift in (-period, 0.0, period):
            beat += amp * np.exp(-0.5 * ((tau - offset - shift) / width) ** 2)
    data = gains[:, None] * beat[None, :]
    rid = record_id if record_id is not None else f"syn-{seed}"
    return SignalRecord(data, rate_hz, rid)
