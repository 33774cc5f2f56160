"""Pluggable super-resolution operators.

Every operator maps a channel-major LR vector of length ``d`` to an SR vector
of length ``D = f * d``. Four kinds are provided:

``replication``
    Repeat each LR sample ``f`` times.
``interp``
    Evaluate a :mod:`circsr.degrade` interpolant at positions ``j / f``
    (LR sample ``i`` sits on SR index ``i * f``), clamping at the edges.
``linear``
    ``W @ x + b`` with a model from :func:`fit_linear_sr` or a model file.
``external``
    Run a command that reads/writes the raw-with-sidecar record format.

Linear model file
-----------------
One ASCII header line ``CIRCSR-LIN1 <d> <D> <ridge>`` followed by ``D*d``
little-endian float64 weights (row-major) and ``D`` float64 biases.
"""

from __future__ import annotations

import hashlib
import os
import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

from .degrade import DownsampleKind, interpolate
from .errors import (
    DimensionError,
    ExternalSRError,
    FormatError,
    NonFiniteError,
    ParameterError,
    SingularSystemError,
)
from .signal import SamplingGeometry, SignalRecord, load_record, save_record

LINEAR_MAGIC = "CIRCSR-LIN1"
SR_KINDS = ("replication", "interp", "linear", "external")


@dataclass(frozen=True)
class LinearSrModel:
    weight: np.ndarray
    bias: np.ndarray
    ridge: float = 0.0
    training_hash: str = ""

    def __post_init__(self):
        w = np.array(self.weight, dtype=np.float64)
        b = np.array(self.bias, dtype=np.float64).reshape(-1)
        if w.ndim != 2 or w.shape[0] != b.size:
            raise DimensionError(f"weight {w.shape} and bias ({b.size},) do not agree")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise NonFiniteError("linear SR model has non-finite entries")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weight", w)
        object.__setattr__(self, "bias", b)

    @property
    def d(self) -> int:
        return self.weight.shape[1]

    @property
    def D(self) -> int:
        return self.weight.shape[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.weight @ x + self.bias

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "wb") as fh:
            fh.write(f"{LINEAR_MAGIC} {self.d} {self.D} {self.ridge!r}\n".encode("ascii"))
            fh.write(self.weight.astype("<f8").tobytes(order="C"))
            fh.write(self.bias.astype("<f8").tobytes())
        return path

    @classmethod
    def load(cls, path) -> "LinearSrModel":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"linear SR model not found: {path}")
        blob = path.read_bytes()
        newline = blob.find(b"\n")
        if newline < 0:
            raise FormatError(f"{path}: missing header line")
        try:
            magic, d, D, ridge = blob[:newline].decode("ascii").split()
            d, D, ridge = int(d), int(D), float(ridge)
        except (UnicodeDecodeError, ValueError):
            raise FormatError(f"{path}: malformed header") from None
        if magic != LINEAR_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        payload = np.frombuffer(blob[newline + 1:], dtype="<f8")
        if payload.size != D * d + D:
            raise FormatError(f"{path}: expected {D * d + D} floats, found {payload.size}")
        return cls(payload[: D * d].reshape(D, d), payload[D * d:], ridge)


@dataclass(frozen=True)
class SrOperatorSpec:
    """Descriptor of an SR operator bound to a sampling geometry.

    Build instances through the ``replication``/``interp``/``linear``/
    ``external`` constructors rather than directly.
    """

    kind: str
    geometry: SamplingGeometry
    kernel: Optional[DownsampleKind] = None
    model: Optional[LinearSrModel] = field(default=None, repr=False)
    model_path: Optional[str] = None
    command: Optional[str] = None

    def __post_init__(self):
        if self.kind not in SR_KINDS:
            raise ParameterError(f"unknown SR kind {self.kind!r}")
        if self.kind == "interp" and self.kernel is None:
            raise ParameterError("interp SR operator needs a kernel")
        if self.kind == "linear":
            if self.model is None:
                if self.model_path is None:
                    raise ParameterError("linear SR operator needs a model or model_path")
                object.__setattr__(self, "model", LinearSrModel.load(self.model_path))
            g = self.geometry
            if (self.model.d, self.model.D) != (g.d, g.D):
                raise DimensionError(
                    f"model is {self.model.D}x{self.model.d}, geometry needs {g.D}x{g.d}"
                )
        if self.kind == "external" and not self.command:
            raise ParameterError("external SR operator needs a command template")

    @property
    def factor(self) -> int:
        return self.geometry.f

    @property
    def label(self) -> str:
        if self.kind == "interp":
            return f"interp:{self.kernel.value}"
        if self.kind == "linear" and self.model_path:
            return f"linear:{self.model_path}"
        return self.kind

    @classmethod
    def replication(cls, geometry):
        return cls("replication", geometry)

    @classmethod
    def interp(cls, geometry, kernel):
        return cls("interp", geometry, kernel=DownsampleKind.parse(kernel))

    @classmethod
    def linear(cls, geometry, model=None, path=None):
        return cls("linear", geometry, model=model, model_path=None if path is None else str(path))

    @classmethod
    def external(cls, geometry, command):
        return cls("external", geometry, command=command)

    @classmethod
    def parse(cls, text: str, geometry: SamplingGeometry) -> "SrOperatorSpec":
        """Parse ``replication``, ``interp:<kernel>``, ``linear:<file>`` or ``external:<cmd>``."""
        head, _, rest = text.partition(":")
        if head == "replication" and not rest:
            return cls.replication(geometry)
        if head == "interp" and rest:
            return cls.interp(geometry, rest)
        if head == "linear" and rest:
            return cls.linear(geometry, path=rest)
        if head == "external" and rest:
            return cls.external(geometry, rest)
        raise ParameterError(f"cannot parse SR operator {text!r}")


def replication_matrix(d_c: int, f: int, channels: int = 1) -> np.ndarray:
    """Dense ``D x d`` matrix of the replication operator."""
    block = np.kron(np.eye(d_c), np.ones((f, 1)))
    return np.kron(np.eye(channels), block)


def _as_vector(lr, expected: int) -> np.ndarray:
    x = lr.flat if isinstance(lr, SignalRecord) else np.asarray(lr, dtype=np.float64).reshape(-1)
    if x.size != expected:
        raise DimensionError(f"SR operator expects input length {expected}, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("SR operator input contains non-finite values")
    return x


def apply_sr(op: SrOperatorSpec, lr):
    """Apply ``op`` to an LR vector or record.

    Returns a flat SR vector for vector input and a :class:`SignalRecord` at
    ``f`` times the rate for record input.
    """
    g = op.geometry
    x = _as_vector(lr, g.d)
    f = g.f
    if op.kind == "replication":
        y = np.repeat(x, f)
    elif op.kind == "interp":
        positions = np.arange(g.D_c) / f
        y = interpolate(x.reshape(g.C, g.d_c), positions, op.kernel).reshape(-1)
    elif op.kind == "linear":
        y = op.model(x)
    else:
        src = lr if isinstance(lr, SignalRecord) else SignalRecord(x.reshape(g.C, g.d_c), 1.0, "lr")
        y = run_external_sr(op.command, src, f).flat
    if isinstance(lr, SignalRecord):
        return lr.with_data(y.reshape(g.C, g.D_c), sampling_rate_hz=lr.sampling_rate_hz * f)
    return y


def _training_hash(X: np.ndarray, Y: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X).tobytes())
    h.update(np.ascontiguousarray(Y).tobytes())
    return h.hexdigest()[:16]


def fit_linear_sr(pairs: Sequence, ridge: float = 1e-6) -> LinearSrModel:
    """Ridge least squares ``min sum ||W x + b - y||^2 + ridge ||W||_F^2``.

    The bias is unpenalized, so the problem is solved on centred data:
    ``W = Yc^T Xc (Xc^T Xc + ridge I)^-1`` and ``b = mean(y) - W mean(x)``,
    via a Cholesky factorization of the ``d x d`` Gram matrix.
    """
    if len(pairs) < 1:
        raise ParameterError("need at least one (lr, sr) pair")
    if not (np.isfinite(ridge) and ridge >= 0):
        raise ParameterError(f"ridge must be finite and >= 0, got {ridge}")
    X = np.array([np.asarray(p[0], dtype=np.float64).reshape(-1) for p in pairs])
    try:
        Y = np.array([np.asarray(p[1], dtype=np.float64).reshape(-1) for p in pairs])
    except ValueError:
        raise DimensionError("SR targets have inconsistent lengths") from None
    if X.ndim != 2 or Y.ndim != 2:
        raise DimensionError("training pairs have inconsistent dimensions")
    x_mean = X.mean(axis=0)
    y_mean = Y.mean(axis=0)
    Xc = X - x_mean
    Yc = Y - y_mean
    gram = Xc.T @ Xc
    if ridge == 0 and np.linalg.matrix_rank(gram) < gram.shape[0]:
        raise SingularSystemError(
            f"normal equations are rank deficient ({X.shape[0]} pairs, d={X.shape[1]}); "
            "use ridge > 0 or more data"
        )
    gram[np.diag_indices_from(gram)] += ridge
    try:
        factor = linalg.cho_factor(gram, lower=True)
    except linalg.LinAlgError:
        raise SingularSystemError("normal equations are not positive definite") from None
    weight = linalg.cho_solve(factor, Xc.T @ Yc).T
    bias = y_mean - weight @ x_mean
    return LinearSrModel(weight, bias, float(ridge), _training_hash(X, Y))


def run_external_sr(command: str, lr: SignalRecord, factor: int) -> SignalRecord:
    """Run an external SR program over the raw-with-sidecar exchange format.

    ``command`` is split shell-style and ``{input}``, ``{output}``, ``{factor}``
    are substituted in each argument. The exchange directory is removed on
    success and kept (its path is in the error message) on failure.
    """
    workdir = Path(tempfile.mkdtemp(prefix="circsr-ext-"))
    in_path = workdir / "input.f32"
    out_path = workdir / "output.f32"
    save_record(lr, in_path, "raw")
    try:
        argv = [
            tok.format(input=str(in_path), output=str(out_path), factor=factor)
            for tok in shlex.split(command)
        ]
    except (KeyError, IndexError, ValueError) as exc:
        raise ExternalSRError(f"bad command template {command!r}: {exc}") from None
    if not argv:
        raise ExternalSRError("empty command template")
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, env=os.environ.copy())
    except OSError as exc:
        raise ExternalSRError(f"could not launch {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        raise ExternalSRError(
            f"{argv[0]} exited with status {proc.returncode} (workdir {workdir}): "
            f"{proc.stderr.strip()[-500:]}"
        )
    if not out_path.is_file():
        raise ExternalSRError(f"{argv[0]} produced no output at {out_path}")
    try:
        out = load_record(out_path, "raw")
    except NonFiniteError:
        raise ExternalSRError(f"external SR output is non-finite (workdir {workdir})") from None
    except (FormatError, FileNotFoundError) as exc:
        raise ExternalSRError(f"unreadable external SR output: {exc}") from None
    expected = (lr.channels, lr.samples_per_channel * factor)
    if out.data.shape != expected:
        raise ExternalSRError(
            f"external SR output has shape {out.data.shape}, expected {expected} (workdir {workdir})"
        )
    shutil.rmtree(workdir, ignore_errors=True)
    return lr.with_data(out.data, sampling_rate_hz=lr.sampling_rate_hz * factor)
