"""Closed-loop super-resolution.

Architecture I (LR-domain feedback), iteration ``k``::

    s_s[k] = SR(s_p[k])
    s_l[k] = LR(s_s[k])
    s_e[k] = s_l0 - s_l[k]
    s_p[k+1] = s_p[k] + lam * dt * s_e[k]          # s_p[0] = s_l0

Architecture II (SR-domain feedback)::

    s_s0 = SR(s_l0);  p[0] = s_s0
    s_e[k] = s_s0 - SR(LR(p[k]))
    p[k+1] = p[k] + lam * dt * s_e[k]

Each iteration records ``||s_e[k]||_2``; the loop stops when the relative
error drops to ``tol``, after ``max_iters`` PI updates, or on divergence
(non-finite values or growth beyond ``DIVERGENCE_RATIO`` times the first
error). With ``s_p[0] = s_l0`` the iteration-0 output of architecture I is the
open-loop reconstruction ``SR(s_l0)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, List, Literal, NamedTuple, Optional

import numpy as np

from .control import PiState, pi_step
from .degrade import DownsampleKind, NoiseSpec, lr_vector
from .errors import DimensionError, NonFiniteError, ParameterError
from .metrics import evaluate
from .signal import SignalRecord
from .sr import SrOperatorSpec, apply_sr

DIVERGENCE_RATIO = 1e6
DEFAULT_MAX_ITERS = 50

Architecture = Literal["arch1", "arch2"]
StopReason = Literal["tol_reached", "max_iters", "diverged"]


@dataclass(frozen=True)
class LoopConfig:
    sr_operator: SrOperatorSpec
    lam: float = 1.0
    dt: float = 1.0
    max_iters: int = DEFAULT_MAX_ITERS
    tol: float = 1e-8
    architecture: Architecture = "arch1"
    downsampler: DownsampleKind = DownsampleKind.NEAREST
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        if self.architecture not in ("arch1", "arch2"):
            raise ParameterError(f"architecture must be 'arch1' or 'arch2', got {self.architecture!r}")
        if not math.isfinite(self.lam):
            raise ParameterError(f"lambda must be finite, got {self.lam}")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ParameterError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if not (self.tol >= 0):
            raise ParameterError(f"tol must be >= 0, got {self.tol}")
        object.__setattr__(self, "downsampler", DownsampleKind.parse(self.downsampler))

    @property
    def gain(self) -> float:
        return self.lam * self.dt

    def replace(self, **changes) -> "LoopConfig":
        return replace(self, **changes)


@dataclass
class ConvergenceTrace:
    err_norms: List[float] = field(default_factory=list)
    rel_errs: List[float] = field(default_factory=list)
    psnr: List[Optional[float]] = field(default_factory=list)
    ssim: List[Optional[float]] = field(default_factory=list)
    stop_reason: Optional[str] = None
    diverged_at: Optional[int] = None
    steady_state_error: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return len(self.err_norms)

    @property
    def iterations(self) -> int:
        """Number of PI updates applied before stopping."""
        return max(len(self.err_norms) - 1, 0)

    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["iter", "err_norm", "rel_err", "psnr", "ssim"])
            for k, (err, rel) in enumerate(zip(self.err_norms, self.rel_errs)):
                p = self.psnr[k] if k < len(self.psnr) else None
                s = self.ssim[k] if k < len(self.ssim) else None
                writer.writerow([
                    k,
                    repr(err),
                    repr(rel),
                    "" if p is None else f"{p:.4f}",
                    "" if s is None else f"{s:.4f}",
                ])
        return path


class StopDecision(NamedTuple):
    stop: bool
    reason: Optional[str]


def should_stop(trace: ConvergenceTrace, config: LoopConfig, current_rel_err: float) -> StopDecision:
    """Decide whether to stop after the iteration just recorded in ``trace``.

    ``trace`` is expected to already contain the current iteration, so the
    iteration index is ``len(trace) - 1``.
    """
    k = max(len(trace) - 1, 0)
    if not math.isfinite(current_rel_err):
        return StopDecision(True, "diverged")
    if current_rel_err <= config.tol:
        return StopDecision(True, "tol_reached")
    if trace.rel_errs and current_rel_err > DIVERGENCE_RATIO * trace.rel_errs[0]:
        return StopDecision(True, "diverged")
    if k >= config.max_iters:
        return StopDecision(True, "max_iters")
    return StopDecision(False, None)


def _check_input(s_l0: SignalRecord, op: SrOperatorSpec) -> None:
    g = op.geometry
    if (s_l0.channels, s_l0.samples_per_channel) != (g.C, g.d_c):
        raise DimensionError(
            f"LR record is {s_l0.channels}x{s_l0.samples_per_channel}, "
            f"operator geometry expects {g.C}x{g.d_c}"
        )


def open_loop_baseline(s_l0: SignalRecord, config: LoopConfig) -> SignalRecord:
    _check_input(s_l0, config.sr_operator)
    return apply_sr(config.sr_operator, s_l0)


def make_lr(config: LoopConfig, rate_hz: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """The in-loop LR module as a flat-vector map R^D -> R^d."""
    g = config.sr_operator.geometry
    return lambda v: lr_vector(v, g.C, g.f, config.downsampler, config.noise, rate_hz)


def make_ls(config: LoopConfig, rate_hz: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """The composed map ``LS = LR o SR`` on flat LR vectors."""
    lr = make_lr(config, rate_hz)
    op = config.sr_operator
    return lambda v: lr(apply_sr(op, v))


def run_closed_loop(
    s_l0: SignalRecord,
    config: LoopConfig,
    reference: Optional[SignalRecord] = None,
    *,
    initial=None,
    normalization: str = "ref_minmax_255",
    callback: Optional[Callable[[int, np.ndarray, np.ndarray], None]] = None,
):
    """Iterate the closed loop on ``s_l0``.

    Parameters
    ----------
    initial : array_like, optional
        Starting accumulator (LR domain for arch1, SR domain for arch2).
        Defaults to ``s_l0`` / ``SR(s_l0)``.
    reference : SignalRecord, optional
        Ground-truth SR record; enables per-iteration PSNR/SSIM and the
        steady-state error ``reference - output``.
    callback : callable, optional
        Called as ``callback(k, output_k, s_e_k)`` after each iteration.

    Returns
    -------
    (SignalRecord, ConvergenceTrace)
    """
    op = config.sr_operator
    _check_input(s_l0, op)
    g = op.geometry
    if reference is not None and reference.flat.size != g.D:
        raise DimensionError(f"reference has {reference.flat.size} samples, expected {g.D}")

    lr = make_lr(config, s_l0.sampling_rate_hz)
    x0 = s_l0.flat
    trace = ConvergenceTrace()

    if config.architecture == "arch1":
        target = x0
        start = x0 if initial is None else initial
        forward = lambda p: apply_sr(op, p)  # noqa: E731
        feedback = lambda out: lr(out)  # noqa: E731
    else:
        target = apply_sr(op, x0)
        start = target if initial is None else initial
        forward = lambda p: p  # noqa: E731
        feedback = lambda out: apply_sr(op, lr(out))  # noqa: E731

    start = np.asarray(start, dtype=np.float64).reshape(-1)
    if start.size != (g.d if config.architecture == "arch1" else g.D):
        raise DimensionError(f"initial accumulator has wrong length {start.size}")
    scale = float(np.linalg.norm(target))
    if scale == 0.0:
        scale = 1.0

    state = PiState(start, config.lam, config.dt)
    output = None
    k = 0
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            try:
                candidate = forward(state.s_p)
                s_e = target - feedback(candidate)
            except NonFiniteError:
                trace.stop_reason = "diverged"
                trace.diverged_at = k
                break
            if np.all(np.isfinite(candidate)):
                output = candidate
            err = float(np.linalg.norm(s_e))
            rel = err / scale
            trace.err_norms.append(err)
            trace.rel_errs.append(rel)
            if reference is not None and np.all(np.isfinite(candidate)):
                report = evaluate(reference.flat, candidate, normalization)
                trace.psnr.append(report.psnr_db)
                trace.ssim.append(report.ssim)
            elif reference is not None:
                trace.psnr.append(None)
                trace.ssim.append(None)
            if callback is not None:
                callback(k, candidate, s_e)
            decision = should_stop(trace, config, rel)
            if decision.stop:
                trace.stop_reason = decision.reason
                if decision.reason == "diverged":
                    trace.diverged_at = k
                break
            try:
                state = pi_step(state, s_e)
            except NonFiniteError:
                trace.stop_reason = "diverged"
                trace.diverged_at = k
                break
            k += 1

    if output is None:
        raise NonFiniteError("closed loop produced no finite estimate")
    # on divergence this is the last finite estimate, not the blown-up one
    if reference is not None:
        trace.steady_state_error = reference.flat - output
    record = s_l0.with_data(output.reshape(g.C, g.D_c), sampling_rate_hz=s_l0.sampling_rate_hz * g.f)
    return record, trace
