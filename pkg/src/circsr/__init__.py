"""Closed-loop super-resolution for multi-channel 1-D signals."""

from .control import LambdaBounds, PiState, estimate_q1, lambda_bounds, loop_gain, pi_step, spectral_midpoint
from .degrade import BaselineWander, DownsampleKind, EmgLike, NoiseSpec, apply_lr, downsample
from .loop import ConvergenceTrace, LoopConfig, open_loop_baseline, run_closed_loop, should_stop
from .metrics import MetricReport, evaluate, normalize_to_255, psnr, ssim
from .signal import SamplingGeometry, SignalRecord, geometry_from, load_record, save_record, synthesize_ecg
from .sr import LinearSrModel, SrOperatorSpec, apply_sr, fit_linear_sr, run_external_sr

__version__ = "0.1.0"
