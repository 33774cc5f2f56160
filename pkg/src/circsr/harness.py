"""Experiment runner: open vs closed tables, gain sweeps, kernel and architecture comparisons.

Every experiment follows the same recipe. Load or synthesize SR ground truth,
shuffle with a seed and split train/test, and build the SR operator. With
``sr="linear"`` the operator is fitted on the train split. Then degrade each
test record with :func:`circsr.degrade.apply_lr` and reconstruct it open- and
closed-loop. Rows are sorted by ``record_id`` before they are written, so
output bytes depend only on the plan.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np

from .control import estimate_q1, spectral_midpoint
from .degrade import DownsampleKind, NoiseSpec, apply_lr, lr_vector
from .errors import CircsrError, ParameterError
from .loop import LoopConfig, make_ls, open_loop_baseline, run_closed_loop
from .metrics import evaluate
from .signal import SamplingGeometry, SignalRecord, load_record, synthesize_ecg
from .sr import SrOperatorSpec, fit_linear_sr

log = logging.getLogger(__name__)

DEFAULT_LAMBDAS = tuple(round(0.1 * k, 1) for k in range(1, 11))


# ---------------------------------------------------------------------------
# Plan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticSource:
    n_records: int = 100
    channels: int = 1
    samples: int = 500
    rate_hz: float = 250.0
    bpm_range: tuple = (50.0, 110.0)
    seed: int = 0

    def load(self) -> List[SignalRecord]:
        rng = np.random.default_rng(self.seed)
        bpms = rng.uniform(*self.bpm_range, size=self.n_records)
        seeds = rng.integers(0, 2**31 - 1, size=self.n_records)
        return [
            synthesize_ecg(self.channels, self.samples, self.rate_hz, float(bpm), int(s),
                           record_id=f"syn{i:05d}")
            for i, (bpm, s) in enumerate(zip(bpms, seeds))
        ]


@dataclass(frozen=True)
class DirectorySource:
    """Every ``*.csv`` and ``*.f32`` record in a directory (SR ground truth)."""

    path: str

    def load(self) -> List[SignalRecord]:
        root = Path(self.path)
        if not root.is_dir():
            raise FileNotFoundError(f"dataset directory not found: {root}")
        files = sorted(p for p in root.iterdir() if p.suffix.lower() in (".csv", ".f32"))
        return [load_record(p) for p in files]


@dataclass(frozen=True)
class ExperimentPlan:
    """Everything that determines an experiment's output.

    ``sr`` is ``"linear"`` (fit a ridge model on the train split) or any string
    accepted by :meth:`SrOperatorSpec.parse`. ``degrade_kind``/``noise`` build
    the observed LR inputs; ``downsampler``/``loop_noise`` configure the LR
    module inside the loop. ``init="zero"`` starts the accumulator at zero
    instead of the default (``s_l0`` for arch1, ``SR(s_l0)`` for arch2).
    """

    dataset: Union[SyntheticSource, DirectorySource] = field(default_factory=SyntheticSource)
    factor: int = 5
    train_fraction: float = 0.9
    split_seed: int = 0
    sr: str = "linear"
    ridge: float = 0.3
    degrade_kind: DownsampleKind = DownsampleKind.NEAREST
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    lam: float = 1.0
    dt: float = 1.0
    max_iters: int = 50
    tol: float = 1e-8
    architecture: str = "arch1"
    init: str = "lr"
    downsampler: DownsampleKind = DownsampleKind.NEAREST
    loop_noise: NoiseSpec = field(default_factory=NoiseSpec)
    normalization: str = "ref_minmax_255"
    output_dir: Optional[str] = None
    table_format: str = "csv"
    workers: int = 1

    def __post_init__(self):
        if not (0 < self.train_fraction < 1):
            raise ParameterError(f"train fraction must lie in (0, 1), got {self.train_fraction}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ParameterError(f"max_iters must be an integer >= 1, got {self.max_iters}")
        if self.init not in ("lr", "zero"):
            raise ParameterError(f"init must be 'lr' or 'zero', got {self.init!r}")
        if self.table_format not in ("csv", "text"):
            raise ParameterError(f"table format must be csv or text, got {self.table_format!r}")
        object.__setattr__(self, "degrade_kind", DownsampleKind.parse(self.degrade_kind))
        object.__setattr__(self, "downsampler", DownsampleKind.parse(self.downsampler))

    @property
    def test_fraction(self) -> float:
        return 1.0 - self.train_fraction

    def replace(self, **changes) -> "ExperimentPlan":
        return replace(self, **changes)

    def loop_config(self, op: SrOperatorSpec) -> LoopConfig:
        return LoopConfig(
            sr_operator=op,
            lam=self.lam,
            dt=self.dt,
            max_iters=self.max_iters,
            tol=self.tol,
            architecture=self.architecture,
            downsampler=self.downsampler,
            noise=self.loop_noise,
        )


@dataclass
class Prepared:
    """A plan resolved into an operator and degraded test pairs."""

    plan: ExperimentPlan
    operator: SrOperatorSpec
    train_ids: List[str]
    test: List[tuple]  # (reference SR record, observed LR record), sorted by record_id

    @property
    def geometry(self) -> SamplingGeometry:
        return self.operator.geometry


def _record_noise(noise: NoiseSpec, index: int) -> NoiseSpec:
    return replace(noise, seed=noise.seed + 7919 * index)


def prepare(plan: ExperimentPlan) -> Prepared:
    records = plan.dataset.load()
    if not records:
        raise ParameterError("dataset is empty")
    shapes = {(r.channels, r.samples_per_channel) for r in records}
    if len(shapes) != 1:
        raise ParameterError(f"dataset records have differing shapes: {sorted(shapes)}")
    C, n = shapes.pop()
    if n % plan.factor:
        raise ParameterError(f"record length {n} is not divisible by factor {plan.factor}")
    geometry = SamplingGeometry.from_lr(C, n // plan.factor, plan.factor)

    order = np.random.default_rng(plan.split_seed).permutation(len(records))
    n_train = int(round(plan.train_fraction * len(records)))
    if len(records) > 1:
        n_train = min(max(n_train, 1), len(records) - 1)
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    if not test_idx:
        raise ParameterError("test split is empty")

    def degrade(i):
        return apply_lr(records[i], plan.factor, plan.degrade_kind, _record_noise(plan.noise, i))

    if plan.sr == "linear":
        pairs = [(degrade(i).flat, records[i].flat) for i in train_idx]
        model = fit_linear_sr(pairs, plan.ridge)
        op = SrOperatorSpec.linear(geometry, model)
    else:
        op = SrOperatorSpec.parse(plan.sr, geometry)

    test = sorted(((records[i], degrade(i)) for i in test_idx), key=lambda pair: pair[0].record_id)
    return Prepared(plan, op, [records[i].record_id for i in train_idx], test)


# ---------------------------------------------------------------------------
# Result rows and tables
# ---------------------------------------------------------------------------


@dataclass
class ResultRow:
    record_id: str
    algorithm: str
    psnr_db: float
    ssim: float
    delta_psnr: Optional[float] = None
    delta_ssim: Optional[float] = None
    iterations: Optional[int] = None
    stop_reason: str = ""

    COLUMNS = ("record_id", "algorithm", "psnr_db", "ssim", "delta_psnr", "delta_ssim",
               "iterations", "stop_reason")

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in self.COLUMNS}


def _delta(closed: float, open_: float) -> float:
    if math.isinf(closed) and math.isinf(open_) and closed == open_:
        return 0.0
    return closed - open_


def _format_cell(column: str, value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if "psnr" in column or "ssim" in column:
            return f"{value:.4f}"
        return f"{value:.6g}"
    return str(value)


def render_table(rows: Sequence, columns: Sequence[str], format: str = "csv") -> str:
    """Render dict-like rows with a fixed column order.

    PSNR and SSIM columns use 4 decimals, other floats ``%.6g``.
    """
    cells = [[_format_cell(c, (r.as_dict() if hasattr(r, "as_dict") else r).get(c)) for c in columns]
             for r in rows]
    if format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(cells)
        return buf.getvalue()
    if format == "text":
        widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
        lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
        for row in cells:
            lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)).rstrip())
        return "\n".join(lines) + "\n"
    raise ParameterError(f"unknown table format {format!r}")


def emit_table(rows: Sequence, path, columns: Optional[Sequence[str]] = None, format: str = "csv") -> Path:
    if columns is None:
        if not rows:
            raise ParameterError("columns are required for an empty table")
        first = rows[0]
        columns = list(first.COLUMNS if hasattr(first, "COLUMNS") else first.keys())
    path = Path(path)
    path.write_text(render_table(rows, columns, format), encoding="utf-8")
    return path


@dataclass
class ExperimentResult:
    rows: list
    columns: tuple
    path: Optional[Path] = None
    extra: dict = field(default_factory=dict)

    def render(self, format: str = "csv") -> str:
        return render_table(self.rows, self.columns, format)


def _write(plan: ExperimentPlan, name: str, result: ExperimentResult) -> ExperimentResult:
    if plan.output_dir is not None:
        out = Path(plan.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        suffix = ".csv" if plan.table_format == "csv" else ".txt"
        result.path = emit_table(result.rows, out / f"{name}{suffix}", result.columns, plan.table_format)
    return result


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


@dataclass
class RecordOutcome:
    record_id: str
    open_psnr: float
    open_ssim: float
    closed_psnr: float
    closed_ssim: float
    iterations: int
    stop_reason: str
    lr_residual: float


def _score(prep: Prepared, config: LoopConfig, pair) -> RecordOutcome:
    reference, lr = pair
    norm = prep.plan.normalization
    try:
        open_sr = open_loop_baseline(lr, config)
        initial = None
        if prep.plan.init == "zero":
            g = config.sr_operator.geometry
            initial = np.zeros(g.d if config.architecture == "arch1" else g.D)
        closed_sr, trace = run_closed_loop(lr, config, initial=initial)
    except CircsrError as exc:
        log.warning("record %s failed: %s", reference.record_id, exc)
        nan = float("nan")
        return RecordOutcome(reference.record_id, nan, nan, nan, nan, 0, "error", nan)
    o = evaluate(reference, open_sr, norm)
    c = evaluate(reference, closed_sr, norm)
    residual = float(np.linalg.norm(lr.flat - _lr_of(config, closed_sr.flat)))
    scale = float(np.linalg.norm(lr.flat)) or 1.0
    return RecordOutcome(reference.record_id, o.psnr_db, o.ssim, c.psnr_db, c.ssim,
                         trace.iterations, trace.stop_reason, residual / scale)


def _lr_of(config: LoopConfig, sr_flat: np.ndarray) -> np.ndarray:
    g = config.sr_operator.geometry
    return lr_vector(sr_flat, g.C, g.f, config.downsampler)


def evaluate_records(prep: Prepared, config: LoopConfig) -> List[RecordOutcome]:
    """Open and closed reconstruction of every test record under ``config``."""
    if prep.plan.workers > 1:
        with ThreadPoolExecutor(prep.plan.workers) as pool:
            outcomes = list(pool.map(lambda p: _score(prep, config, p), prep.test))
    else:
        outcomes = [_score(prep, config, p) for p in prep.test]
    return sorted(outcomes, key=lambda o: o.record_id)


def _mean(values) -> float:
    values = [v for v in values if not math.isnan(v)]
    return float(np.mean(values)) if values else float("nan")


def run_experiment(plan: ExperimentPlan, prepared: Optional[Prepared] = None) -> ExperimentResult:
    """Open- vs closed-loop table with per-record rows and a mean row pair."""
    prep = prepared or prepare(plan)
    config = plan.loop_config(prep.operator)
    outcomes = evaluate_records(prep, config)
    rows = []
    for o in outcomes:
        rows.append(ResultRow(o.record_id, "open", o.open_psnr, o.open_ssim))
        rows.append(ResultRow(o.record_id, "closed", o.closed_psnr, o.closed_ssim,
                              _delta(o.closed_psnr, o.open_psnr), o.closed_ssim - o.open_ssim,
                              o.iterations, o.stop_reason))
    mo_p, mo_s = _mean(o.open_psnr for o in outcomes), _mean(o.open_ssim for o in outcomes)
    mc_p, mc_s = _mean(o.closed_psnr for o in outcomes), _mean(o.closed_ssim for o in outcomes)
    rows.append(ResultRow("mean", "open", mo_p, mo_s))
    rows.append(ResultRow("mean", "closed", mc_p, mc_s, _delta(mc_p, mo_p), mc_s - mo_s,
                          None, "per-record mean"))
    result = ExperimentResult(rows, ResultRow.COLUMNS, extra={"outcomes": outcomes})
    return _write(plan, "results", result)


SWEEP_COLUMNS = ("lambda", "psnr_db", "ssim", "open_psnr_db", "open_ssim", "delta_psnr",
                 "delta_ssim", "mean_iterations", "diverged", "selected")


def default_lambda_grid(prep: Prepared) -> List[float]:
    grid = list(DEFAULT_LAMBDAS)
    try:
        mid = gain_midpoint(prep)
        if mid not in grid:
            grid.append(mid)
    except CircsrError as exc:
        log.warning("no spectral midpoint for the default grid: %s", exc)
    return sorted(grid)


def gain_midpoint(prep: Prepared, epsilon: float = 1e-6) -> float:
    """``1/(dt*g)`` with ``g = d*q1`` estimated at the first test input."""
    plan = prep.plan
    config = plan.loop_config(prep.operator)
    base = prep.test[0][1].flat
    q1 = estimate_q1(make_ls(config.replace(noise=NoiseSpec())), base, epsilon)
    return spectral_midpoint(q1, prep.geometry.d, plan.dt)


def sweep_lambda(plan: ExperimentPlan, lambdas: Optional[Sequence[float]] = None,
                 prepared: Optional[Prepared] = None) -> ExperimentResult:
    """Mean metrics per gain, plus the selected gain.

    Selection: highest mean PSNR among gains whose mean SSIM increment is
    positive; if none qualifies, highest PSNR overall, marked ``fallback``.
    """
    prep = prepared or prepare(plan)
    if lambdas is None:
        lambdas = default_lambda_grid(prep)
    lambdas = [float(v) for v in lambdas]
    if len(lambdas) < 2 or len(set(lambdas)) != len(lambdas):
        raise ParameterError("lambda sweep needs at least 2 distinct values")

    rows = []
    for lam in lambdas:
        outcomes = evaluate_records(prep, plan.replace(lam=lam).loop_config(prep.operator))
        p, s = _mean(o.closed_psnr for o in outcomes), _mean(o.closed_ssim for o in outcomes)
        op_, os_ = _mean(o.open_psnr for o in outcomes), _mean(o.open_ssim for o in outcomes)
        rows.append({
            "lambda": lam, "psnr_db": p, "ssim": s, "open_psnr_db": op_, "open_ssim": os_,
            "delta_psnr": _delta(p, op_), "delta_ssim": s - os_,
            "mean_iterations": float(np.mean([o.iterations for o in outcomes])),
            "diverged": sum(o.stop_reason == "diverged" for o in outcomes),
            "selected": "",
        })

    def psnr_key(row):
        return -math.inf if math.isnan(row["psnr_db"]) else row["psnr_db"]

    qualifying = [r for r in rows if r["delta_ssim"] > 0]
    if qualifying:
        best = max(qualifying, key=psnr_key)
        best["selected"] = "max_psnr_positive_dssim"
    else:
        best = max(rows, key=psnr_key)
        best["selected"] = "max_psnr_fallback"
    result = ExperimentResult(rows, SWEEP_COLUMNS, extra={"selected_lambda": best["lambda"]})
    return _write(plan, "lambda_sweep", result)


DOWNSAMPLER_COLUMNS = ("downsampler", "psnr_db", "ssim", "delta_psnr", "delta_ssim",
                       "mean_lr_residual", "rank")


def compare_downsamplers(plan: ExperimentPlan, prepared: Optional[Prepared] = None) -> ExperimentResult:
    """Closed loop once per in-loop LR kernel; observed LR inputs stay fixed.

    Ranks by mean PSNR (ties keep the canonical kernel order).
    """
    prep = prepared or prepare(plan)
    rows = []
    for kind in DownsampleKind:
        outcomes = evaluate_records(prep, plan.replace(downsampler=kind).loop_config(prep.operator))
        p, s = _mean(o.closed_psnr for o in outcomes), _mean(o.closed_ssim for o in outcomes)
        rows.append({
            "downsampler": kind.value, "psnr_db": p, "ssim": s,
            "delta_psnr": _delta(p, _mean(o.open_psnr for o in outcomes)),
            "delta_ssim": s - _mean(o.open_ssim for o in outcomes),
            "mean_lr_residual": _mean(o.lr_residual for o in outcomes),
        })
    ordered = sorted(range(len(rows)), key=lambda i: (-rows[i]["psnr_db"], i))
    for rank, i in enumerate(ordered, 1):
        rows[i]["rank"] = rank
    result = ExperimentResult(rows, DOWNSAMPLER_COLUMNS)
    return _write(plan, "downsamplers", result)


ARCH_COLUMNS = ("record_id", "architecture", "psnr_db", "ssim", "iterations", "stop_reason")


def compare_architectures(plan: ExperimentPlan, prepared: Optional[Prepared] = None) -> ExperimentResult:
    """Paired arch1/arch2 rows on identical test records, then mean rows."""
    prep = prepared or prepare(plan)
    by_arch = {
        arch: evaluate_records(prep, plan.replace(architecture=arch).loop_config(prep.operator))
        for arch in ("arch1", "arch2")
    }
    rows = []
    for o1, o2 in zip(by_arch["arch1"], by_arch["arch2"]):
        for arch, o in (("arch1", o1), ("arch2", o2)):
            rows.append({"record_id": o.record_id, "architecture": arch, "psnr_db": o.closed_psnr,
                         "ssim": o.closed_ssim, "iterations": o.iterations,
                         "stop_reason": o.stop_reason})
    for arch, outs in by_arch.items():
        rows.append({"record_id": "mean", "architecture": arch,
                     "psnr_db": _mean(o.closed_psnr for o in outs),
                     "ssim": _mean(o.closed_ssim for o in outs),
                     "iterations": None, "stop_reason": "per-record mean"})
    result = ExperimentResult(rows, ARCH_COLUMNS)
    return _write(plan, "architectures", result)
