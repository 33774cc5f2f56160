"""Command-line front end.

Records are read/written as CSV for ``.csv`` paths and raw-with-sidecar
otherwise. Tables are CSV unless ``--format text``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path


from . import harness
from .control import estimate_q1, lambda_bounds, loop_gain
from .degrade import BaselineWander, DownsampleKind, EmgLike, NoiseSpec, apply_lr
from .errors import CircsrError
from .loop import LoopConfig, make_ls, open_loop_baseline, run_closed_loop
from .metrics import evaluate
from .signal import SamplingGeometry, load_record, save_record
from .sr import SrOperatorSpec, fit_linear_sr

log = logging.getLogger("circsr")

KERNELS = [k.value for k in DownsampleKind]


def _noise(args) -> NoiseSpec:
    artifact = None
    if getattr(args, "wander", None):
        artifact = BaselineWander(*args.wander)
    elif getattr(args, "emg", None):
        artifact = EmgLike(*args.emg)
    return NoiseSpec(args.noise_sigma, args.seed, artifact)


def _add_noise_flags(p):
    p.add_argument("--noise-sigma", type=float, default=0.0, help="std of additive Gaussian LR noise")
    p.add_argument("--seed", type=int, default=0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--wander", type=float, nargs=2, metavar=("AMP", "HZ"), help="baseline wander artifact")
    g.add_argument("--emg", type=float, nargs=2, metavar=("SIGMA", "HZ"), help="EMG-like high-passed noise")


def _add_loop_flags(p, sr_default="replication"):
    p.add_argument("--factor", type=int, default=5, help="SR factor f")
    p.add_argument("--sr", default=sr_default,
                   help="replication | interp:<kernel> | linear:<file> | external:'<cmd>'")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="PI gain")
    p.add_argument("--dt", type=float, default=1.0)
    p.add_argument("--iters", type=int, default=50, help="maximum PI updates T")
    p.add_argument("--tol", type=float, default=1e-8, help="relative error stopping threshold")
    p.add_argument("--downsampler", choices=KERNELS, default="nearest", help="in-loop LR kernel")
    p.add_argument("--arch", choices=["1", "2"], default="1")


def _lr_geometry(lr, factor) -> SamplingGeometry:
    return SamplingGeometry.from_lr(lr.channels, lr.samples_per_channel, factor)


def _loop_config(args, geometry) -> LoopConfig:
    return LoopConfig(
        sr_operator=SrOperatorSpec.parse(args.sr, geometry),
        lam=args.lam,
        dt=args.dt,
        max_iters=args.iters,
        tol=args.tol,
        architecture=f"arch{args.arch}",
        downsampler=args.downsampler,
    )


def cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    source = harness.SyntheticSource(args.n, args.channels, args.samples, args.rate,
                                     (args.bpm_min, args.bpm_max), args.seed)
    ext = ".csv" if args.record_format == "csv" else ".f32"
    for rec in source.load():
        save_record(rec, out / f"{rec.record_id}{ext}")
    print(f"wrote {args.n} records to {out}")
    return 0


def cmd_degrade(args) -> int:
    sr = load_record(args.input)
    lr = apply_lr(sr, args.factor, args.downsampler, _noise(args))
    save_record(lr, args.out)
    print(f"{sr.samples_per_channel} -> {lr.samples_per_channel} samples per channel, wrote {args.out}")
    return 0


def cmd_superres(args) -> int:
    lr = load_record(args.input)
    config = _loop_config(args, _lr_geometry(lr, args.factor))
    reference = load_record(args.reference) if args.reference else None
    if args.mode == "open":
        out = open_loop_baseline(lr, config)
        trace = None
    else:
        out, trace = run_closed_loop(lr, config, reference)
        print(f"stop_reason={trace.stop_reason} iterations={trace.iterations} "
              f"rel_err={trace.rel_errs[-1]:.3e}")
        if args.trace:
            trace.to_csv(args.trace)
    save_record(out, args.out)
    if reference is not None:
        report = evaluate(reference, out)
        print(f"psnr_db={report.psnr_db:.4f} ssim={report.ssim:.4f}")
    return 0


def cmd_fit_linear(args) -> int:
    records = harness.DirectorySource(args.data).load()
    if not records:
        raise CircsrError(f"no records in {args.data}")
    pairs = [(apply_lr(r, args.factor, args.downsampler).flat, r.flat) for r in records]
    model = fit_linear_sr(pairs, args.ridge)
    model.save(args.out)
    print(f"fitted {model.D}x{model.d} linear SR model on {len(pairs)} pairs, wrote {args.out}")
    return 0


def cmd_q1(args) -> int:
    lr = load_record(args.input)
    config = _loop_config(args, _lr_geometry(lr, args.factor))
    d = config.sr_operator.geometry.d
    q1 = estimate_q1(make_ls(config, lr.sampling_rate_hz), lr.flat, args.epsilon)
    g = loop_gain(q1, d)
    print(f"q1={q1!r}")
    print(f"d={d}")
    print(f"loop_gain={g!r}")
    if g != 0:
        print(f"spectral_midpoint={1.0 / (args.dt * g)!r}")
    return 0


def cmd_bounds(args) -> int:
    b = lambda_bounds(args.q1, args.d, args.dt)
    print(f"lower={b.lower!r}")
    print(f"upper={b.upper!r}")
    print(f"spectral_upper={b.spectral_upper!r}")
    g = loop_gain(args.q1, args.d)
    print(f"loop_gain={g!r}")
    print(f"gain_interval=(0, {2.0 / (args.dt * g)!r})" if g > 0 else f"gain_interval=({2.0 / (args.dt * g)!r}, 0)")
    return 0


def _plan(args) -> harness.ExperimentPlan:
    if args.data:
        source = harness.DirectorySource(args.data)
    else:
        source = harness.SyntheticSource(args.n, args.channels, args.samples, args.rate,
                                         seed=args.dataset_seed)
    return harness.ExperimentPlan(
        dataset=source,
        factor=args.factor,
        train_fraction=args.train_fraction,
        split_seed=args.dataset_seed,
        sr=args.sr,
        ridge=args.ridge,
        degrade_kind=args.degrade,
        noise=_noise(args),
        lam=args.lam,
        dt=args.dt,
        max_iters=args.iters,
        tol=args.tol,
        architecture=f"arch{args.arch}",
        init=args.init,
        downsampler=args.downsampler,
        normalization=args.normalization,
        output_dir=args.out,
        table_format=args.format,
        workers=args.workers,
    )


def _report(result) -> int:
    if result.path is not None:
        print(f"wrote {result.path}")
    else:
        sys.stdout.write(result.render())
    return 0


def cmd_run(args) -> int:
    return _report(harness.run_experiment(_plan(args)))


def cmd_sweep(args) -> int:
    result = harness.sweep_lambda(_plan(args), args.lambdas)
    print(f"selected_lambda={result.extra['selected_lambda']!r}")
    return _report(result)


def cmd_compare_downsamplers(args) -> int:
    return _report(harness.compare_downsamplers(_plan(args)))


def cmd_compare_arch(args) -> int:
    return _report(harness.compare_architectures(_plan(args)))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circsr", description="Closed-loop super-resolution toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ECG dataset")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--rate", type=float, default=250.0)
    p.add_argument("--bpm-min", type=float, default=50.0)
    p.add_argument("--bpm-max", type=float, default=110.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--record-format", choices=["csv", "raw"], default="csv")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("degrade", help="apply the LR module to a record")
    p.add_argument("input")
    p.add_argument("--factor", type=int, default=5)
    p.add_argument("--downsampler", choices=KERNELS, default="nearest")
    _add_noise_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("superres", help="open- or closed-loop reconstruction of one LR record")
    p.add_argument("input")
    _add_loop_flags(p)
    p.add_argument("--mode", choices=["open", "closed"], default="closed")
    p.add_argument("--reference", help="ground-truth SR record for metrics")
    p.add_argument("--trace", help="write the convergence trace CSV here")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_superres)

    p = sub.add_parser("fit-linear", help="fit a ridge linear SR model on a directory of SR records")
    p.add_argument("--data", required=True)
    p.add_argument("--factor", type=int, default=5)
    p.add_argument("--downsampler", choices=KERNELS, default="nearest")
    p.add_argument("--ridge", type=float, default=0.3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_linear)

    p = sub.add_parser("q1", help="estimate q1 of LS = LR o SR at an LR record")
    p.add_argument("input")
    _add_loop_flags(p)
    p.add_argument("--epsilon", type=float, default=1e-6)
    p.set_defaults(func=cmd_q1)

    p = sub.add_parser("bounds", help="stability interval for lambda")
    p.add_argument("--q1", type=float, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--dt", type=float, default=1.0)
    p.set_defaults(func=cmd_bounds)

    experiments = [
        ("run", "open vs closed table", cmd_run),
        ("sweep-lambda", "mean metrics per lambda", cmd_sweep),
        ("compare-downsamplers", "closed loop per in-loop LR kernel", cmd_compare_downsamplers),
        ("compare-arch", "architecture I vs II", cmd_compare_arch),
    ]
    for name, help_text, func in experiments:
        p = sub.add_parser(name, help=help_text)
        _add_loop_flags(p, sr_default="linear")
        _add_noise_flags(p)
        p.add_argument("--data", help="directory of SR records (default: synthetic)")
        p.add_argument("--n", type=int, default=100, help="synthetic record count")
        p.add_argument("--channels", type=int, default=1)
        p.add_argument("--samples", type=int, default=500)
        p.add_argument("--rate", type=float, default=250.0)
        p.add_argument("--dataset-seed", type=int, default=0)
        p.add_argument("--train-fraction", type=float, default=0.9)
        p.add_argument("--ridge", type=float, default=0.3)
        p.add_argument("--degrade", choices=KERNELS, default="nearest", help="kernel building the LR inputs")
        p.add_argument("--normalization", choices=["ref_minmax_255", "raw"], default="ref_minmax_255")
        p.add_argument("--format", choices=["csv", "text"], default="csv")
        p.add_argument("--init", choices=["lr", "zero"], default="lr",
                       help="accumulator start: observed input (default) or zeros")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="output directory (default: print to stdout)")
        if name == "sweep-lambda":
            p.add_argument("--lambdas", type=float, nargs="+", help="gain grid (default 0.1..1.0 + midpoint)")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CircsrError, OSError, ValueError) as exc:
        print(f"circsr {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
