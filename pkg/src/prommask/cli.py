"""Command line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure during optimization.
"""

import argparse
import logging
import sys

import numpy as np

from . import io
from .baselines import DEFAULT_CENTER_FRACTION, DEFAULT_SIGMA_FRACTION, equispaced_mask, gaussian_mask
from .exceptions import ConfigurationError, DataValidationError, NumericalFailureError, UndefinedMetricError
from .kspace import _ifft_c, zero_fill_reconstruct
from .masks import MaskKind, broadcast_lines, deterministic_mask
from .metrics import RECONSTRUCTION_METRICS, evaluate_reconstructions
from .optim import ProMConfig, optimize_runs, target_budget
from .phantom import FAMILIES, make_family, sample_family

logger = logging.getLogger("prommask")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _size(text):
    try:
        h, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like HxW, got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return h, w


def _load_dataset(path):
    kspace = io.read_kspace(path)
    tpath = io.target_path(path)
    if tpath.exists():
        targets = io.read_kspace(tpath).real
        if targets.shape != kspace.shape:
            raise DataValidationError(f"{tpath}: shape {targets.shape} does not match {kspace.shape}")
    else:
        targets = np.abs(_ifft_c(kspace))
    return kspace, targets


def _load_mask_grid(path, grid_shape=None):
    values, shape, kind, _ = io.read_mask(path)
    if grid_shape is not None and tuple(shape) != tuple(grid_shape):
        raise DataValidationError(f"{path}: mask grid {tuple(shape)} does not match data grid {tuple(grid_shape)}")
    if kind is MaskKind.LINES_1D:
        return broadcast_lines(values, shape)
    return values.reshape(shape)


def _mean_trace(traces):
    """Average loss and sum(theta) across runs; schedules are identical."""
    first = traces[0]
    rows = []
    for i in range(len(first)):
        rows.append((
            first.iteration[i],
            float(np.mean([t.loss[i] for t in traces])),
            float(np.mean([t.sum_theta[i] for t in traces])),
            first.S[i],
            first.tau[i],
        ))
    return rows


def cmd_phantom_gen(args):
    family = make_family(args.family, seed=args.seed)
    items = sample_family(family, args.count, args.size)
    io.write_kspace(args.out, np.stack([k for k, _ in items]))
    io.write_kspace(io.target_path(args.out), np.stack([t for _, t in items]))
    logger.info("wrote %d phantoms to %s", args.count, args.out)
    return EXIT_OK


def cmd_optimize(args):
    if args.config:
        config, num_runs = io.read_config(args.config)
    else:
        config, num_runs = ProMConfig(), io.DEFAULT_NUM_RUNS
    if args.runs is not None:
        num_runs = args.runs
    kspace, targets = _load_dataset(args.data)
    try:
        dist, traces = optimize_runs((kspace, targets), config, num_runs)
    except NumericalFailureError as exc:
        if args.trace and exc.trace is not None:
            io.write_trace_csv(args.trace, exc.trace.rows())
        raise
    mask = deterministic_mask(dist, target_budget(len(dist), config.alpha))
    io.write_mask(args.out_mask, mask.values, dist.shape, dist.kind, io.BINARY)
    io.write_mask(io.probability_path(args.out_mask), dist.theta, dist.shape, dist.kind, io.PROBABILITY)
    if args.trace:
        io.write_trace_csv(args.trace, _mean_trace(traces))
    return EXIT_OK


def cmd_baseline(args):
    if args.kind == "equispaced":
        mask = equispaced_mask(args.size, args.alpha, args.center_frac, args.seed)
    else:
        mask = gaussian_mask(args.size, args.alpha, args.sigma_frac, args.seed)
    io.write_mask(args.out, mask.values, args.size, mask.kind, io.BINARY)
    return EXIT_OK


def cmd_evaluate(args):
    metrics = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    unknown = sorted(set(metrics) - set(RECONSTRUCTION_METRICS))
    if unknown or not metrics:
        raise ConfigurationError(f"unknown metrics {unknown}; choose from {sorted(RECONSTRUCTION_METRICS)}")
    kspace, targets = _load_dataset(args.data)
    grid = _load_mask_grid(args.mask, kspace.shape[1:])
    recon = zero_fill_reconstruct(kspace, grid)
    report = evaluate_reconstructions(recon, targets, metrics, mask_id=str(args.mask))
    io.write_metrics_csv(args.out, report)
    for name, value in report.aggregate.items():
        logger.info("%s: %.6g", name, value)
    return EXIT_OK


def _to_uint8_minmax(image):
    lo, hi = float(image.min()), float(image.max())
    if hi == lo:
        return np.zeros(image.shape, dtype=np.uint8)
    return np.rint((image - lo) / (hi - lo) * 255.0).astype(np.uint8)


def cmd_export(args):
    if args.recon:
        kspace, _ = _load_dataset(args.recon)
        if not 0 <= args.slice < len(kspace):
            raise DataValidationError(f"slice {args.slice} out of range for {len(kspace)} slices")
        grid = _load_mask_grid(args.mask, kspace.shape[1:]) if args.mask else np.ones(kspace.shape[1:])
        image = _to_uint8_minmax(zero_fill_reconstruct(kspace[args.slice], grid))
    else:
        grid = _load_mask_grid(args.mask)
        image = np.rint(grid * 255.0).astype(np.uint8)
    io.write_pgm(args.out, image)
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="prommask", description="Learn and evaluate k-space undersampling masks.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    # lets -v also follow the subcommand without resetting a count given before it
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom-gen", parents=[common], help="write a synthetic phantom dataset (PKSP + targets)")
    p.add_argument("--family", choices=sorted(FAMILIES), default="shepp-logan")
    p.add_argument("--count", type=int, default=16)
    p.add_argument("--size", type=_size, default=(64, 64), metavar="HxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_phantom_gen)

    p = sub.add_parser("optimize", parents=[common], help="learn a mask from a PKSP dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--config", help="key=value run configuration; defaults if omitted")
    p.add_argument("--runs", type=int, help="override num_runs from the config")
    p.add_argument("--out-mask", required=True)
    p.add_argument("--trace", help="CSV with iteration,loss,sum_theta,S,tau")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("baseline", parents=[common], help="write an equispaced or Gaussian mask")
    p.add_argument("--kind", choices=("equispaced", "gaussian"), required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--size", type=_size, required=True, metavar="HxW")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--center-frac", type=float, default=DEFAULT_CENTER_FRACTION)
    p.add_argument("--sigma-frac", type=float, default=DEFAULT_SIGMA_FRACTION)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("evaluate", parents=[common], help="zero-fill reconstruct under a mask and score every slice")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--metrics", default="psnr,ssim,nmse")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("export", parents=[common], help="render a mask or a reconstruction as 8-bit PGM")
    p.add_argument("--mask", help="mask to render, or to apply with --recon")
    p.add_argument("--recon", metavar="PKSP", help="reconstruct a slice of this dataset instead")
    p.add_argument("--slice", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "export" and not (args.mask or args.recon):
        parser.error("export needs --mask and/or --recon")
    logging.basicConfig(
        level=(logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"prommask: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataValidationError, UndefinedMetricError, OSError) as exc:
        print(f"prommask: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalFailureError as exc:
        print(f"prommask: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
